#include "s3c/cli.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json_codec.hpp"
#include "s3c/archive.hpp"
#include "s3c/classify.hpp"
#include "s3c/config.hpp"
#include "s3c/error.hpp"
#include "s3c/learning.hpp"
#include "s3c/oracle.hpp"
#include "s3c/parallel.hpp"
#include "s3c/pipeline.hpp"
#include "s3c/rng.hpp"

namespace s3c {

namespace fs = std::filesystem;
using detail::json;

namespace {

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::string escaped;
  for (char c : text) {
    if (c == '"' || c == '\\') escaped.push_back('\\');
    escaped.push_back(c);
  }
  return escaped;
}

void report(std::ostream& err, std::string_view code, const std::string& message) {
  err << "s3c: error code=" << code << " message=\"" << one_line(message) << "\"\n";
}

struct Common {
  std::string config_path;
  std::optional<int> workers;

  RunConfig config() const {
    return config_path.empty() ? RunConfig{} : load_run_config(config_path);
  }
  int worker_count() const { return resolve_workers(workers); }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--workers", c.workers, "worker threads (default: S3C_WORKERS or all cores)")
      ->check(CLI::PositiveNumber);
}

// Config precedence: explicit --config, then the archive, then defaults.
InferenceConfig inference_for(const Common& c, const ModelArchive& a) {
  InferenceConfig cfg;
  if (!c.config_path.empty()) {
    cfg = c.config().train.inference;
  } else if (a.inference) {
    cfg = *a.inference;
  }
  cfg.workers = c.worker_count();
  return cfg;
}

PoolingConfig pooling_for(const Common& c, const ModelArchive& a) {
  if (!c.config_path.empty()) return c.config().pooling;
  return a.pooling.value_or(PoolingConfig{});
}

void write_effective_config(const fs::path& path, RunConfig cfg, const std::string& data,
                            const std::string& out) {
  cfg.data_path = data;
  cfg.out_path = out;
  save_run_config(path, cfg);
}

fs::path sidecar(const fs::path& out, const std::string& suffix) {
  return fs::path(out.string() + suffix);
}

std::vector<fs::path> list_images(const fs::path& path) {
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".png" || ext == ".s3ci")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorCode::EmptyDataset, "no .png or .s3ci images in " + path.string());
  return files;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data, out, whitening, init;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = a.common.config();
  TrainConfig tc = cfg.train;
  tc.inference.workers = a.common.worker_count();

  Matrix data = load_matrix(a.data);
  std::optional<WhiteningTransform> whitening;
  if (!a.whitening.empty()) {
    whitening = load_whitening(a.whitening);
    data = preprocess_patches(*whitening, data);
  }
  TrainInit init = RandomInit{data.cols(), cfg.units, cfg.target_sparsity, cfg.beta_tied, tc.seed};
  if (!a.init.empty()) init = load_model(a.init).params;

  fs::create_directories(a.out);
  std::ofstream log(fs::path(a.out) / "train_log.jsonl");
  const TrainResult res = train_em(data, tc, init, [&](const TrainRecord& r) {
    log << json{{"step", r.step},
                {"epoch", r.epoch},
                {"batch_elbo", r.batch_elbo},
                {"sparsity", r.sparsity},
                {"mean_h", r.mean_h},
                {"wall_seconds", r.wall_seconds}}
               .dump()
        << "\n";
  });

  InferenceConfig stored = cfg.train.inference;
  save_model(a.out, ModelArchive{res.params, whitening, cfg.pooling, stored});
  write_effective_config(fs::path(a.out) / "effective_config.json", cfg, a.data, a.out);
  out << "trained " << res.log.size() << " steps; model written to " << a.out << "\n";
  return kExitOk;
}

// --- sample ----------------------------------------------------------------

struct SampleArgs {
  Common common;
  std::string model, out;
  Index n = 1;
  std::uint64_t seed = 0;
  bool latents = false;
  bool f32 = false;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const ModelArchive archive = load_model(a.model);
  const AncestralSample s = sample_ancestral(archive.params, a.seed, a.n, a.common.worker_count());
  auto save = [&](const fs::path& path, const Matrix& m) {
    a.f32 ? save_matrix_f32(path, m) : save_matrix(path, m);
  };
  save(a.out, s.V);
  if (a.latents) {
    save(sidecar(a.out, ".h.s3cd"), s.H);
    save(sidecar(a.out, ".s.s3cd"), s.S);
  }
  out << "sampled " << a.n << " examples to " << a.out << "\n";
  return kExitOk;
}

// --- infer -----------------------------------------------------------------

struct InferArgs {
  Common common;
  std::string model, data, out;
  bool trace = false;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const ModelArchive archive = load_model(a.model);
  InferenceConfig cfg = inference_for(a.common, archive);
  cfg.record_trace = a.trace;
  const Matrix data = load_matrix(a.data);
  const EStepResult res = e_step(archive.params, data, cfg);
  save_matrix(a.out, res.q.h_hat);
  save_matrix(sidecar(a.out, ".s_hat.s3cd"), res.q.s_hat);
  if (a.trace) {
    std::ofstream trace(sidecar(a.out, ".trace.jsonl"));
    for (std::size_t k = 0; k < res.trace.elbo.size(); ++k) {
      trace << json{{"iteration", k},
                    {"elbo", res.trace.elbo[k]},
                    {"sparsity", res.trace.sparsity[k]}}
                   .dump()
            << "\n";
    }
    out << "elbo decreases: " << res.trace.decreases << "\n";
  }
  out << "inferred " << data.rows() << " examples, mean ELBO " << res.elbo.mean() << "\n";
  return kExitOk;
}

// --- extract-patches / fit-whitening -----------------------------------------

struct PatchArgs {
  Common common;
  std::string images, out;
  Index patch_size = 6, stride = 1, per_image = 0;
  std::uint64_t seed = 0;
};

int cmd_extract_patches(const PatchArgs& a, std::ostream& out) {
  std::vector<Matrix> blocks;
  Index total = 0;
  const auto files = list_images(a.images);
  for (std::size_t k = 0; k < files.size(); ++k) {
    Matrix patches = extract_patches(load_image(files[k]), a.patch_size, a.stride);
    if (a.per_image > 0 && a.per_image < patches.rows()) {
      std::vector<Index> rows(static_cast<std::size_t>(patches.rows()));
      std::iota(rows.begin(), rows.end(), Index{0});
      Rng rng(a.seed, k);
      std::shuffle(rows.begin(), rows.end(), rng.engine());
      rows.resize(static_cast<std::size_t>(a.per_image));
      std::sort(rows.begin(), rows.end());
      Matrix picked(a.per_image, patches.cols());
      for (Index r = 0; r < a.per_image; ++r) picked.row(r) = patches.row(rows[static_cast<std::size_t>(r)]);
      patches = std::move(picked);
    }
    total += patches.rows();
    blocks.push_back(std::move(patches));
  }
  Matrix all(total, blocks.front().cols());
  Index at = 0;
  for (const auto& b : blocks) {
    all.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  save_matrix(a.out, all);
  out << "extracted " << total << " patches from " << files.size() << " images\n";
  return kExitOk;
}

struct WhitenArgs {
  Common common;
  std::string patches, out, whitened_out;
  std::optional<double> epsilon;
  bool no_contrast = false;
};

int cmd_fit_whitening(const WhitenArgs& a, std::ostream& out) {
  const RunConfig cfg = a.common.config();
  const Matrix raw = load_matrix(a.patches);
  Matrix rows = raw;
  double cn_eps = 0.0;
  if (!a.no_contrast) {
    cn_eps = default_cn_epsilon(raw);
    out << "contrast normalization epsilon " << cn_eps << "\n";
    rows = contrast_normalize(raw, cn_eps);
  }
  WhiteningTransform t = fit_zca(rows, a.epsilon.value_or(cfg.zca_epsilon));
  t.contrast_normalize = !a.no_contrast;
  t.cn_epsilon = cn_eps;
  save_whitening(a.out, t);
  if (!a.whitened_out.empty()) save_matrix(a.whitened_out, preprocess_patches(t, raw));
  out << "whitening for " << raw.cols() << "-dimensional patches written to " << a.out << "\n";
  return kExitOk;
}

// --- extract-features --------------------------------------------------------

struct FeatureArgs {
  Common common;
  std::string model, images, out;
};

int cmd_extract_features(const FeatureArgs& a, std::ostream& out) {
  const ModelArchive archive = load_model(a.model);
  if (!archive.whitening) {
    fail(ErrorCode::InvalidConfig, "model archive " + a.model + " has no whitening transform");
  }
  const InferenceConfig cfg = inference_for(a.common, archive);
  const PoolingConfig pooling = pooling_for(a.common, archive);
  const auto files = list_images(a.images);
  Matrix features;
  for (std::size_t k = 0; k < files.size(); ++k) {
    const Vector f =
        extract_image_features(archive.params, *archive.whitening, load_image(files[k]), pooling, cfg);
    if (k == 0) features.resize(static_cast<Index>(files.size()), f.size());
    if (f.size() != features.cols()) {
      fail(ErrorCode::DimensionMismatch, "image " + files[k].string() + " yields a different feature length");
    }
    features.row(static_cast<Index>(k)) = f.transpose();
  }
  save_matrix(a.out, features);
  out << "features " << features.rows() << " x " << features.cols() << " written to " << a.out << "\n";
  return kExitOk;
}

// --- classify ------------------------------------------------------------------

struct ClassifyArgs {
  Common common;
  std::string features, labels, out, model;
  std::optional<double> lambda;
};

double select_lambda(const Matrix& X, const std::vector<int>& y, const SvmOptions& base,
                     std::ostream& out) {
  const Index M = X.rows();
  if (M < 5) return base.lambda;
  std::vector<Index> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(base.seed, 0xc1a55);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const Index n_val = std::max<Index>(1, M / 5);
  const Index n_fit = M - n_val;
  Matrix Xf(n_fit, X.cols()), Xv(n_val, X.cols());
  std::vector<int> yf, yv;
  for (Index r = 0; r < M; ++r) {
    const Index src = order[static_cast<std::size_t>(r)];
    if (r < n_fit) {
      Xf.row(r) = X.row(src);
      yf.push_back(y[static_cast<std::size_t>(src)]);
    } else {
      Xv.row(r - n_fit) = X.row(src);
      yv.push_back(y[static_cast<std::size_t>(src)]);
    }
  }
  SvmOptions opts = base;
  opts.num_classes = *std::max_element(y.begin(), y.end()) + 1;
  double best = base.lambda;
  double best_acc = -1.0;
  for (double lambda : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    opts.lambda = lambda;
    const double acc = accuracy(svm_predict(svm_train(Xf, yf, opts), Xv), yv);
    out << "lambda " << lambda << " validation accuracy " << acc << "\n";
    if (acc > best_acc) {
      best_acc = acc;
      best = lambda;
    }
  }
  return best;
}

int cmd_classify_train(const ClassifyArgs& a, std::ostream& out) {
  const RunConfig cfg = a.common.config();
  const Matrix X = load_matrix(a.features);
  const std::vector<int> y = load_labels(a.labels);
  SvmOptions opts;
  opts.epochs = cfg.svm_epochs;
  opts.seed = cfg.train.seed;
  opts.workers = a.common.worker_count();
  if (a.lambda) {
    opts.lambda = *a.lambda;
  } else if (cfg.svm_lambda > 0.0) {
    opts.lambda = cfg.svm_lambda;
  } else {
    opts.lambda = select_lambda(X, y, opts, out);
  }
  const LinearModel model = svm_train(X, y, opts);
  save_classifier(a.out, model);
  write_effective_config(sidecar(a.out, ".config.json"), cfg, a.features, a.out);
  out << "lambda " << opts.lambda << " training accuracy " << accuracy(svm_predict(model, X), y)
      << "\n";
  return kExitOk;
}

int cmd_classify_predict(const ClassifyArgs& a, std::ostream& out) {
  const LinearModel model = load_classifier(a.model);
  const Matrix X = load_matrix(a.features);
  const std::vector<int> predicted = svm_predict(model, X);
  save_labels(a.out, predicted);
  if (!a.labels.empty()) out << "accuracy " << accuracy(predicted, load_labels(a.labels)) << "\n";
  out << "predicted " << predicted.size() << " labels to " << a.out << "\n";
  return kExitOk;
}

// --- oracle ---------------------------------------------------------------------

struct OracleArgs {
  Common common;
  std::string model, data, out;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out) {
  const ModelArchive archive = load_model(a.model);
  const ModelParams& p = archive.params;
  if (p.N() > kMaxOracleUnits) {
    fail(ErrorCode::TooManyUnits, "TooManyUnits(" + std::to_string(p.N()) +
                                      "): oracle enumeration supports at most " +
                                      std::to_string(kMaxOracleUnits) + " units");
  }
  InferenceConfig cfg = inference_for(a.common, archive);
  cfg.record_trace = false;
  const Matrix data = load_matrix(a.data);
  const EStepResult res = e_step(p, data, cfg);

  std::ofstream file;
  if (!a.out.empty()) file.open(a.out);
  std::ostream& sink = a.out.empty() ? out : file;
  double kl_sum = 0.0;
  for (Index r = 0; r < data.rows(); ++r) {
    const Vector v = data.row(r).transpose();
    const ExactPosterior post = exact_posterior(p, v);
    const Vector marg = post.spike_marginals();
    const Vector h = res.q.h_hat.row(r).transpose();
    const double kl = post.log_evidence - res.elbo[r];
    kl_sum += kl;
    sink << json{{"row", r},
                 {"log_evidence", post.log_evidence},
                 {"elbo", res.elbo[r]},
                 {"kl", kl},
                 {"exact_h", std::vector<double>(marg.data(), marg.data() + marg.size())},
                 {"q_h", std::vector<double>(h.data(), h.data() + h.size())}}
                .dump()
         << "\n";
  }
  if (!a.out.empty()) {
    out << "oracle report for " << data.rows() << " rows, mean KL "
        << kl_sum / static_cast<double>(std::max<Index>(1, data.rows())) << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spike-and-slab sparse coding: training, inference and feature extraction", "s3c"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "variational EM training on a data matrix");
  add_common(c_train, train.common);
  c_train->add_option("--data", train.data, "training matrix (S3CD or CSV)")->required();
  c_train->add_option("--out", train.out, "output model archive directory")->required();
  c_train->add_option("--whitening", train.whitening, "whitening archive applied to --data");
  c_train->add_option("--init", train.init, "initial model archive");

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "ancestral samples from a model");
  add_common(c_sample, sample.common);
  c_sample->add_option("--model", sample.model)->required();
  c_sample->add_option("--n", sample.n)->required()->check(CLI::PositiveNumber);
  c_sample->add_option("--seed", sample.seed)->required();
  c_sample->add_option("--out", sample.out)->required();
  c_sample->add_flag("--latents", sample.latents, "also write h and s matrices");
  c_sample->add_flag("--f32", sample.f32, "write float32 (S3CF) matrices");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "variational E-step on a data matrix");
  add_common(c_infer, infer.common);
  c_infer->add_option("--model", infer.model)->required();
  c_infer->add_option("--data", infer.data)->required();
  c_infer->add_option("--out", infer.out)->required();
  c_infer->add_flag("--trace", infer.trace, "write per-iteration ELBO/sparsity records");

  PatchArgs patches;
  auto* c_patches = app.add_subcommand("extract-patches", "raw patches from images");
  add_common(c_patches, patches.common);
  c_patches->add_option("--images", patches.images)->required();
  c_patches->add_option("--out", patches.out)->required();
  c_patches->add_option("--patch-size", patches.patch_size)->check(CLI::PositiveNumber);
  c_patches->add_option("--stride", patches.stride)->check(CLI::PositiveNumber);
  c_patches->add_option("--per-image", patches.per_image, "random patches kept per image (0: all)");
  c_patches->add_option("--seed", patches.seed);

  WhitenArgs whiten;
  auto* c_whiten = app.add_subcommand("fit-whitening", "contrast normalization + ZCA fit");
  add_common(c_whiten, whiten.common);
  c_whiten->add_option("--patches", whiten.patches)->required();
  c_whiten->add_option("--epsilon", whiten.epsilon);
  c_whiten->add_option("--out", whiten.out)->required();
  c_whiten->add_option("--whitened-out", whiten.whitened_out, "also write the whitened patches");
  c_whiten->add_flag("--no-contrast-normalize", whiten.no_contrast);

  FeatureArgs features;
  auto* c_features = app.add_subcommand("extract-features", "pooled E_Q[h] image features");
  add_common(c_features, features.common);
  c_features->add_option("--model", features.model)->required();
  c_features->add_option("--images", features.images, "image file or directory")->required();
  c_features->add_option("--out", features.out)->required();

  ClassifyArgs ctrain, cpredict;
  auto* c_classify = app.add_subcommand("classify", "linear one-vs-all classifier");
  c_classify->require_subcommand(1);
  auto* c_ctrain = c_classify->add_subcommand("train");
  add_common(c_ctrain, ctrain.common);
  c_ctrain->add_option("--features", ctrain.features)->required();
  c_ctrain->add_option("--labels", ctrain.labels)->required();
  c_ctrain->add_option("--out", ctrain.out)->required();
  c_ctrain->add_option("--lambda", ctrain.lambda);
  auto* c_cpredict = c_classify->add_subcommand("predict");
  add_common(c_cpredict, cpredict.common);
  c_cpredict->add_option("--model", cpredict.model)->required();
  c_cpredict->add_option("--features", cpredict.features)->required();
  c_cpredict->add_option("--out", cpredict.out)->required();
  c_cpredict->add_option("--labels", cpredict.labels, "report accuracy against these labels");

  OracleArgs oracle;
  auto* c_oracle = app.add_subcommand("oracle", "exact-enumeration report (N <= 14)");
  add_common(c_oracle, oracle.common);
  c_oracle->add_option("--model", oracle.model)->required();
  c_oracle->add_option("--data", oracle.data)->required();
  c_oracle->add_option("--out", oracle.out, "JSONL report path (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report(err, "Usage", e.what());
    return kExitValidation;
  }

  try {
    if (*c_train) return cmd_train(train, out);
    if (*c_sample) return cmd_sample(sample, out);
    if (*c_infer) return cmd_infer(infer, out);
    if (*c_patches) return cmd_extract_patches(patches, out);
    if (*c_whiten) return cmd_fit_whitening(whiten, out);
    if (*c_features) return cmd_extract_features(features, out);
    if (*c_ctrain) return cmd_classify_train(ctrain, out);
    if (*c_cpredict) return cmd_classify_predict(cpredict, out);
    if (*c_oracle) return cmd_oracle(oracle, out);
  } catch (const Error& e) {
    report(err, to_string(e.code()), e.what());
    return e.code() == ErrorCode::NumericalDivergence ? kExitDivergence : kExitValidation;
  } catch (const std::exception& e) {
    report(err, "Internal", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace s3c
