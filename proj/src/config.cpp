#include "s3c/config.hpp"

#include <fstream>
#include <sstream>

#include "json_codec.hpp"
#include "s3c/error.hpp"

namespace s3c {

namespace detail {

namespace {

template <typename T>
void read(const json& obj, const char* key, T& field, json* unused) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  const json& value = *it;
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) {
    ok = value.is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    ok = value.is_number_integer();
    if (ok && std::is_unsigned_v<T> && value.is_number_integer() && !value.is_number_unsigned()) {
      ok = value.get<std::int64_t>() >= 0;
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = value.is_number();
  } else {
    ok = value.is_string();
  }
  if (!ok) fail(ErrorCode::InvalidConfig, std::string("config key '") + key + "' has the wrong type");
  field = value.get<T>();
  if (unused) unused->erase(key);
}

}  // namespace

json inference_to_json(const InferenceConfig& c) {
  return json{{"rho", c.rho},
              {"eta_s", c.eta_s},
              {"eta_h", c.eta_h},
              {"max_iters", c.max_iters},
              {"s_mode", std::string(to_string(c.s_mode))},
              {"cg_max_steps", c.cg_max_steps},
              {"elbo_tol", c.elbo_tol},
              {"record_trace", c.record_trace},
              {"clip", c.clip}};
}

void inference_from_json(const json& obj, InferenceConfig& c, json* unused) {
  read(obj, "rho", c.rho, unused);
  read(obj, "eta_s", c.eta_s, unused);
  read(obj, "eta_h", c.eta_h, unused);
  read(obj, "max_iters", c.max_iters, unused);
  std::string mode(to_string(c.s_mode));
  read(obj, "s_mode", mode, unused);
  c.s_mode = slab_mode_from_string(mode);
  read(obj, "cg_max_steps", c.cg_max_steps, unused);
  read(obj, "elbo_tol", c.elbo_tol, unused);
  read(obj, "record_trace", c.record_trace, unused);
  read(obj, "clip", c.clip, unused);
}

json pooling_to_json(const PoolingConfig& c) {
  return json{{"patch_size", c.patch_size}, {"grid", c.grid}, {"stride", c.stride}};
}

void pooling_from_json(const json& obj, PoolingConfig& c, json* unused) {
  read(obj, "patch_size", c.patch_size, unused);
  read(obj, "grid", c.grid, unused);
  read(obj, "stride", c.stride, unused);
}

}  // namespace detail

void validate(const RunConfig& cfg) {
  validate(cfg.train);
  validate(cfg.pooling);
  if (cfg.units < 1) fail(ErrorCode::InvalidConfig, "units must be >= 1");
  if (!(cfg.target_sparsity > 0.0 && cfg.target_sparsity < 1.0)) {
    fail(ErrorCode::InvalidConfig, "target_sparsity must lie in (0, 1)");
  }
  if (!(cfg.zca_epsilon >= 0.0)) fail(ErrorCode::InvalidConfig, "zca_epsilon must be >= 0");
  if (!(cfg.svm_lambda >= 0.0)) fail(ErrorCode::InvalidConfig, "svm_lambda must be >= 0");
  if (cfg.svm_epochs < 1) fail(ErrorCode::InvalidConfig, "svm_epochs must be >= 1");
}

RunConfig run_config_from_json(std::string_view text) {
  using detail::json;
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!obj.is_object()) fail(ErrorCode::InvalidConfig, "config must be a JSON object");

  RunConfig cfg;
  json unused = obj;
  auto& t = cfg.train;
  detail::read(obj, "batch_size", t.batch_size, &unused);
  detail::read(obj, "epochs", t.epochs, &unused);
  detail::read(obj, "lr_W", t.learning_rates.W, &unused);
  detail::read(obj, "lr_b", t.learning_rates.b, &unused);
  detail::read(obj, "lr_mu", t.learning_rates.mu, &unused);
  detail::read(obj, "lr_alpha", t.learning_rates.alpha, &unused);
  detail::read(obj, "lr_beta", t.learning_rates.beta, &unused);
  detail::read(obj, "seed", t.seed, &unused);
  detail::read(obj, "alpha_beta_floor", t.alpha_beta_floor, &unused);
  detail::inference_from_json(obj, t.inference, &unused);
  detail::pooling_from_json(obj, cfg.pooling, &unused);
  detail::read(obj, "units", cfg.units, &unused);
  detail::read(obj, "target_sparsity", cfg.target_sparsity, &unused);
  detail::read(obj, "beta_tied", cfg.beta_tied, &unused);
  detail::read(obj, "zca_epsilon", cfg.zca_epsilon, &unused);
  detail::read(obj, "svm_lambda", cfg.svm_lambda, &unused);
  detail::read(obj, "svm_epochs", cfg.svm_epochs, &unused);
  detail::read(obj, "data_path", cfg.data_path, &unused);
  detail::read(obj, "out_path", cfg.out_path, &unused);
  if (!unused.empty()) {
    fail(ErrorCode::InvalidConfig, "unknown config key '" + unused.begin().key() + "'");
  }
  validate(cfg);
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  using detail::json;
  const auto& t = cfg.train;
  json obj = detail::inference_to_json(t.inference);
  obj.update(detail::pooling_to_json(cfg.pooling));
  obj["batch_size"] = t.batch_size;
  obj["epochs"] = t.epochs;
  obj["lr_W"] = t.learning_rates.W;
  obj["lr_b"] = t.learning_rates.b;
  obj["lr_mu"] = t.learning_rates.mu;
  obj["lr_alpha"] = t.learning_rates.alpha;
  obj["lr_beta"] = t.learning_rates.beta;
  obj["seed"] = t.seed;
  obj["alpha_beta_floor"] = t.alpha_beta_floor;
  obj["units"] = cfg.units;
  obj["target_sparsity"] = cfg.target_sparsity;
  obj["beta_tied"] = cfg.beta_tied;
  obj["zca_epsilon"] = cfg.zca_epsilon;
  obj["svm_lambda"] = cfg.svm_lambda;
  obj["svm_epochs"] = cfg.svm_epochs;
  obj["data_path"] = cfg.data_path;
  obj["out_path"] = cfg.out_path;
  return obj.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return run_config_from_json(buf.str());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write config " + path.string());
  out << run_config_to_json(cfg);
}

}  // namespace s3c
