#include "s3c/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "s3c/error.hpp"
#include "s3c/parallel.hpp"
#include "s3c/rng.hpp"

namespace s3c {

void validate(const TrainConfig& cfg) {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidConfig, what); };
  if (cfg.batch_size < 1) bad("batch_size must be >= 1");
  if (cfg.epochs < 0) bad("epochs must be >= 0");
  const auto& lr = cfg.learning_rates;
  for (double rate : {lr.W, lr.b, lr.mu, lr.alpha, lr.beta}) {
    if (!(rate > 0.0) || !std::isfinite(rate)) bad("learning rates must be positive");
  }
  if (!(cfg.alpha_beta_floor > 0.0)) bad("alpha_beta_floor must be positive");
  validate(cfg.inference);
}

FrozenQ FrozenQ::freeze(const ModelParams& p, const VariationalState& q) {
  const UnitTerms t(p);
  return {q.h_hat, q.s_hat, t.gamma.cwiseInverse(), p.alpha.cwiseInverse()};
}

namespace {

void check_batch(const ModelParams& p, const MatrixRef& batch, const FrozenQ& q) {
  if (batch.cols() != p.D() || q.h_hat.rows() != batch.rows() || q.s_hat.rows() != batch.rows() ||
      q.h_hat.cols() != p.N() || q.s_hat.cols() != p.N() || q.on_var.size() != p.N() ||
      q.off_var.size() != p.N()) {
    fail(ErrorCode::DimensionMismatch, "M-step: batch, Q and model dimensions disagree");
  }
}

ParamGradients zero_gradients(Index D, Index N) {
  return {Matrix::Zero(D, N), Vector::Zero(N), Vector::Zero(N), Vector::Zero(N),
          Vector::Zero(D)};
}

constexpr Index kReductionChunk = 256;

}  // namespace

double m_step_objective(const ModelParams& p, const MatrixRef& batch, const FrozenQ& q) {
  check_batch(p, batch, q);
  const Index M = batch.rows();
  const Index N = p.N();
  const Vector wbw = p.W.cwiseAbs2().transpose() * p.beta;
  double log_norm_v = 0.0;
  for (Index d = 0; d < p.D(); ++d) log_norm_v += 0.5 * (std::log(p.beta[d]) - kLog2Pi);

  double total = 0.0;
  for (Index r = 0; r < M; ++r) {
    const Vector h = q.h_hat.row(r).transpose();
    const Vector s = q.s_hat.row(r).transpose();
    const Vector hs = h.cwiseProduct(s);
    const Vector resid = batch.row(r).transpose() - p.W * hs;
    double f = log_norm_v - 0.5 * resid.dot(p.beta.cwiseProduct(resid));
    for (Index i = 0; i < N; ++i) {
      const double var_hs = h[i] * (s[i] * s[i] + q.on_var[i]) - hs[i] * hs[i];
      const double dm = s[i] - p.mu[i];
      f += -0.5 * wbw[i] * var_hs;
      f += h[i] * log_sigmoid(p.b[i]) + (1.0 - h[i]) * log_sigmoid(-p.b[i]);
      f += 0.5 * (std::log(p.alpha[i]) - kLog2Pi) -
           0.5 * p.alpha[i] * (h[i] * (dm * dm + q.on_var[i]) + (1.0 - h[i]) * q.off_var[i]);
      f += binary_entropy(h[i]) + h[i] * 0.5 * (kLog2Pi + 1.0 + std::log(q.on_var[i])) +
           (1.0 - h[i]) * 0.5 * (kLog2Pi + 1.0 + std::log(q.off_var[i]));
    }
    total += f;
  }
  return total / static_cast<double>(M);
}

ParamGradients m_step_gradients(const ModelParams& p, const MatrixRef& batch, const FrozenQ& q,
                                int workers) {
  check_batch(p, batch, q);
  const Index M = batch.rows();
  const Index D = p.D();
  const Index N = p.N();
  if (M == 0) fail(ErrorCode::EmptyDataset, "M-step on an empty batch");

  const Index chunks = (M + kReductionChunk - 1) / kReductionChunk;
  // Per-chunk partial sums; dW holds R^T (h o s) and dbeta holds -0.5 sum R^2
  // until the final assembly. var_sums collects sum_r Var_Q[h_i s_i].
  std::vector<ParamGradients> partial(static_cast<std::size_t>(chunks), zero_gradients(D, N));
  std::vector<Vector> var_sums(static_cast<std::size_t>(chunks), Vector::Zero(N));
  const Vector prior_on = p.b.unaryExpr([](double x) { return sigmoid(x); });

  parallel_for(chunks, workers, [&](Index begin, Index end) {
    for (Index c = begin; c < end; ++c) {
      const Index r0 = c * kReductionChunk;
      const Index rows = std::min(kReductionChunk, M - r0);
      const Matrix H = q.h_hat.middleRows(r0, rows);
      const Matrix S = q.s_hat.middleRows(r0, rows);
      const Matrix HS = H.cwiseProduct(S);
      const Matrix R = batch.middleRows(r0, rows) - HS * p.W.transpose();
      const Matrix dev = S.rowwise() - p.mu.transpose();
      const Matrix var_hs =
          (H.array() * (S.array().square().rowwise() + q.on_var.transpose().array()) -
           HS.array().square())
              .matrix();

      auto& g = partial[static_cast<std::size_t>(c)];
      g.dW = R.transpose() * HS;
      g.db = (H.colwise().sum().transpose() - static_cast<double>(rows) * prior_on);
      g.dmu = H.cwiseProduct(dev).colwise().sum().transpose();
      const Matrix slab_sq =
          (H.array() * (dev.array().square().rowwise() + q.on_var.transpose().array()) +
           (1.0 - H.array()).rowwise() * q.off_var.transpose().array())
              .matrix();
      g.dalpha = slab_sq.colwise().sum().transpose();
      g.dbeta = -0.5 * R.cwiseAbs2().colwise().sum().transpose();
      var_sums[static_cast<std::size_t>(c)] = var_hs.colwise().sum().transpose();
    }
  });

  ParamGradients sum = zero_gradients(D, N);
  Vector var_sum = Vector::Zero(N);
  for (Index c = 0; c < chunks; ++c) {
    const auto& g = partial[static_cast<std::size_t>(c)];
    sum.dW += g.dW;
    sum.db += g.db;
    sum.dmu += g.dmu;
    sum.dalpha += g.dalpha;
    sum.dbeta += g.dbeta;
    var_sum += var_sums[static_cast<std::size_t>(c)];
  }

  const double inv_m = 1.0 / static_cast<double>(M);
  ParamGradients out;
  out.dW = p.beta.asDiagonal() * (sum.dW - p.W * var_sum.asDiagonal()) * inv_m;
  out.db = sum.db * inv_m;
  out.dmu = p.alpha.cwiseProduct(sum.dmu) * inv_m;
  out.dalpha = 0.5 * p.alpha.cwiseInverse() - 0.5 * inv_m * sum.dalpha;
  out.dbeta = 0.5 * p.beta.cwiseInverse() + inv_m * sum.dbeta -
              0.5 * inv_m * (p.W.cwiseAbs2() * var_sum);
  if (p.beta_tied) out.dbeta.setConstant(out.dbeta.sum());

  if (!out.dW.allFinite() || !out.db.allFinite() || !out.dmu.allFinite() ||
      !out.dalpha.allFinite() || !out.dbeta.allFinite()) {
    throw NumericalDivergence(0, -1, "m_step_gradients");
  }
  return out;
}

ParamGradients m_step_gradients(const ModelParams& p, const MatrixRef& batch,
                                const VariationalState& q, int workers) {
  return m_step_gradients(p, batch, FrozenQ::freeze(p, q), workers);
}

ModelParams apply_m_step(const ModelParams& p, const ParamGradients& g, const LearningRates& lr,
                         double floor) {
  if (g.dW.rows() != p.D() || g.dW.cols() != p.N() || g.db.size() != p.N() ||
      g.dmu.size() != p.N() || g.dalpha.size() != p.N() || g.dbeta.size() != p.D()) {
    fail(ErrorCode::DimensionMismatch, "apply_m_step: gradient shapes do not match model");
  }
  ModelParams next = p;
  next.W += lr.W * g.dW;
  for (Index j = 0; j < next.N(); ++j) {
    const double norm = next.W.col(j).norm();
    if (!(norm > 1e-150) || !std::isfinite(norm)) {
      fail(ErrorCode::ZeroColumn, "ZeroColumn(" + std::to_string(j) + ")");
    }
    next.W.col(j) /= norm;
  }
  next.b += lr.b * g.db;
  next.mu += lr.mu * g.dmu;
  next.alpha = (next.alpha + lr.alpha * g.dalpha).cwiseMax(floor);
  next.beta = (next.beta + lr.beta * g.dbeta).cwiseMax(floor);
  if (next.beta_tied) next.beta.setConstant(next.beta.mean());
  require_valid(next);
  return next;
}

ModelParams random_init(const RandomInit& spec) {
  if (spec.D < 1 || spec.N < 1) fail(ErrorCode::InvalidConfig, "random_init: D and N must be >= 1");
  if (!(spec.target_sparsity > 0.0 && spec.target_sparsity < 1.0)) {
    fail(ErrorCode::InvalidConfig, "random_init: target_sparsity must lie in (0, 1)");
  }
  Rng rng(spec.seed);
  Matrix W(spec.D, spec.N);
  for (Index j = 0; j < spec.N; ++j) {
    do {
      for (Index d = 0; d < spec.D; ++d) W(d, j) = rng.normal();
    } while (W.col(j).norm() < 1e-12);
    W.col(j).normalize();
  }
  ModelParams p = make_params(std::move(W), logit(spec.target_sparsity), 1.0, 1.0, 1.0);
  p.beta_tied = spec.beta_tied;
  return p;
}

TrainResult train_em(const MatrixRef& data, const TrainConfig& cfg, const TrainInit& init,
                     const std::function<void(const TrainRecord&)>& on_step) {
  validate(cfg);
  TrainResult result;
  result.params = std::holds_alternative<ModelParams>(init)
                      ? std::get<ModelParams>(init)
                      : random_init(std::get<RandomInit>(init));
  require_valid(result.params);
  const Index M = data.rows();
  if (M == 0) fail(ErrorCode::EmptyDataset, "train_em: no training examples");
  if (data.cols() != result.params.D()) {
    fail(ErrorCode::DimensionMismatch, "train_em: data has " + std::to_string(data.cols()) +
                                           " columns, model expects " +
                                           std::to_string(result.params.D()));
  }

  const auto start = std::chrono::steady_clock::now();
  std::vector<Index> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(cfg.seed, 0x5eed);
  InferenceConfig icfg = cfg.inference;
  icfg.record_trace = false;

  Index step = 0;
  Matrix batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (Index first = 0; first < M; first += cfg.batch_size) {
      const Index rows = std::min(cfg.batch_size, M - first);
      batch.resize(rows, data.cols());
      for (Index r = 0; r < rows; ++r) batch.row(r) = data.row(order[static_cast<std::size_t>(first + r)]);

      try {
        const EStepResult e = e_step(result.params, batch, icfg);
        const ParamGradients g = m_step_gradients(result.params, batch, e.q, icfg.workers);
        TrainRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.batch_elbo = e.elbo.mean();
        rec.sparsity = static_cast<double>((e.q.h_hat.array() < kSparseThreshold).count()) /
                       static_cast<double>(e.q.h_hat.size());
        rec.mean_h = e.q.h_hat.mean();
        result.params = apply_m_step(result.params, g, cfg.learning_rates, cfg.alpha_beta_floor);
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(rec);
        if (on_step) on_step(rec);
      } catch (const NumericalDivergence& err) {
        throw NumericalDivergence(step, err.unit(), std::string("train_em step ") +
                                                        std::to_string(step) + " (" +
                                                        err.what() + ")");
      }
      ++step;
    }
  }
  return result;
}

}  // namespace s3c
