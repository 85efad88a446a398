#ifndef S3C_LEARNING_HPP
#define S3C_LEARNING_HPP

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "s3c/inference.hpp"
#include "s3c/model.hpp"

namespace s3c {

struct LearningRates {
  double W = 1e-2;
  double b = 1e-2;
  double mu = 1e-2;
  double alpha = 1e-3;
  double beta = 1e-3;

  bool operator==(const LearningRates&) const = default;
};

struct TrainConfig {
  Index batch_size = 100;
  int epochs = 1;
  LearningRates learning_rates;
  InferenceConfig inference;
  std::uint64_t seed = 0;
  double alpha_beta_floor = 1e-8;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

struct ParamGradients {
  Matrix dW;
  Vector db;
  Vector dmu;
  Vector dalpha;
  Vector dbeta;
};

/// Q held fixed for the M-step: the spike/slab means plus the slab variances
/// evaluated once at the pre-step parameters.
struct FrozenQ {
  Matrix h_hat;
  Matrix s_hat;
  Vector on_var;   // 1 / (alpha_i + W_i^T beta W_i)
  Vector off_var;  // 1 / alpha_i

  static FrozenQ freeze(const ModelParams& params, const VariationalState& q);
};

/// Batch-mean energy functional as a function of the parameters with Q frozen
/// (the entropy of Q is a constant and is included for comparability).
double m_step_objective(const ModelParams& params, const MatrixRef& batch, const FrozenQ& q);

/// Gradient of m_step_objective. In beta-tied mode every entry of dbeta holds
/// the derivative with respect to the shared precision.
ParamGradients m_step_gradients(const ModelParams& params, const MatrixRef& batch,
                                const FrozenQ& q, int workers = 1);
ParamGradients m_step_gradients(const ModelParams& params, const MatrixRef& batch,
                                const VariationalState& q, int workers = 1);

/// Gradient ascent step, unit-norm projection of W, precision floor.
ModelParams apply_m_step(const ModelParams& params, const ParamGradients& grads,
                         const LearningRates& rates, double floor);

struct RandomInit {
  Index D = 0;
  Index N = 0;
  double target_sparsity = 0.05;
  bool beta_tied = false;
  std::uint64_t seed = 0;
};

ModelParams random_init(const RandomInit& spec);

struct TrainRecord {
  Index step = 0;
  int epoch = 0;
  double batch_elbo = 0.0;
  double sparsity = 0.0;     // fraction of h_hat < 0.01
  double mean_h = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainRecord> log;
};

using TrainInit = std::variant<ModelParams, RandomInit>;

/// Minibatch variational EM: for each minibatch an E-step, then one gradient
/// step on the energy functional. The shuffle order is fixed by cfg.seed.
TrainResult train_em(const MatrixRef& data, const TrainConfig& cfg, const TrainInit& init,
                     const std::function<void(const TrainRecord&)>& on_step = {});

}  // namespace s3c

#endif  // S3C_LEARNING_HPP
