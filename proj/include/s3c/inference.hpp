#ifndef S3C_INFERENCE_HPP
#define S3C_INFERENCE_HPP

#include <string_view>
#include <vector>

#include "s3c/model.hpp"

namespace s3c {

enum class SlabMode { heuristic, conjugate_gradient };

std::string_view to_string(SlabMode mode);
SlabMode slab_mode_from_string(std::string_view name);

struct InferenceConfig {
  double rho = 0.5;      // reflection clip coefficient, [0, 1]
  double eta_s = 0.5;    // damping of the slab update, (0, 1]
  double eta_h = 0.5;    // damping of the spike update, (0, 1]
  int max_iters = 50;
  SlabMode s_mode = SlabMode::heuristic;
  int cg_max_steps = 20;
  // Per-example early stop once |ELBO gain| < elbo_tol. Zero disables it.
  double elbo_tol = 1e-6;
  bool record_trace = true;
  // Disabling reflection clipping is only useful for regression tests.
  bool clip = true;
  int workers = 1;

  bool operator==(const InferenceConfig&) const = default;
};

void validate(const InferenceConfig& cfg);

/// Mean-field parameters, one row per example.
///   Q(h_i = 1) = h_hat_i
///   Q(s_i | h_i) = N(h_i s_hat_i, 1 / (alpha_i + h_i W_i^T beta W_i))
struct VariationalState {
  Matrix h_hat;  // M x N, strictly inside (0, 1)
  Matrix s_hat;  // M x N
};

struct InferenceTrace {
  std::vector<double> elbo;      // batch-mean ELBO, index 0 is the initial Q
  std::vector<double> sparsity;  // fraction of h_hat < 0.01
  // Number of (example, iteration) pairs in which the ELBO went down.
  Index decreases = 0;
};

struct EStepResult {
  VariationalState q;
  InferenceTrace trace;
  Vector elbo;                  // final per-example ELBO
  std::vector<int> iterations;  // iterations run per example
};

inline constexpr double kSpikeFloor = 1e-7;
inline constexpr double kSparseThreshold = 0.01;

/// Quantities shared by every example in a batch; computed once per E-step.
struct UnitTerms {
  Matrix beta_W;  // diag(beta) W, D x N
  Vector wbw;     // W_i^T beta W_i
  Vector gamma;   // alpha_i + W_i^T beta W_i, the h_i = 1 slab precision
  Vector half_log_ratio;  // 0.5 log(alpha_i) - 0.5 log(gamma_i)

  explicit UnitTerms(const ModelParams& params);
};

VariationalState init_q(const ModelParams& params, Index m);

Vector s_star(const ModelParams& params, const VectorRef& v, const VectorRef& h_hat,
              const VectorRef& s_hat);

// sign(0) counts as positive.
Vector clip_reflections(const VectorRef& s_star, const VectorRef& s_prev, double rho);

Vector damp(const VectorRef& updated, const VectorRef& old, double eta);

/// Spike update; s_hat must already hold the new slab means while h_hat
/// holds the previous spike probabilities.
Vector h_star(const ModelParams& params, const VectorRef& v, const VectorRef& h_hat,
              const VectorRef& s_hat);

/// Energy functional E_Q[log p(v, s, h)] + H(Q) for one example.
double elbo(const ModelParams& params, const VectorRef& v, const VectorRef& h_hat,
            const VectorRef& s_hat);

/// Gradient of the ELBO with respect to s_hat (h_hat fixed).
Vector elbo_grad_s(const ModelParams& params, const VectorRef& v, const VectorRef& h_hat,
                   const VectorRef& s_hat);

/// Product of the KL Hessian in s_hat with x, without forming the Hessian:
///   H x = h o gamma o x + h o (W^T beta W (h o x)) - h^2 o wbw o x
Vector slab_hessian_product(const ModelParams& params, const VectorRef& h_hat,
                            const VectorRef& x);

/// Jacobi-preconditioned conjugate gradient on the quadratic KL terms in s_hat.
/// Every step is an exact line search, so the KL never increases.
Vector cg_s_update(const ModelParams& params, const VectorRef& v, const VectorRef& h_hat,
                   const VectorRef& s_hat, int cg_max_steps);

/// Full parallel damped fixed-point E-step over a batch (rows are examples).
/// Examples are processed independently; the outcome for a row never depends
/// on the rest of the batch or on the worker count.
EStepResult e_step(const ModelParams& params, const MatrixRef& batch,
                   const InferenceConfig& cfg);

// Row kernels used by e_step; exposed so callers holding UnitTerms avoid
// recomputing them.
namespace kernel {
Vector s_star(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
              const VectorRef& h_hat, const VectorRef& s_hat);
Vector h_star(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
              const VectorRef& h_hat, const VectorRef& s_hat);
double elbo(const ModelParams& p, const UnitTerms& t, const VectorRef& v,
            const VectorRef& h_hat, const VectorRef& s_hat);
Vector grad_s(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
              const VectorRef& h_hat, const VectorRef& s_hat);
Vector hessian_product(const ModelParams& p, const UnitTerms& t, const VectorRef& h_hat,
                       const VectorRef& x);
Vector cg_s_update(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
                   const VectorRef& h_hat, const VectorRef& s_hat, int max_steps);
}  // namespace kernel

}  // namespace s3c

#endif  // S3C_INFERENCE_HPP
