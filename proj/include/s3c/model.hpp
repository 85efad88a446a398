#ifndef S3C_MODEL_HPP
#define S3C_MODEL_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "s3c/numeric.hpp"

namespace s3c {

/// Parameters of the spike-and-slab sparse coding model:
///
///   h_i ~ Bernoulli(sigmoid(b_i))
///   s_i | h_i ~ N(h_i mu_i, 1 / alpha_i)
///   v | s, h ~ N(W (h * s), diag(beta)^-1)
///
/// W is D x N with unit-norm columns. When beta_tied is set every entry of
/// beta holds the same shared precision.
struct ModelParams {
  Matrix W;
  Vector b;
  Vector mu;
  Vector alpha;
  Vector beta;
  bool beta_tied = false;

  Index D() const { return W.rows(); }
  Index N() const { return W.cols(); }

  bool operator==(const ModelParams&) const = default;
};

enum class ParamField { W, b, mu, alpha, beta };
std::string_view to_string(ParamField field);

struct ParamViolation {
  enum class Kind { NonUnitColumn, NonPositivePrecision, NonFinite, DimensionMismatch };
  Kind kind;
  ParamField field;
  Index index;

  std::string describe() const;
};

inline constexpr double kUnitNormTolerance = 1e-10;

// First violated invariant, or nullopt when the parameters are valid.
std::optional<ParamViolation> validate_params(const ModelParams& params);

// Throws Error(InvalidParams) describing the first violation.
void require_valid(const ModelParams& params);

// Broadcasts scalar b, mu, alpha, beta over a given dictionary.
ModelParams make_params(Matrix W, double b, double mu, double alpha, double beta);

double energy(const ModelParams& params, const VectorRef& v, const VectorRef& s,
              const VectorRef& h);

/// log p(v, s, h) with all Gaussian and Bernoulli normalizers.
double log_joint(const ModelParams& params, const VectorRef& v, const VectorRef& s,
                 const VectorRef& h);

/// log_joint + energy; depends only on the parameters.
double log_normalizer(const ModelParams& params);

struct AncestralSample {
  Matrix V;  // m x D
  Matrix H;  // m x N, entries in {0, 1}
  Matrix S;  // m x N
};

/// m independent draws in topological order h -> s -> v. Row r uses the
/// random stream derived from (seed, r), so output is identical for any
/// worker count.
AncestralSample sample_ancestral(const ModelParams& params, std::uint64_t seed,
                                 Index m, int workers = 1);

struct PriorMoments {
  Vector mean_h;
  Vector mean_s;
  Vector mean_hs;
  Vector var_v;
};

PriorMoments analytic_moments(const ModelParams& params);

}  // namespace s3c

#endif  // S3C_MODEL_HPP
