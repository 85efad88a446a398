#ifndef S3C_ORACLE_HPP
#define S3C_ORACLE_HPP

#include <cstdint>
#include <vector>

#include "s3c/model.hpp"

namespace s3c {

inline constexpr Index kMaxOracleUnits = 14;

/// Exact posterior by enumerating all 2^N spike configurations. Configuration
/// c has h_i = (c >> i) & 1. Given h the slab posterior is Gaussian; units
/// with h_i = 0 keep their N(0, 1/alpha_i) prior and have zero mean.
struct ExactPosterior {
  double log_evidence = 0.0;
  Vector config_log_probs;          // log p(h | v), length 2^N
  std::vector<Vector> slab_means;   // per configuration, length N
  std::vector<Matrix> slab_covs;    // per configuration, N x N

  Vector spike_marginals() const;   // p(h_i = 1 | v)
};

ExactPosterior exact_posterior(const ModelParams& params, const VectorRef& v);

/// KL(Q || p(h, s | v)) = log p(v) - ELBO(Q).
double kl_q_to_exact(const ModelParams& params, const VectorRef& v, const VectorRef& h_hat,
                     const VectorRef& s_hat);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo ELBO: mean of log p(v, s, h) - log Q(h, s) over draws from Q.
McEstimate mc_elbo_estimate(const ModelParams& params, const VectorRef& v,
                            const VectorRef& h_hat, const VectorRef& s_hat,
                            Index n_samples, std::uint64_t seed);

}  // namespace s3c

#endif  // S3C_ORACLE_HPP
