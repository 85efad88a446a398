#include "s3c/oracle.hpp"

#include <cmath>
#include <limits>

#include "s3c/error.hpp"
#include "s3c/inference.hpp"
#include "s3c/rng.hpp"

namespace s3c {

namespace {

double log_sum_exp(const Vector& x) {
  const double top = x.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((x.array() - top).exp().sum());
}

}  // namespace

Vector ExactPosterior::spike_marginals() const {
  const Index N = slab_means.empty() ? 0 : slab_means.front().size();
  Vector m = Vector::Zero(N);
  for (Index c = 0; c < config_log_probs.size(); ++c) {
    const double w = std::exp(config_log_probs[c]);
    for (Index i = 0; i < N; ++i) {
      if ((c >> i) & 1) m[i] += w;
    }
  }
  return m;
}

ExactPosterior exact_posterior(const ModelParams& p, const VectorRef& v) {
  require_valid(p);
  const Index N = p.N();
  const Index D = p.D();
  if (N > kMaxOracleUnits) {
    fail(ErrorCode::TooManyUnits, "TooManyUnits(" + std::to_string(N) +
                                      "): exact enumeration supports at most " +
                                      std::to_string(kMaxOracleUnits) + " units");
  }
  if (v.size() != D) fail(ErrorCode::DimensionMismatch, "exact_posterior: v has wrong length");

  const Index configs = Index{1} << N;
  ExactPosterior post;
  post.config_log_probs.resize(configs);
  post.slab_means.resize(static_cast<std::size_t>(configs));
  post.slab_covs.resize(static_cast<std::size_t>(configs));

  double log_det_noise_cov = 0.0;  // log det(beta^-1)
  for (Index d = 0; d < D; ++d) log_det_noise_cov -= std::log(p.beta[d]);

  std::vector<Index> active;
  active.reserve(static_cast<std::size_t>(N));
  for (Index c = 0; c < configs; ++c) {
    active.clear();
    double log_prior = 0.0;
    for (Index i = 0; i < N; ++i) {
      if ((c >> i) & 1) {
        active.push_back(i);
        log_prior += log_sigmoid(p.b[i]);
      } else {
        log_prior += log_sigmoid(-p.b[i]);
      }
    }
    const Index k = static_cast<Index>(active.size());
    Matrix Wa(D, k);
    Vector alpha_a(k), mu_a(k);
    for (Index j = 0; j < k; ++j) {
      Wa.col(j) = p.W.col(active[j]);
      alpha_a[j] = p.alpha[active[j]];
      mu_a[j] = p.mu[active[j]];
    }
    // p(v | h) = N(v | Wa mu_a, beta^-1 + Wa diag(alpha_a)^-1 Wa^T), evaluated
    // through the k x k slab posterior precision (Woodbury + determinant lemma).
    const Vector e = v - Wa * mu_a;
    const Vector be = p.beta.cwiseProduct(e);
    Matrix precision = Wa.transpose() * p.beta.asDiagonal() * Wa;
    precision.diagonal() += alpha_a;
    double quad = e.dot(be);
    double log_det_cov = log_det_noise_cov;
    Vector post_mean_a = mu_a;
    Matrix post_cov_a(k, k);
    if (k > 0) {
      const Eigen::LLT<Matrix> llt(precision);
      if (llt.info() != Eigen::Success) {
        fail(ErrorCode::NumericalDivergence, "exact_posterior: slab precision not positive definite");
      }
      const Vector proj = Wa.transpose() * be;
      quad -= proj.dot(llt.solve(proj));
      const Matrix L = llt.matrixL();
      log_det_cov += 2.0 * L.diagonal().array().log().sum() - alpha_a.array().log().sum();
      post_cov_a = llt.solve(Matrix::Identity(k, k));
      post_mean_a = llt.solve(alpha_a.cwiseProduct(mu_a) + Wa.transpose() * p.beta.cwiseProduct(v));
    }
    const double log_lik = -0.5 * (static_cast<double>(D) * kLog2Pi + log_det_cov + quad);
    post.config_log_probs[c] = log_prior + log_lik;

    Vector mean = Vector::Zero(N);
    Matrix cov = Matrix::Zero(N, N);
    for (Index i = 0; i < N; ++i) {
      if (!((c >> i) & 1)) cov(i, i) = 1.0 / p.alpha[i];
    }
    for (Index a = 0; a < k; ++a) {
      mean[active[a]] = post_mean_a[a];
      for (Index b = 0; b < k; ++b) cov(active[a], active[b]) = post_cov_a(a, b);
    }
    post.slab_means[static_cast<std::size_t>(c)] = std::move(mean);
    post.slab_covs[static_cast<std::size_t>(c)] = std::move(cov);
  }
  post.log_evidence = log_sum_exp(post.config_log_probs);
  post.config_log_probs.array() -= post.log_evidence;
  return post;
}

double kl_q_to_exact(const ModelParams& p, const VectorRef& v, const VectorRef& h_hat,
                     const VectorRef& s_hat) {
  const ExactPosterior post = exact_posterior(p, v);
  return post.log_evidence - elbo(p, v, h_hat, s_hat);
}

McEstimate mc_elbo_estimate(const ModelParams& p, const VectorRef& v, const VectorRef& h_hat,
                            const VectorRef& s_hat, Index n_samples, std::uint64_t seed) {
  require_valid(p);
  if (n_samples < 1) fail(ErrorCode::InvalidConfig, "mc_elbo_estimate: n_samples must be >= 1");
  if (v.size() != p.D() || h_hat.size() != p.N() || s_hat.size() != p.N()) {
    fail(ErrorCode::DimensionMismatch, "mc_elbo_estimate: dimension mismatch");
  }
  const UnitTerms t(p);
  const Index N = p.N();
  Rng rng(seed);
  Vector h(N), s(N);
  // Welford running mean / sum of squared deviations
  double mean = 0.0;
  double m2 = 0.0;
  for (Index n = 0; n < n_samples; ++n) {
    double log_q = 0.0;
    for (Index i = 0; i < N; ++i) {
      const bool on = rng.bernoulli(h_hat[i]);
      const double precision = on ? t.gamma[i] : p.alpha[i];
      const double mean = on ? s_hat[i] : 0.0;
      h[i] = on ? 1.0 : 0.0;
      s[i] = mean + rng.normal() / std::sqrt(precision);
      log_q += (on ? std::log(h_hat[i]) : std::log1p(-h_hat[i])) +
               log_normal_pdf(s[i], mean, precision);
    }
    const double x = log_joint(p, v, s, h) - log_q;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n + 1);
    m2 += delta * (x - mean);
  }
  const double n = static_cast<double>(n_samples);
  const double var = n > 1 ? m2 / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace s3c
