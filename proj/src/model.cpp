#include "s3c/model.hpp"

#include <cmath>

#include "s3c/error.hpp"
#include "s3c/parallel.hpp"
#include "s3c/rng.hpp"

namespace s3c {

std::string_view to_string(ParamField field) {
  switch (field) {
    case ParamField::W: return "W";
    case ParamField::b: return "b";
    case ParamField::mu: return "mu";
    case ParamField::alpha: return "alpha";
    case ParamField::beta: return "beta";
  }
  return "?";
}

std::string ParamViolation::describe() const {
  const std::string f(to_string(field));
  const std::string i = std::to_string(index);
  switch (kind) {
    case Kind::NonUnitColumn: return "NonUnitColumn(" + i + ")";
    case Kind::NonPositivePrecision: return "NonPositivePrecision(" + f + ", " + i + ")";
    case Kind::NonFinite: return "NonFinite(" + f + ", " + i + ")";
    case Kind::DimensionMismatch: return "DimensionMismatch(" + f + ")";
  }
  return "?";
}

namespace {

std::optional<Index> first_non_finite(const Eigen::Ref<const Matrix>& m) {
  // column-major linear index
  for (Index k = 0; k < m.size(); ++k) {
    if (!std::isfinite(m.data()[k])) return k;
  }
  return std::nullopt;
}

}  // namespace

std::optional<ParamViolation> validate_params(const ModelParams& p) {
  using K = ParamViolation::Kind;
  const Index N = p.N();
  if (p.b.size() != N) return ParamViolation{K::DimensionMismatch, ParamField::b, 0};
  if (p.mu.size() != N) return ParamViolation{K::DimensionMismatch, ParamField::mu, 0};
  if (p.alpha.size() != N) return ParamViolation{K::DimensionMismatch, ParamField::alpha, 0};
  if (p.beta.size() != p.D()) return ParamViolation{K::DimensionMismatch, ParamField::beta, 0};

  if (auto k = first_non_finite(p.W)) return ParamViolation{K::NonFinite, ParamField::W, *k};
  if (auto k = first_non_finite(p.b)) return ParamViolation{K::NonFinite, ParamField::b, *k};
  if (auto k = first_non_finite(p.mu)) return ParamViolation{K::NonFinite, ParamField::mu, *k};
  if (auto k = first_non_finite(p.alpha)) return ParamViolation{K::NonFinite, ParamField::alpha, *k};
  if (auto k = first_non_finite(p.beta)) return ParamViolation{K::NonFinite, ParamField::beta, *k};

  for (Index j = 0; j < N; ++j) {
    if (std::abs(p.W.col(j).norm() - 1.0) > kUnitNormTolerance) {
      return ParamViolation{K::NonUnitColumn, ParamField::W, j};
    }
  }
  for (Index i = 0; i < N; ++i) {
    if (!(p.alpha[i] > 0.0)) return ParamViolation{K::NonPositivePrecision, ParamField::alpha, i};
  }
  for (Index d = 0; d < p.D(); ++d) {
    if (!(p.beta[d] > 0.0)) return ParamViolation{K::NonPositivePrecision, ParamField::beta, d};
  }
  return std::nullopt;
}

void require_valid(const ModelParams& params) {
  if (auto v = validate_params(params)) {
    fail(ErrorCode::InvalidParams, "invalid model parameters: " + v->describe());
  }
}

ModelParams make_params(Matrix W, double b, double mu, double alpha, double beta) {
  const Index D = W.rows();
  const Index N = W.cols();
  ModelParams p;
  p.W = std::move(W);
  p.b = Vector::Constant(N, b);
  p.mu = Vector::Constant(N, mu);
  p.alpha = Vector::Constant(N, alpha);
  p.beta = Vector::Constant(D, beta);
  return p;
}

namespace {

void check_state_dims(const ModelParams& p, const VectorRef& v, const VectorRef& s,
                      const VectorRef& h) {
  if (v.size() != p.D() || s.size() != p.N() || h.size() != p.N()) {
    fail(ErrorCode::DimensionMismatch,
         "expected v of length " + std::to_string(p.D()) + " and s, h of length " +
             std::to_string(p.N()));
  }
}

}  // namespace

double energy(const ModelParams& p, const VectorRef& v, const VectorRef& s,
              const VectorRef& h) {
  check_state_dims(p, v, s, h);
  const Vector resid = v - p.W * h.cwiseProduct(s);
  const double visible = 0.5 * resid.dot(p.beta.cwiseProduct(resid));
  const double slab = 0.5 * (p.alpha.array() * (s - p.mu.cwiseProduct(h)).array().square()).sum();
  return visible + slab - p.b.dot(h);
}

double log_normalizer(const ModelParams& p) {
  double z = 0.0;
  for (Index i = 0; i < p.N(); ++i) {
    z += log_sigmoid(-p.b[i]) + 0.5 * (std::log(p.alpha[i]) - kLog2Pi);
  }
  for (Index d = 0; d < p.D(); ++d) z += 0.5 * (std::log(p.beta[d]) - kLog2Pi);
  return z;
}

double log_joint(const ModelParams& p, const VectorRef& v, const VectorRef& s,
                 const VectorRef& h) {
  check_state_dims(p, v, s, h);
  double lp = 0.0;
  for (Index i = 0; i < p.N(); ++i) {
    lp += h[i] > 0.5 ? log_sigmoid(p.b[i]) : log_sigmoid(-p.b[i]);
    lp += log_normal_pdf(s[i], h[i] * p.mu[i], p.alpha[i]);
  }
  const Vector mean = p.W * h.cwiseProduct(s);
  for (Index d = 0; d < p.D(); ++d) lp += log_normal_pdf(v[d], mean[d], p.beta[d]);
  return lp;
}

AncestralSample sample_ancestral(const ModelParams& p, std::uint64_t seed, Index m,
                                 int workers) {
  require_valid(p);
  if (m < 1) fail(ErrorCode::InvalidConfig, "sample count must be >= 1");
  const Index D = p.D();
  const Index N = p.N();
  AncestralSample out{Matrix(m, D), Matrix(m, N), Matrix(m, N)};
  const Vector on_prob = p.b.unaryExpr([](double x) { return sigmoid(x); });
  const Vector slab_sd = p.alpha.cwiseSqrt().cwiseInverse();
  const Vector noise_sd = p.beta.cwiseSqrt().cwiseInverse();

  parallel_for(m, workers, [&](Index begin, Index end) {
    Vector hs(N);
    for (Index r = begin; r < end; ++r) {
      Rng rng(seed, static_cast<std::uint64_t>(r));
      for (Index i = 0; i < N; ++i) {
        const double h = rng.bernoulli(on_prob[i]) ? 1.0 : 0.0;
        const double s = h * p.mu[i] + slab_sd[i] * rng.normal();
        out.H(r, i) = h;
        out.S(r, i) = s;
        hs[i] = h * s;
      }
      const Vector mean = p.W * hs;
      for (Index d = 0; d < D; ++d) out.V(r, d) = mean[d] + noise_sd[d] * rng.normal();
    }
  });
  return out;
}

PriorMoments analytic_moments(const ModelParams& p) {
  require_valid(p);
  PriorMoments m;
  m.mean_h = p.b.unaryExpr([](double x) { return sigmoid(x); });
  m.mean_s = m.mean_h.cwiseProduct(p.mu);
  m.mean_hs = m.mean_s;
  const Vector var_hs = (m.mean_h.array() * (p.mu.array().square() + p.alpha.array().inverse()) -
                         m.mean_s.array().square())
                            .matrix();
  m.var_v = p.beta.cwiseInverse() + p.W.cwiseAbs2() * var_hs;
  return m;
}

}  // namespace s3c
