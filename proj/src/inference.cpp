#include "s3c/inference.hpp"

#include <algorithm>
#include <cmath>

#include "s3c/error.hpp"
#include "s3c/parallel.hpp"

namespace s3c {

std::string_view to_string(SlabMode mode) {
  return mode == SlabMode::heuristic ? "heuristic" : "conjugate_gradient";
}

SlabMode slab_mode_from_string(std::string_view name) {
  if (name == "heuristic") return SlabMode::heuristic;
  if (name == "conjugate_gradient") return SlabMode::conjugate_gradient;
  fail(ErrorCode::InvalidConfig, "unknown s_mode '" + std::string(name) + "'");
}

void validate(const InferenceConfig& cfg) {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidConfig, what); };
  if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) bad("rho must lie in [0, 1]");
  if (!(cfg.eta_s > 0.0 && cfg.eta_s <= 1.0)) bad("eta_s must lie in (0, 1]");
  if (!(cfg.eta_h > 0.0 && cfg.eta_h <= 1.0)) bad("eta_h must lie in (0, 1]");
  if (cfg.max_iters < 1) bad("max_iters must be >= 1");
  if (cfg.cg_max_steps < 1) bad("cg_max_steps must be >= 1");
  if (!(cfg.elbo_tol >= 0.0)) bad("elbo_tol must be >= 0");
  if (cfg.workers < 1) bad("workers must be >= 1");
}

UnitTerms::UnitTerms(const ModelParams& p)
    : beta_W(p.beta.asDiagonal() * p.W),
      wbw(p.W.cwiseProduct(beta_W).colwise().sum().transpose()),
      gamma(p.alpha + wbw),
      half_log_ratio(0.5 * (p.alpha.array().log() - gamma.array().log()).matrix()) {}

namespace {

double clamp_spike(double h) { return std::clamp(h, kSpikeFloor, 1.0 - kSpikeFloor); }

void check_row(const ModelParams& p, const VectorRef& v, const VectorRef& h,
               const VectorRef& s) {
  if (v.size() != p.D() || h.size() != p.N() || s.size() != p.N()) {
    fail(ErrorCode::DimensionMismatch, "variational row does not match model dimensions");
  }
}

// First non-finite index, or -1.
Index non_finite_index(const Vector& x) {
  for (Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) return i;
  }
  return -1;
}

}  // namespace

namespace kernel {

// W_i^T beta (v - sum_{j != i} W_j h_j s_j), realized as full sum minus own term.
static Vector others_drive(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
                           const Vector& hs) {
  const Vector recon = p.W * hs;
  return wbv - t.beta_W.transpose() * recon + t.wbw.cwiseProduct(hs);
}

Vector s_star(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
              const VectorRef& h_hat, const VectorRef& s_hat) {
  const Vector hs = h_hat.cwiseProduct(s_hat);
  const Vector drive = others_drive(p, t, wbv, hs);
  return ((p.mu.cwiseProduct(p.alpha) + drive).array() / t.gamma.array()).matrix();
}

Vector h_star(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
              const VectorRef& h_hat, const VectorRef& s_hat) {
  const Vector hs = h_hat.cwiseProduct(s_hat);
  const Vector drive = others_drive(p, t, wbv, hs);
  Vector out(p.N());
  for (Index i = 0; i < p.N(); ++i) {
    const double s = s_hat[i];
    const double dm = s - p.mu[i];
    const double arg = s * drive[i] - 0.5 * t.wbw[i] * s * s + p.b[i] -
                       0.5 * p.alpha[i] * dm * dm + t.half_log_ratio[i];
    out[i] = sigmoid(arg);
  }
  return out;
}

double elbo(const ModelParams& p, const UnitTerms& t, const VectorRef& v,
            const VectorRef& h_hat, const VectorRef& s_hat) {
  const Index N = p.N();
  const Vector hs = h_hat.cwiseProduct(s_hat);
  const Vector resid = v - p.W * hs;

  double visible = -0.5 * resid.dot(p.beta.cwiseProduct(resid));
  for (Index d = 0; d < p.D(); ++d) visible += 0.5 * (std::log(p.beta[d]) - kLog2Pi);

  double units = 0.0;
  for (Index i = 0; i < N; ++i) {
    const double h = h_hat[i];
    const double s = s_hat[i];
    const double on_var = 1.0 / t.gamma[i];
    const double off_var = 1.0 / p.alpha[i];
    // E_Q[(h s)^2] - E_Q[h s]^2
    const double var_hs = h * (s * s + on_var) - hs[i] * hs[i];
    const double dm = s - p.mu[i];
    const double slab_sq = h * (dm * dm + on_var) + (1.0 - h) * off_var;

    units += -0.5 * t.wbw[i] * var_hs;
    units += h * log_sigmoid(p.b[i]) + (1.0 - h) * log_sigmoid(-p.b[i]);
    units += 0.5 * (std::log(p.alpha[i]) - kLog2Pi) - 0.5 * p.alpha[i] * slab_sq;
    // entropy of Q(h_i, s_i)
    units += binary_entropy(h) + h * 0.5 * (kLog2Pi + 1.0 - std::log(t.gamma[i])) +
             (1.0 - h) * 0.5 * (kLog2Pi + 1.0 - std::log(p.alpha[i]));
  }
  return visible + units;
}

Vector grad_s(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
              const VectorRef& h_hat, const VectorRef& s_hat) {
  const Vector hs = h_hat.cwiseProduct(s_hat);
  const Vector drive = others_drive(p, t, wbv, hs);
  const Vector inner =
      drive + p.alpha.cwiseProduct(p.mu) - t.gamma.cwiseProduct(s_hat);
  return h_hat.cwiseProduct(inner);
}

Vector hessian_product(const ModelParams& p, const UnitTerms& t, const VectorRef& h_hat,
                       const VectorRef& x) {
  const Vector hx = h_hat.cwiseProduct(x);
  const Vector coupled = t.beta_W.transpose() * (p.W * hx);
  return (h_hat.array() * (t.gamma.array() * x.array() + coupled.array() -
                           h_hat.array() * t.wbw.array() * x.array()))
      .matrix();
}

Vector cg_s_update(const ModelParams& p, const UnitTerms& t, const VectorRef& wbv,
                   const VectorRef& h_hat, const VectorRef& s_hat, int max_steps) {
  Vector s = s_hat;
  // residual = -grad KL = grad ELBO
  Vector r = grad_s(p, t, wbv, h_hat, s);
  const Vector precond = h_hat.cwiseProduct(t.gamma).cwiseInverse();
  Vector z = precond.cwiseProduct(r);
  Vector dir = z;
  double rz = r.dot(z);
  const double rz0 = rz;
  for (int step = 0; step < max_steps; ++step) {
    if (!(rz > 1e-28 * rz0) || rz == 0.0) break;
    const Vector hd = hessian_product(p, t, h_hat, dir);
    const double curvature = dir.dot(hd);
    if (!(curvature > 0.0)) break;
    const double a = rz / curvature;
    s += a * dir;
    r -= a * hd;
    if (const Index bad = non_finite_index(s); bad >= 0) {
      throw NumericalDivergence(step, bad, "cg_s_update");
    }
    z = precond.cwiseProduct(r);
    const double rz_next = r.dot(z);
    dir = z + (rz_next / rz) * dir;
    rz = rz_next;
  }
  return s;
}

}  // namespace kernel

VariationalState init_q(const ModelParams& p, Index m) {
  const Vector h0 = p.b.unaryExpr([](double x) { return clamp_spike(sigmoid(x)); });
  VariationalState q;
  q.h_hat = h0.transpose().replicate(m, 1);
  q.s_hat = p.mu.transpose().replicate(m, 1);
  return q;
}

Vector s_star(const ModelParams& p, const VectorRef& v, const VectorRef& h_hat,
              const VectorRef& s_hat) {
  check_row(p, v, h_hat, s_hat);
  const UnitTerms t(p);
  const Vector wbv = t.beta_W.transpose() * v;
  return kernel::s_star(p, t, wbv, h_hat, s_hat);
}

Vector clip_reflections(const VectorRef& s_star, const VectorRef& s_prev, double rho) {
  if (s_star.size() != s_prev.size()) {
    fail(ErrorCode::DimensionMismatch, "clip_reflections: length mismatch");
  }
  Vector out = s_star;
  for (Index i = 0; i < s_star.size(); ++i) {
    const double prev = s_prev[i];
    // A unit sitting exactly at zero has no direction to reflect from.
    if (prev == 0.0) continue;
    const bool star_pos = s_star[i] >= 0.0;
    const bool prev_pos = prev >= 0.0;
    if (star_pos != prev_pos && std::abs(s_star[i]) > rho * std::abs(prev)) {
      out[i] = (star_pos ? 1.0 : -1.0) * rho * std::abs(prev);
    }
  }
  return out;
}

Vector damp(const VectorRef& updated, const VectorRef& old, double eta) {
  if (updated.size() != old.size()) fail(ErrorCode::DimensionMismatch, "damp: length mismatch");
  if (eta == 1.0) return updated;
  return eta * updated + (1.0 - eta) * old;
}

Vector h_star(const ModelParams& p, const VectorRef& v, const VectorRef& h_hat,
              const VectorRef& s_hat) {
  check_row(p, v, h_hat, s_hat);
  const UnitTerms t(p);
  const Vector wbv = t.beta_W.transpose() * v;
  return kernel::h_star(p, t, wbv, h_hat, s_hat);
}

double elbo(const ModelParams& p, const VectorRef& v, const VectorRef& h_hat,
            const VectorRef& s_hat) {
  check_row(p, v, h_hat, s_hat);
  return kernel::elbo(p, UnitTerms(p), v, h_hat, s_hat);
}

Vector elbo_grad_s(const ModelParams& p, const VectorRef& v, const VectorRef& h_hat,
                   const VectorRef& s_hat) {
  check_row(p, v, h_hat, s_hat);
  const UnitTerms t(p);
  const Vector wbv = t.beta_W.transpose() * v;
  return kernel::grad_s(p, t, wbv, h_hat, s_hat);
}

Vector slab_hessian_product(const ModelParams& p, const VectorRef& h_hat, const VectorRef& x) {
  if (h_hat.size() != p.N() || x.size() != p.N()) {
    fail(ErrorCode::DimensionMismatch, "slab_hessian_product: length mismatch");
  }
  return kernel::hessian_product(p, UnitTerms(p), h_hat, x);
}

Vector cg_s_update(const ModelParams& p, const VectorRef& v, const VectorRef& h_hat,
                   const VectorRef& s_hat, int cg_max_steps) {
  check_row(p, v, h_hat, s_hat);
  const UnitTerms t(p);
  const Vector wbv = t.beta_W.transpose() * v;
  return kernel::cg_s_update(p, t, wbv, h_hat, s_hat, cg_max_steps);
}

namespace {

struct RowHistory {
  std::vector<double> elbo;
  std::vector<Index> sparse_count;
};

Index count_sparse(const Vector& h) {
  return (h.array() < kSparseThreshold).count();
}

}  // namespace

EStepResult e_step(const ModelParams& p, const MatrixRef& batch, const InferenceConfig& cfg) {
  require_valid(p);
  validate(cfg);
  if (batch.cols() != p.D()) {
    fail(ErrorCode::DimensionMismatch, "batch has " + std::to_string(batch.cols()) +
                                           " columns, model expects D = " +
                                           std::to_string(p.D()));
  }
  const Index M = batch.rows();
  const Index N = p.N();
  const UnitTerms t(p);

  EStepResult res;
  res.q = init_q(p, M);
  res.elbo = Vector::Zero(M);
  res.iterations.assign(static_cast<std::size_t>(M), 0);
  std::vector<RowHistory> history(static_cast<std::size_t>(cfg.record_trace ? M : 0));
  std::vector<Index> decreases(static_cast<std::size_t>(M), 0);
  const bool need_elbo = cfg.record_trace || cfg.elbo_tol > 0.0;

  parallel_for(M, cfg.workers, [&](Index begin, Index end) {
    for (Index r = begin; r < end; ++r) {
      const Vector v = batch.row(r).transpose();
      const Vector wbv = t.beta_W.transpose() * v;
      Vector h = res.q.h_hat.row(r).transpose();
      Vector s = res.q.s_hat.row(r).transpose();
      RowHistory* hist = cfg.record_trace ? &history[static_cast<std::size_t>(r)] : nullptr;

      double current = need_elbo ? kernel::elbo(p, t, v, h, s) : 0.0;
      if (hist) {
        hist->elbo.push_back(current);
        hist->sparse_count.push_back(count_sparse(h));
      }
      int k = 0;
      while (k < cfg.max_iters) {
        Vector s_next;
        if (cfg.s_mode == SlabMode::heuristic) {
          const Vector target = kernel::s_star(p, t, wbv, h, s);
          const Vector clipped = cfg.clip ? clip_reflections(target, s, cfg.rho) : target;
          s_next = damp(clipped, s, cfg.eta_s);
        } else {
          s_next = kernel::cg_s_update(p, t, wbv, h, s, cfg.cg_max_steps);
        }
        if (const Index bad = non_finite_index(s_next); bad >= 0) {
          throw NumericalDivergence(k, bad, "e_step slab update");
        }
        Vector h_next = damp(kernel::h_star(p, t, wbv, h, s_next), h, cfg.eta_h);
        h_next = h_next.unaryExpr([](double x) { return clamp_spike(x); });
        if (const Index bad = non_finite_index(h_next); bad >= 0) {
          throw NumericalDivergence(k, bad, "e_step spike update");
        }
        s = std::move(s_next);
        h = std::move(h_next);
        ++k;

        if (!need_elbo) continue;
        const double next = kernel::elbo(p, t, v, h, s);
        if (!std::isfinite(next)) throw NumericalDivergence(k, -1, "e_step elbo");
        if (next < current) ++decreases[static_cast<std::size_t>(r)];
        const double gain = next - current;
        current = next;
        if (hist) {
          hist->elbo.push_back(current);
          hist->sparse_count.push_back(count_sparse(h));
        }
        if (cfg.elbo_tol > 0.0 && std::abs(gain) < cfg.elbo_tol) break;
      }
      res.q.h_hat.row(r) = h.transpose();
      res.q.s_hat.row(r) = s.transpose();
      res.elbo[r] = need_elbo ? current : kernel::elbo(p, t, v, h, s);
      res.iterations[static_cast<std::size_t>(r)] = k;
    }
  });

  for (Index d : decreases) res.trace.decreases += d;
  if (cfg.record_trace && M > 0) {
    // Examples that stopped early hold their final value.
    std::size_t length = 0;
    for (const auto& h : history) length = std::max(length, h.elbo.size());
    res.trace.elbo.assign(length, 0.0);
    res.trace.sparsity.assign(length, 0.0);
    for (std::size_t j = 0; j < length; ++j) {
      double e = 0.0;
      Index sparse = 0;
      for (const auto& h : history) {
        const std::size_t at = std::min(j, h.elbo.size() - 1);
        e += h.elbo[at];
        sparse += h.sparse_count[at];
      }
      res.trace.elbo[j] = e / static_cast<double>(M);
      res.trace.sparsity[j] = static_cast<double>(sparse) / static_cast<double>(M * N);
    }
  }
  return res;
}

}  // namespace s3c
