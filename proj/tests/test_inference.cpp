#include <doctest.h>

#include <cmath>

#include "s3c/error.hpp"
#include "s3c/inference.hpp"
#include "s3c/oracle.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace s3c;
using namespace s3c::testing;

namespace {

InferenceConfig quiet(int iters = 50) {
  InferenceConfig cfg;
  cfg.max_iters = iters;
  cfg.record_trace = true;
  return cfg;
}

// Runs all K iterations.
InferenceConfig converged(int iters = 50) {
  InferenceConfig cfg = quiet(iters);
  cfg.elbo_tol = 0.0;
  return cfg;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("init_q uses sigmoid of the bias and the slab mean") {
  ModelParams p = make_params(Matrix::Identity(2, 2), 0.0, 0.0, 1.0, 1.0);
  p.mu = vec({1, 2});
  VariationalState q = init_q(p, 3);
  CHECK((q.h_hat.array() == 0.5).all());
  CHECK(q.s_hat.row(2) == vec({1, 2}).transpose());

  p.b = vec({-30, 30});
  q = init_q(p, 1);
  CHECK(q.h_hat(0, 0) > 0.0);
  CHECK(q.h_hat(0, 0) < 1e-6);
  CHECK(q.h_hat(0, 1) < 1.0);
  CHECK(q.h_hat(0, 1) > 1.0 - 1e-6);
}

TEST_CASE("s_star scalar cases") {
  CHECK(s_star(scalar_params(), vec({3}), vec({0.5}), vec({0}))[0] == doctest::Approx(1.5));
  CHECK(s_star(scalar_params(0, 2), vec({0}), vec({0.5}), vec({0}))[0] == doctest::Approx(1.0));
}

TEST_CASE("s_star with orthogonal columns decouples") {
  ModelParams p = make_params(Matrix::Identity(3, 2), 0.0, 0.0, 1.0, 1.0);
  p.mu = vec({0.0, 0.8});
  const Vector v = p.W.col(0);
  const Vector out = s_star(p, v, vec({0.7, 0.3}), vec({2.0, -1.0}));
  CHECK(out[0] == doctest::Approx(0.5));
  CHECK(out[1] == doctest::Approx(0.4));
  CHECK((out - naive_s_star(p, v, vec({0.7, 0.3}), vec({2.0, -1.0}))).norm() < 1e-14);
}

TEST_CASE("s_star and h_star match naive per-unit loops") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams p = random_params(rng, 6, 5);
    const Vector v = normal_vector(rng, 6);
    const Vector h = uniform_vector(rng, 5, 0.05, 0.95);
    const Vector s = normal_vector(rng, 5);
    CHECK((s_star(p, v, h, s) - naive_s_star(p, v, h, s)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((h_star(p, v, h, s) - naive_h_star(p, v, h, s)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("clip_reflections cases") {
  CHECK(clip_reflections(vec({-2.0}), vec({1.0}), 0.5)[0] == doctest::Approx(-0.5));
  CHECK(clip_reflections(vec({-0.3}), vec({1.0}), 0.5)[0] == doctest::Approx(-0.3));
  CHECK(clip_reflections(vec({-2.0}), vec({-1.0}), 0.5)[0] == doctest::Approx(-2.0));
  CHECK(clip_reflections(vec({0.0}), vec({1.0}), 0.5)[0] == 0.0);
  CHECK(clip_reflections(vec({3.0}), vec({-2.0}), 0.5)[0] == doctest::Approx(1.0));
}

TEST_CASE("clip_reflections is the identity without a sign change") {
  Rng rng(22);
  for (int k = 0; k < 200; ++k) {
    const double prev = rng.normal();
    const double mag = std::abs(rng.normal()) * 10.0;
    const double target = prev >= 0.0 ? mag : -mag;
    CHECK(clip_reflections(vec({target}), vec({prev}), rng.uniform())[0] == target);
  }
}

TEST_CASE("damp cases") {
  CHECK(damp(vec({-0.5}), vec({1.0}), 1.0)[0] == -0.5);
  CHECK(damp(vec({-0.5}), vec({1.0}), 0.5)[0] == doctest::Approx(0.25));
  CHECK(damp(vec({0.7}), vec({0.7}), 0.3)[0] == doctest::Approx(0.7));
}

TEST_CASE("h_star scalar cases") {
  CHECK(h_star(scalar_params(), vec({0}), vec({0.5}), vec({0}))[0] ==
        doctest::Approx(1.0 / (1.0 + std::sqrt(2.0))).epsilon(1e-12));
  CHECK(h_star(scalar_params(30.0), vec({0}), vec({0.5}), vec({0}))[0] > 1.0 - 1e-12);
  const double z = (1.0 - 0.25) * 0.5 - 0.5 * 0.25 - 0.5 * std::log(2.0);
  CHECK(h_star(scalar_params(), vec({1}), vec({0.5}), vec({0.5}))[0] ==
        doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-12));
  CHECK(h_star(scalar_params(), vec({1}), vec({0.5}), vec({0.5}))[0] ==
        doctest::Approx(0.47588).epsilon(1e-4));
}

TEST_CASE("elbo equals log evidence when Q is the exact N=1 posterior") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams p = random_params(rng, 3, 1);
    const Vector v = normal_vector(rng, 3);
    const ExactPosterior post = exact_posterior(p, v);
    const Vector h = post.spike_marginals();
    const Vector s = post.slab_means[1];
    CHECK(std::abs(elbo(p, v, h, s) - post.log_evidence) < 1e-9);
  }
}

TEST_CASE("elbo is a lower bound for arbitrary Q") {
  Rng rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    const Index N = 1 + trial % 6;
    const ModelParams p = random_params(rng, 4, N);
    const Vector v = normal_vector(rng, 4, 2.0);
    const double evidence = exact_posterior(p, v).log_evidence;
    const Vector h = uniform_vector(rng, N, 0.01, 0.99);
    const Vector s = normal_vector(rng, N, 2.0);
    CHECK(elbo(p, v, h, s) <= evidence + 1e-9);
  }
}

TEST_CASE("elbo agrees with a Monte-Carlo estimate") {
  Rng rng(25);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelParams p = random_params(rng, 4, 3);
    const Vector v = normal_vector(rng, 4);
    const Vector h = uniform_vector(rng, 3, 0.1, 0.9);
    const Vector s = normal_vector(rng, 3);
    const McEstimate mc = mc_elbo_estimate(p, v, h, s, 100000, 300 + trial);
    CHECK(std::abs(mc.estimate - elbo(p, v, h, s)) <= 3.0 * mc.std_error);
  }
}

TEST_CASE("elbo gradient in s_hat matches finite differences") {
  Rng rng(26);
  const ModelParams p = random_params(rng, 5, 6);
  const Vector v = normal_vector(rng, 5);
  const Vector h = uniform_vector(rng, 6, 0.1, 0.9);
  const Vector s = normal_vector(rng, 6);
  const Vector g = elbo_grad_s(p, v, h, s);
  const double step = 1e-5;
  for (Index i = 0; i < 6; ++i) {
    Vector up = s, down = s;
    up[i] += step;
    down[i] -= step;
    const double fd = (elbo(p, v, h, up) - elbo(p, v, h, down)) / (2.0 * step);
    CHECK(rel_error(g[i], fd) < 1e-7);
  }
}

TEST_CASE("Hessian-vector product matches finite differences of the gradient") {
  Rng rng(27);
  const Index N = 6;
  const ModelParams p = random_params(rng, 5, N);
  const Vector v = normal_vector(rng, 5);
  const Vector h = uniform_vector(rng, N, 0.1, 0.9);
  const Vector s = normal_vector(rng, N);
  const double step = 1e-5;
  Matrix H(N, N);
  for (Index j = 0; j < N; ++j) {
    Vector up = s, down = s;
    up[j] += step;
    down[j] -= step;
    // Hessian of the KL, the negated ELBO.
    H.col(j) = -(elbo_grad_s(p, v, h, up) - elbo_grad_s(p, v, h, down)) / (2.0 * step);
  }
  for (int k = 0; k < 5; ++k) {
    const Vector x = normal_vector(rng, N);
    const Vector hx = slab_hessian_product(p, h, x);
    CHECK((hx - H * x).norm() / (H * x).norm() <= 1e-5);
  }
}

TEST_CASE("cg_s_update with a diagonal Hessian solves in one step") {
  ModelParams p = make_params(Matrix::Identity(4, 3), 0.0, 0.0, 1.0, 1.0);
  p.mu = vec({0.5, -1.0, 2.0});
  p.alpha = vec({1.0, 2.0, 0.5});
  const Vector v = vec({1.0, -2.0, 0.3, 7.0});
  const Vector h = Vector::Ones(3);
  const Vector s = cg_s_update(p, v, h, Vector::Zero(3), 1);
  for (Index i = 0; i < 3; ++i) {
    CHECK(s[i] == doctest::Approx((p.mu[i] * p.alpha[i] + v[i]) / (p.alpha[i] + 1.0)));
  }
}

TEST_CASE("cg_s_update never decreases the ELBO") {
  Rng rng(28);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelParams p = random_params(rng, 6, 5);
    const Vector v = normal_vector(rng, 6, 2.0);
    const Vector h = uniform_vector(rng, 5, 0.01, 0.99);
    const Vector s = normal_vector(rng, 5, 2.0);
    for (int steps : {1, 2, 5, 20}) {
      CHECK(elbo(p, v, h, cg_s_update(p, v, h, s, steps)) >= elbo(p, v, h, s) - 1e-9);
    }
  }
}

TEST_CASE("e_step converges to the exact posterior on the canonical instance") {
  const ModelParams p = scalar_params();
  const EStepResult r = e_step(p, Matrix::Zero(1, 1), converged());
  CHECK(r.iterations[0] == 50);
  CHECK(std::abs(r.q.h_hat(0, 0) - 1.0 / (1.0 + std::sqrt(2.0))) < 1e-6);
}

TEST_CASE("e_step rows are independent of batch composition") {
  Rng rng(29);
  const ModelParams p = random_params(rng, 5, 7);
  Matrix batch(100, 5);
  for (Index r = 0; r < 100; ++r) batch.row(r) = normal_vector(rng, 5).transpose();
  InferenceConfig cfg = quiet();
  cfg.workers = 3;
  const EStepResult all = e_step(p, batch, cfg);
  cfg.workers = 1;
  const EStepResult one = e_step(p, batch.row(37), cfg);
  CHECK(one.q.h_hat.row(0) == all.q.h_hat.row(37));
  CHECK(one.q.s_hat.row(0) == all.q.s_hat.row(37));
  CHECK(one.elbo[0] == all.elbo[37]);
}

TEST_CASE("e_step result does not depend on the worker count") {
  Rng rng(30);
  const ModelParams p = random_params(rng, 4, 6);
  Matrix batch(64, 4);
  for (Index r = 0; r < 64; ++r) batch.row(r) = normal_vector(rng, 4).transpose();
  InferenceConfig cfg = quiet();
  const EStepResult a = e_step(p, batch, cfg);
  cfg.workers = 5;
  const EStepResult b = e_step(p, batch, cfg);
  CHECK(a.q.h_hat == b.q.h_hat);
  CHECK(a.trace.elbo == b.trace.elbo);
}

TEST_CASE("e_step final ELBO is at least the initial ELBO") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Index N = 1 + trial % 8;
    const ModelParams p = random_params(rng, 6, N);
    const Matrix v = normal_vector(rng, 6, 1.5).transpose();
    const EStepResult r = e_step(p, v, quiet());
    REQUIRE(r.trace.elbo.size() >= 2);
    CHECK(r.trace.elbo.back() >= r.trace.elbo.front() - 1e-12);
    CHECK(r.trace.elbo.size() == r.trace.sparsity.size());
    CHECK(static_cast<int>(r.trace.elbo.size()) <= 51);
  }
}

TEST_CASE("undamped single-unit e_step is the plain coordinate update") {
  Rng rng(32);
  const ModelParams p = random_params(rng, 3, 1);
  const Vector v = normal_vector(rng, 3);
  InferenceConfig cfg = quiet(1);
  cfg.eta_s = cfg.eta_h = cfg.rho = 1.0;
  const EStepResult r = e_step(p, v.transpose(), cfg);
  const VariationalState q0 = init_q(p, 1);
  const Vector s1 = s_star(p, v, q0.h_hat.row(0).transpose(), q0.s_hat.row(0).transpose());
  const Vector h1 = h_star(p, v, q0.h_hat.row(0).transpose(), s1);
  CHECK(r.q.s_hat(0, 0) == doctest::Approx(s1[0]).epsilon(1e-14));
  CHECK(r.q.h_hat(0, 0) == doctest::Approx(h1[0]).epsilon(1e-14));
}

TEST_CASE("clipped damped slab updates cannot cross zero") {
  // mu = 1 but the slab posterior mean is negative; each step maps s to s (1 - eta (1 + rho)).
  const ModelParams p = scalar_params(0.0, 1.0, 1.0, 1.0);
  InferenceConfig cfg = converged(5);
  const EStepResult damped = e_step(p, Matrix::Constant(1, 1, -6.0), cfg);
  CHECK(damped.q.s_hat(0, 0) == doctest::Approx(std::pow(0.25, 5)).epsilon(1e-12));

  cfg.eta_s = 1.0;
  const EStepResult undamped = e_step(p, Matrix::Constant(1, 1, -6.0), cfg);
  CHECK(undamped.q.s_hat(0, 0) == doctest::Approx(-2.5));
}

TEST_CASE("a slab mean at exactly zero is not clipped") {
  CHECK(clip_reflections(vec({-2.0}), vec({0.0}), 0.5)[0] == -2.0);
}

TEST_CASE("e_step in conjugate-gradient mode converges") {
  const ModelParams p = scalar_params();
  InferenceConfig cfg = converged();
  cfg.s_mode = SlabMode::conjugate_gradient;
  const EStepResult r = e_step(p, Matrix::Zero(1, 1), cfg);
  CHECK(std::abs(r.q.h_hat(0, 0) - 1.0 / (1.0 + std::sqrt(2.0))) < 1e-6);
}

TEST_CASE("e_step h_hat stays strictly inside the unit interval") {
  const ModelParams p = make_params(Matrix::Identity(2, 2), -40.0, 0.0, 1.0, 1.0);
  const EStepResult r = e_step(p, Matrix::Zero(3, 2), quiet());
  CHECK((r.q.h_hat.array() > 0.0).all());
  CHECK((r.q.h_hat.array() < 1.0).all());
  CHECK(r.trace.sparsity.back() == 1.0);
}

TEST_CASE("e_step rejects bad configuration and dimensions") {
  const ModelParams p = scalar_params();
  InferenceConfig cfg;
  cfg.eta_s = 0.0;
  CHECK_THROWS_AS(e_step(p, Matrix::Zero(1, 1), cfg), Error);
  cfg = InferenceConfig{};
  cfg.rho = 1.5;
  CHECK_THROWS_AS(e_step(p, Matrix::Zero(1, 1), cfg), Error);
  CHECK_THROWS_AS(e_step(p, Matrix::Zero(1, 2), InferenceConfig{}), Error);
}

TEST_CASE("e_step reports non-finite values as NumericalDivergence") {
  const ModelParams p = scalar_params();
  Matrix v(1, 1);
  v(0, 0) = 1e300;
  try {
    e_step(p, v, quiet());
    FAIL("expected NumericalDivergence");
  } catch (const NumericalDivergence& e) {
    CHECK(e.code() == ErrorCode::NumericalDivergence);
    CHECK(e.iteration() >= 0);
  }
}

TEST_CASE("slab mode names round trip") {
  CHECK(slab_mode_from_string(to_string(SlabMode::heuristic)) == SlabMode::heuristic);
  CHECK(slab_mode_from_string(to_string(SlabMode::conjugate_gradient)) ==
        SlabMode::conjugate_gradient);
  CHECK_THROWS_AS(slab_mode_from_string("newton"), Error);
}

}  // TEST_SUITE
