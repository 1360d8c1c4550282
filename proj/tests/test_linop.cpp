#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "regkacz/linop.hpp"
#include "test_support.hpp"

#include <cmath>
#include <stdexcept>

using namespace regkacz;
using testsupport::normal_solve_oracle;
using testsupport::operator_norm_oracle;
using testsupport::random_matrix;
using testsupport::random_vector;
using testsupport::resolvent_oracle;

TEST_CASE("apply: identity, zero and diagonal maps") {
  const LinearMap id = LinearMap::identity(3);
  Vector u(3);
  u << 1, 2, 3;
  CHECK((id.apply(u) - u).norm() == 0.0);

  const LinearMap zero = LinearMap::from_dense(Matrix::Zero(2, 3));
  CHECK(zero.apply(u).norm() == 0.0);

  Matrix d(2, 2);
  d << 2, 0, 0, 3;
  Vector ones = Vector::Ones(2);
  Vector expected(2);
  expected << 2, 3;
  CHECK((LinearMap::from_dense(d).apply(ones) - expected).norm() == 0.0);
}

TEST_CASE("apply_adjoint: identity and transpose") {
  const LinearMap id = LinearMap::identity(2);
  Vector w(2);
  w << 1, 2;
  CHECK((id.apply_adjoint(w) - w).norm() == 0.0);

  Matrix a(2, 2);
  a << 1, 2, 0, 1;
  Vector e0(2);
  e0 << 1, 0;
  Vector expected(2);
  expected << 1, 2;
  CHECK((LinearMap::from_dense(a).apply_adjoint(e0) - expected).norm() == 0.0);
}

TEST_CASE("apply_adjoint: inner-product identity on a random 5x7 map") {
  const Matrix a = random_matrix(5, 7, 11);
  const LinearMap map = LinearMap::from_dense(a);
  for (int p = 0; p < 20; ++p) {
    const Vector u = random_vector(7, 100 + p);
    const Vector w = random_vector(5, 200 + p);
    const double lhs = map.apply(u).dot(w);
    const double rhs = u.dot(map.apply_adjoint(w));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + std::abs(rhs) + 1.0));
  }
}

TEST_CASE("dimension mismatches are rejected") {
  const LinearMap map = LinearMap::from_dense(random_matrix(3, 4, 1));
  CHECK_THROWS_AS(map.apply(Vector::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(map.apply_adjoint(Vector::Zero(4)), std::invalid_argument);
  CHECK_THROWS_AS(LinearMap(0, 1, [](const Vector& v) { return v; },
                            [](const Vector& v) { return v; }),
                  std::invalid_argument);
}

TEST_CASE("adjoint probes stay at round-off for dense maps") {
  const LinearMap map = LinearMap::from_dense(random_matrix(9, 6, 7));
  CHECK(max_adjoint_probe(map, 100, 42) <= 1e-12);
}

TEST_CASE("solve_regularized_normal: identity with alpha = 1 halves the rhs") {
  const LinearMap id = LinearMap::identity(4);
  const Vector r = random_vector(4, 3);
  for (const InnerSolveMode mode : {InnerSolveMode::conjugate_gradient,
                                    InnerSolveMode::direct_dense}) {
    InnerSolvePolicy policy = InnerSolvePolicy::tight();
    policy.mode = mode;
    const NormalSolveResult res = solve_regularized_normal(id, r, 1.0, policy);
    CHECK((res.solution - 0.5 * r).norm() <= 1e-14 * r.norm());
  }
}

TEST_CASE("solve_regularized_normal: zero map returns zero") {
  const LinearMap zero = LinearMap::from_dense(Matrix::Zero(3, 3));
  const NormalSolveResult res =
      solve_regularized_normal(zero, Vector::Ones(3), 0.7, InnerSolvePolicy::tight());
  CHECK(res.solution.norm() == 0.0);
  CHECK(res.iterations == 0);
}

TEST_CASE("solve_regularized_normal: CG agrees with the dense factorization oracle") {
  const Matrix a = random_matrix(6, 6, 21);
  const Vector rhs = random_vector(6, 22);
  const double alpha = 0.5;
  const LinearMap map = LinearMap::from_dense(a);

  InnerSolvePolicy cg = InnerSolvePolicy::tight();
  const Vector h_cg = solve_regularized_normal(map, rhs, alpha, cg).solution;
  const Vector h_oracle = normal_solve_oracle(a, rhs, alpha);
  CHECK((h_cg - h_oracle).norm() <= 1e-6 * h_oracle.norm());

  InnerSolvePolicy direct = cg;
  direct.mode = InnerSolveMode::direct_dense;
  const Vector h_direct = solve_regularized_normal(map, rhs, alpha, direct).solution;
  CHECK((h_direct - h_oracle).norm() <= 1e-10 * h_oracle.norm());
}

TEST_CASE("solve_regularized_normal: direct and CG agree within 10x the CG tolerance") {
  for (std::uint64_t seed : {5ull, 6ull, 7ull}) {
    const Matrix a = random_matrix(8, 5, seed);
    const Vector rhs = random_vector(8, seed + 50);
    const double alpha = 2.0 * operator_norm_oracle(a, 200);  // well inside the feasible regime
    const LinearMap map = LinearMap::from_dense(a);
    InnerSolvePolicy cg = InnerSolvePolicy::tight();
    InnerSolvePolicy direct = cg;
    direct.mode = InnerSolveMode::direct_dense;
    const Vector h_cg = solve_regularized_normal(map, rhs, alpha, cg).solution;
    const Vector h_direct = solve_regularized_normal(map, rhs, alpha, direct).solution;
    CHECK((h_cg - h_direct).norm() <= 10.0 * cg.cg_rel_tol * std::max(h_direct.norm(), 1e-30));
  }
}

TEST_CASE("solve_regularized_normal: input validation") {
  const LinearMap id = LinearMap::identity(3);
  const InnerSolvePolicy policy = InnerSolvePolicy::tight();
  CHECK_THROWS_AS(solve_regularized_normal(id, Vector::Ones(3), 0.0, policy),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_regularized_normal(id, Vector::Ones(3), -1.0, policy),
                  std::invalid_argument);
  Vector bad = Vector::Ones(3);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(solve_regularized_normal(id, bad, 1.0, policy), std::invalid_argument);
  CHECK_THROWS_AS(solve_regularized_normal(id, Vector::Ones(2), 1.0, policy),
                  std::invalid_argument);

  InnerSolvePolicy bad_policy = policy;
  bad_policy.cg_max_iters = 0;
  CHECK_THROWS_AS(solve_regularized_normal(id, Vector::Ones(3), 1.0, bad_policy),
                  std::invalid_argument);

  InnerSolvePolicy small_dense = policy;
  small_dense.mode = InnerSolveMode::direct_dense;
  small_dense.dense_threshold = 2;
  CHECK_THROWS_AS(solve_regularized_normal(id, Vector::Ones(3), 1.0, small_dense),
                  std::invalid_argument);
}

TEST_CASE("solve_regularized_normal: large-alpha contraction bound ||h|| <= ||A* rhs|| / alpha") {
  for (std::uint64_t seed : {31ull, 32ull, 33ull, 34ull}) {
    const Matrix a = random_matrix(7, 7, seed);
    const Vector rhs = random_vector(7, seed + 10);
    const double alpha = 3.0 * std::pow(operator_norm_oracle(a, 500), 2);
    const LinearMap map = LinearMap::from_dense(a);
    const NormalSolveResult res =
        solve_regularized_normal(map, rhs, alpha, InnerSolvePolicy::tight());
    CHECK(res.solution.norm() <= res.rhs_norm / alpha * (1.0 + 1e-10));
  }
}

TEST_CASE("CG: residuals non-increasing and energy error monotone in the feasible regime") {
  const Matrix a = random_matrix(10, 10, 77);
  const Vector rhs = random_vector(10, 78);
  const double c2 = std::pow(operator_norm_oracle(a, 500), 2);
  const double alpha = 1.2 * c2;  // condition number of A*A + alpha I stays below 2
  const LinearMap map = LinearMap::from_dense(a);
  const Vector h_star = normal_solve_oracle(a, rhs, alpha);
  Matrix gram = a.transpose() * a;
  gram.diagonal().array() += alpha;

  double prev_residual = std::numeric_limits<double>::infinity();
  double prev_energy = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 12; ++iters) {
    InnerSolvePolicy policy = InnerSolvePolicy::tight();
    policy.cg_max_iters = iters;
    policy.cg_rel_tol = 1e-30;  // run exactly `iters` iterations
    const NormalSolveResult res = solve_regularized_normal(map, rhs, alpha, policy);
    CHECK(res.residual_norm <= prev_residual * (1.0 + 1e-12));
    const Vector err = res.solution - h_star;
    const double energy = std::sqrt(err.dot(gram * err));
    CHECK(energy <= prev_energy * (1.0 + 1e-10));
    prev_residual = res.residual_norm;
    prev_energy = energy;
  }
}

TEST_CASE("apply_output_resolvent: identity closed form and dense oracle") {
  const LinearMap id = LinearMap::identity(4);
  const Vector w = random_vector(4, 5);
  const double alpha = 0.6;
  const ResolventResult res = apply_output_resolvent(id, w, alpha, InnerSolvePolicy::tight());
  CHECK((res.value - alpha / (1.0 + alpha) * w).norm() <= 1e-12 * w.norm());

  const Matrix a = random_matrix(5, 7, 91);
  const Vector r = random_vector(5, 92);
  const LinearMap map = LinearMap::from_dense(a);
  for (const InnerSolveMode mode : {InnerSolveMode::conjugate_gradient,
                                    InnerSolveMode::direct_dense}) {
    InnerSolvePolicy policy = InnerSolvePolicy::tight();
    policy.mode = mode;
    const ResolventResult rr = apply_output_resolvent(map, r, 0.8, policy);
    const Vector oracle = resolvent_oracle(a, r, 0.8);
    CHECK((rr.value - oracle).norm() <= 1e-8 * oracle.norm());
  }
}

TEST_CASE("estimate_operator_norm: diagonal, identity and random maps") {
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 1, 5, 2;
  CHECK(estimate_operator_norm(LinearMap::from_dense(d), 50, 1) == doctest::Approx(5.0).epsilon(1e-6));

  CHECK(std::abs(estimate_operator_norm(LinearMap::identity(10), 3, 2) - 1.0) <= 1e-10);

  const Matrix a = random_matrix(8, 8, 123);
  const double est = estimate_operator_norm(LinearMap::from_dense(a), 3000, 3);
  const double oracle = operator_norm_oracle(a, 10000);
  CHECK(std::abs(est - oracle) <= 1e-4 * oracle);
  CHECK(est <= oracle * (1.0 + 1e-12));  // lower estimate

  CHECK_THROWS_AS(estimate_operator_norm(a.rows() ? LinearMap::from_dense(a) : LinearMap::identity(1), 0, 4),
                  std::invalid_argument);
}

TEST_CASE("materialize reproduces the dense matrix") {
  const Matrix a = random_matrix(4, 6, 55);
  CHECK((materialize(LinearMap::from_dense(a)) - a).norm() == 0.0);
}
