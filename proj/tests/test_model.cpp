#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "regkacz/model.hpp"
#include "test_support.hpp"

#include <cmath>
#include <stdexcept>

using namespace regkacz;
using testsupport::affine_family;
using testsupport::exact_data;
using testsupport::identity_family;
using testsupport::random_matrix;
using testsupport::random_vector;

TEST_CASE("make_noisy_data: zero noise returns the data unchanged") {
  std::vector<Vector> y = {random_vector(4, 1), random_vector(6, 2)};
  const NoisyData d = make_noisy_data(y, 0.0, 99);
  CHECK(d.exact_regime());
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK((d.y_delta[i] - y[i]).norm() == 0.0);
    CHECK(d.delta[i] == 0.0);
  }
}

TEST_CASE("make_noisy_data: relative noise hits its target exactly") {
  std::vector<Vector> y = {random_vector(5, 3), random_vector(9, 4), random_vector(1, 5)};
  const NoisyData d = make_noisy_data(y, 0.05, 7);
  CHECK_FALSE(d.exact_regime());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double realized = (d.y_delta[i] - y[i]).norm();
    CHECK(std::abs(realized / y[i].norm() - 0.05) <= 1e-12);
    CHECK(std::abs(realized - d.delta[i]) <= 1e-15 * std::max(1.0, y[i].norm()));
  }
}

TEST_CASE("make_noisy_data: identical seeds give bit-identical data") {
  std::vector<Vector> y = {random_vector(8, 10), random_vector(3, 11)};
  const NoisyData a = make_noisy_data(y, 0.03, 1234);
  const NoisyData b = make_noisy_data(y, 0.03, 1234);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK((a.y_delta[i] - b.y_delta[i]).norm() == 0.0);
    CHECK(a.delta[i] == b.delta[i]);
  }
  const NoisyData c = make_noisy_data(y, 0.03, 1235);
  CHECK((a.y_delta[0] - c.y_delta[0]).norm() > 0.0);
}

TEST_CASE("make_noisy_data: amplitudes rescale a shared direction") {
  std::vector<Vector> y = {random_vector(6, 20)};
  const NoisyData big = make_noisy_data(y, 0.04, 5);
  const NoisyData small = make_noisy_data(y, 0.01, 5);
  const Vector dir_big = (big.y_delta[0] - y[0]).normalized();
  const Vector dir_small = (small.y_delta[0] - y[0]).normalized();
  CHECK((dir_big - dir_small).norm() <= 1e-12);
}

TEST_CASE("residual: identity family example") {
  const OperatorFamily fam = identity_family(2);
  NoisyData d = exact_data({Vector::Zero(2)});
  d.y_delta[0] << 1, 1;
  auto [vec, norm] = residual(fam, 0, Vector::Zero(2), d);
  CHECK(vec[0] == 1.0);
  CHECK(vec[1] == 1.0);
  CHECK(norm == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("residual: zero at the ground truth with exact data") {
  const Matrix a = random_matrix(6, 4, 31);
  const Vector x_star = random_vector(4, 32);
  const OperatorFamily fam = affine_family({a}, {Vector::Zero(6)}, x_star);
  const NoisyData d = exact_data({a * x_star});
  CHECK(residual(fam, 0, x_star, d).second <= 1e-12 * (a * x_star).norm());
}

TEST_CASE("domain box: evaluation rejects out-of-box points with the violated index") {
  OperatorFamily::Init init;
  init.n_equations = 1;
  init.dim_x = 3;
  init.dim_y = {3};
  init.evaluate = [](int, const Vector& x) { return x; };
  init.linearize = [](int, const Vector& x) { return LinearMap::identity(x.size()); };
  init.domain_box = Box{Vector::Zero(3), Vector::Ones(3)};
  const OperatorFamily fam(std::move(init));

  Vector inside = 0.5 * Vector::Ones(3);
  CHECK(fam.evaluate(0, inside).size() == 3);

  Vector outside = inside;
  outside[1] = 1.5;
  try {
    fam.evaluate(0, outside);
    CHECK(false);
  } catch (const DomainViolation& e) {
    CHECK(e.coordinate() == 1);
    CHECK(e.value() == 1.5);
    CHECK(e.upper() == 1.0);
  }
}

TEST_CASE("estimate_tangential_cone: affine families score (numerically) zero") {
  const Matrix a = random_matrix(5, 4, 41);
  const OperatorFamily fam = affine_family({a}, {random_vector(5, 42)});
  const double eta = estimate_tangential_cone(fam, 0, Vector::Zero(4), 0.5, 60, 9);
  CHECK(eta <= 1e-10);
}

TEST_CASE("estimate_tangential_cone: quadratic scalar family matches the closed-form ratio") {
  // F(x) = x^2 with F'(x) = 2x: the ratio is |xb - x| / |xb + x|
  OperatorFamily::Init init;
  init.n_equations = 1;
  init.dim_x = 1;
  init.dim_y = {1};
  init.evaluate = [](int, const Vector& x) {
    Vector y(1);
    y[0] = x[0] * x[0];
    return y;
  };
  init.linearize = [](int, const Vector& x) {
    return LinearMap::from_dense(Matrix::Constant(1, 1, 2.0 * x[0]));
  };
  init.eta = 0.5;
  const OperatorFamily fam(std::move(init));

  Vector center(1);
  center << 1.0;
  const double radius = 0.1;
  const int n_samples = 40;
  const std::uint64_t seed = 17;
  const double estimated = estimate_tangential_cone(fam, 0, center, radius, n_samples, seed);

  // replay the exact sample stream and maximize the analytic ratio over it
  Rng rng(mix_seed(seed, 0x74636331u + 0));
  double expected = -1.0;
  for (int s = 0; s < n_samples; ++s) {
    const Vector x = sample_in_ball(center, radius, rng);
    const Vector xb = sample_in_ball(center, radius, rng);
    const double denom = std::abs(xb[0] * xb[0] - x[0] * x[0]);
    if (denom < 1e-14) continue;
    expected = std::max(expected, std::abs(xb[0] - x[0]) / std::abs(xb[0] + x[0]));
  }
  CHECK(estimated == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("estimate_tangential_cone: all-degenerate samples raise a diagnostic error") {
  OperatorFamily::Init init;
  init.n_equations = 1;
  init.dim_x = 2;
  init.dim_y = {1};
  init.evaluate = [](int, const Vector&) { return Vector::Ones(1); };  // constant map
  init.linearize = [](int, const Vector&) { return LinearMap::from_dense(Matrix::Zero(1, 2)); };
  const OperatorFamily fam(std::move(init));
  CHECK_THROWS_WITH_AS(estimate_tangential_cone(fam, 0, Vector::Zero(2), 0.1, 10, 3),
                       doctest::Contains("no informative samples"), std::runtime_error);
}

TEST_CASE("OperatorFamily validates its metadata") {
  OperatorFamily::Init init;
  init.n_equations = 1;
  init.dim_x = 2;
  init.dim_y = {2};
  init.evaluate = [](int, const Vector& x) { return x; };
  init.linearize = [](int, const Vector& x) { return LinearMap::identity(x.size()); };
  init.eta = 1.0;  // must be < 1
  CHECK_THROWS_AS(OperatorFamily(std::move(init)), std::invalid_argument);
}
