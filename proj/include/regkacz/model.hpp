#pragma once

#include "regkacz/linop.hpp"
#include "regkacz/rng.hpp"

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace regkacz {

struct Box {
  Vector lower;
  Vector upper;

  /// Index of the first out-of-bounds coordinate, or -1.
  Index first_violation(const Vector& x) const;
  bool contains(const Vector& x) const { return first_violation(x) < 0; }
};

Vector clip_to_box(Vector x, const Box& box);

/// The system of operator equations F_i(x) = y_i: evaluation, linearization
/// and problem metadata. Immutable after construction; concurrent evaluation
/// of distinct equations is safe as long as the stored closures are pure.
class OperatorFamily {
public:
  struct Init {
    int n_equations = 0;
    Index dim_x = 0;
    std::vector<Index> dim_y;
    std::function<Vector(int, const Vector&)> evaluate;
    std::function<LinearMap(int, const Vector&)> linearize;
    std::optional<Box> domain_box;
    /// Tangential-cone constant in [0, 1); asserted by the problem author,
    /// evidenced (not enforced) by estimate_tangential_cone.
    double eta = 0.0;
    /// Uniform bound on ||F_i'|| near the starting ball; estimated at x0
    /// when absent.
    std::optional<double> lipschitz_bound;
    std::optional<Vector> ground_truth;
    /// Radius of the ball around x0 the analysis assumes the iterates stay
    /// in. Monitoring only; never enforced.
    std::optional<double> monitoring_radius;
  };

  explicit OperatorFamily(Init init);

  int n_equations() const noexcept { return init_.n_equations; }
  Index dim_x() const noexcept { return init_.dim_x; }
  Index dim_y(int i) const;
  double eta() const noexcept { return init_.eta; }
  const std::optional<double>& lipschitz_bound() const noexcept { return init_.lipschitz_bound; }
  const std::optional<Box>& domain_box() const noexcept { return init_.domain_box; }
  const std::optional<Vector>& ground_truth() const noexcept { return init_.ground_truth; }
  const std::optional<double>& monitoring_radius() const noexcept {
    return init_.monitoring_radius;
  }

  /// Evaluates F_i(x); rejects x outside the domain box.
  Vector evaluate(int i, const Vector& x) const;
  LinearMap linearize(int i, const Vector& x) const;

private:
  Init init_;
};

struct NoisyData {
  std::vector<Vector> y_delta;
  std::vector<double> delta;
  std::uint64_t seed = 0;
  std::optional<std::vector<Vector>> exact_y;  // retained for diagnostics

  bool exact_regime() const;  // all delta[i] == 0
};

/// y_delta[i] - F_i(x) and its norm.
std::pair<Vector, double> residual(const OperatorFamily& family, int i, const Vector& x,
                                   const NoisyData& data);

/// Adds a seeded Gaussian direction rescaled so that ||y_delta[i] - y[i]||
/// equals rel_noise * ||y[i]|| exactly; the noise-level bound then holds
/// with equality rather than in expectation.
NoisyData make_noisy_data(const std::vector<Vector>& exact_y, double rel_noise,
                          std::uint64_t seed);

/// Uniform sample from a ball; shared with the oracle tests so they can
/// reproduce the exact sample set.
Vector sample_in_ball(const Vector& center, double radius, Rng& rng);

/// Empirical lower bound for the tangential-cone constant near x_center:
/// max over sampled pairs of ||F(xb) - F(x) - F'(x)(xb - x)|| / ||F(xb) - F(x)||,
/// skipping pairs whose denominator is below 1e-14.
double estimate_tangential_cone(const OperatorFamily& family, int i, const Vector& x_center,
                                double radius, int n_samples, std::uint64_t seed);

}  // namespace regkacz
