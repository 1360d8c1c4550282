#include "regkacz/model.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace regkacz {

Index Box::first_violation(const Vector& x) const {
  for (Index j = 0; j < x.size(); ++j) {
    if (x[j] < lower[j] || x[j] > upper[j]) return j;
  }
  return -1;
}

Vector clip_to_box(Vector x, const Box& box) {
  for (Index j = 0; j < x.size(); ++j) x[j] = std::min(std::max(x[j], box.lower[j]), box.upper[j]);
  return x;
}

OperatorFamily::OperatorFamily(Init init) : init_(std::move(init)) {
  if (init_.n_equations < 1) throw std::invalid_argument("OperatorFamily: n_equations must be >= 1");
  if (init_.dim_x < 1) throw std::invalid_argument("OperatorFamily: dim_x must be >= 1");
  if (static_cast<int>(init_.dim_y.size()) != init_.n_equations)
    throw std::invalid_argument("OperatorFamily: dim_y size mismatch");
  if (!init_.evaluate || !init_.linearize)
    throw std::invalid_argument("OperatorFamily: missing closures");
  if (!(init_.eta >= 0.0 && init_.eta < 1.0))
    throw std::invalid_argument("OperatorFamily: eta must lie in [0, 1)");
  if (init_.lipschitz_bound && !(*init_.lipschitz_bound > 0.0))
    throw std::invalid_argument("OperatorFamily: lipschitz_bound must be positive");
  if (init_.domain_box) {
    const Box& b = *init_.domain_box;
    if (b.lower.size() != init_.dim_x || b.upper.size() != init_.dim_x)
      throw std::invalid_argument("OperatorFamily: domain_box dimension mismatch");
    if ((b.upper - b.lower).minCoeff() < 0.0)
      throw std::invalid_argument("OperatorFamily: empty domain_box");
  }
  if (init_.ground_truth && init_.ground_truth->size() != init_.dim_x)
    throw std::invalid_argument("OperatorFamily: ground_truth dimension mismatch");
}

Index OperatorFamily::dim_y(int i) const {
  if (i < 0 || i >= init_.n_equations) throw std::out_of_range("OperatorFamily: equation index");
  return init_.dim_y[static_cast<std::size_t>(i)];
}

Vector OperatorFamily::evaluate(int i, const Vector& x) const {
  if (i < 0 || i >= init_.n_equations) throw std::out_of_range("OperatorFamily: equation index");
  if (x.size() != init_.dim_x) throw std::invalid_argument("OperatorFamily: x dimension mismatch");
  if (init_.domain_box) {
    const Index j = init_.domain_box->first_violation(x);
    if (j >= 0)
      throw DomainViolation(j, x[j], init_.domain_box->lower[j], init_.domain_box->upper[j]);
  }
  return init_.evaluate(i, x);
}

LinearMap OperatorFamily::linearize(int i, const Vector& x) const {
  if (i < 0 || i >= init_.n_equations) throw std::out_of_range("OperatorFamily: equation index");
  if (x.size() != init_.dim_x) throw std::invalid_argument("OperatorFamily: x dimension mismatch");
  return init_.linearize(i, x);
}

bool NoisyData::exact_regime() const {
  for (double d : delta)
    if (d != 0.0) return false;
  return true;
}

std::pair<Vector, double> residual(const OperatorFamily& family, int i, const Vector& x,
                                   const NoisyData& data) {
  Vector r = data.y_delta.at(static_cast<std::size_t>(i)) - family.evaluate(i, x);
  const double norm = r.norm();
  return {std::move(r), norm};
}

NoisyData make_noisy_data(const std::vector<Vector>& exact_y, double rel_noise,
                          std::uint64_t seed) {
  if (!(rel_noise >= 0.0)) throw std::invalid_argument("make_noisy_data: rel_noise must be >= 0");
  NoisyData out;
  out.seed = seed;
  out.exact_y = exact_y;
  out.y_delta.reserve(exact_y.size());
  out.delta.reserve(exact_y.size());
  for (std::size_t i = 0; i < exact_y.size(); ++i) {
    const Vector& y = exact_y[i];
    if (!y.allFinite()) throw std::invalid_argument("make_noisy_data: non-finite exact data");
    const double target = rel_noise * y.norm();
    if (target == 0.0) {
      out.y_delta.push_back(y);
      out.delta.push_back(0.0);
      continue;
    }
    Rng rng(mix_seed(seed, i));
    Vector g = rng.gaussian_vector(y.size());
    if (g.norm() == 0.0) g[0] = 1.0;
    const Vector e = (target / g.norm()) * g;
    out.y_delta.push_back(y + e);
    out.delta.push_back(e.norm());  // equals the target up to round-off, and
                                    // ||y_delta - y|| exactly by construction
  }
  return out;
}

Vector sample_in_ball(const Vector& center, double radius, Rng& rng) {
  Vector g = rng.gaussian_vector(center.size());
  const double gn = g.norm();
  const double u = rng.next_uniform();
  if (gn == 0.0) return center;
  const double r = radius * std::pow(u, 1.0 / static_cast<double>(center.size()));
  return center + (r / gn) * g;
}

double estimate_tangential_cone(const OperatorFamily& family, int i, const Vector& x_center,
                                double radius, int n_samples, std::uint64_t seed) {
  if (!(radius > 0.0)) throw std::invalid_argument("estimate_tangential_cone: radius must be > 0");
  if (n_samples < 1) throw std::invalid_argument("estimate_tangential_cone: n_samples must be >= 1");
  Rng rng(mix_seed(seed, 0x74636331u + static_cast<std::uint64_t>(i)));
  double worst = -1.0;
  for (int s = 0; s < n_samples; ++s) {
    Vector x = sample_in_ball(x_center, radius, rng);
    Vector xb = sample_in_ball(x_center, radius, rng);
    if (family.domain_box()) {
      x = clip_to_box(std::move(x), *family.domain_box());
      xb = clip_to_box(std::move(xb), *family.domain_box());
    }
    const Vector fx = family.evaluate(i, x);
    const Vector fxb = family.evaluate(i, xb);
    const Vector dy = fxb - fx;
    const double denom = dy.norm();
    if (denom < 1e-14) continue;
    const Vector lin = family.linearize(i, x).apply(xb - x);
    worst = std::max(worst, (dy - lin).norm() / denom);
  }
  if (worst < 0.0) throw std::runtime_error("estimate_tangential_cone: no informative samples");
  return worst;
}

}  // namespace regkacz
