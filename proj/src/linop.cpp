#include "regkacz/linop.hpp"

#include "regkacz/rng.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

namespace regkacz {

LinearMap::LinearMap(Index dim_in, Index dim_out, Apply forward, Apply adjoint)
    : dim_in_(dim_in), dim_out_(dim_out), forward_(std::move(forward)), adjoint_(std::move(adjoint)) {
  if (dim_in_ < 1 || dim_out_ < 1)
    throw std::invalid_argument("LinearMap: dimensions must be positive");
  if (!forward_ || !adjoint_) throw std::invalid_argument("LinearMap: missing closure");
}

LinearMap LinearMap::identity(Index n) {
  return LinearMap(n, n, [](const Vector& u) { return u; }, [](const Vector& w) { return w; });
}

LinearMap LinearMap::from_dense(Matrix a) {
  auto m = std::make_shared<const Matrix>(std::move(a));
  return LinearMap(
      m->cols(), m->rows(), [m](const Vector& u) -> Vector { return (*m) * u; },
      [m](const Vector& w) -> Vector { return m->transpose() * w; });
}

Vector LinearMap::apply(const Vector& u) const {
  if (u.size() != dim_in_)
    throw std::invalid_argument("LinearMap::apply: expected size " + std::to_string(dim_in_) +
                                ", got " + std::to_string(u.size()));
  return forward_(u);
}

Vector LinearMap::apply_adjoint(const Vector& w) const {
  if (w.size() != dim_out_)
    throw std::invalid_argument("LinearMap::apply_adjoint: expected size " +
                                std::to_string(dim_out_) + ", got " + std::to_string(w.size()));
  return adjoint_(w);
}

void InnerSolvePolicy::validate() const {
  if (cg_max_iters < 1) throw std::invalid_argument("InnerSolvePolicy: cg_max_iters must be >= 1");
  if (!(cg_rel_tol > 0.0 && cg_rel_tol < 1.0))
    throw std::invalid_argument("InnerSolvePolicy: cg_rel_tol must lie in (0, 1)");
  if (dense_threshold < 1)
    throw std::invalid_argument("InnerSolvePolicy: dense_threshold must be positive");
}

InnerSolvePolicy InnerSolvePolicy::tight() {
  InnerSolvePolicy p;
  p.mode = InnerSolveMode::conjugate_gradient;
  p.cg_max_iters = 400;
  p.cg_rel_tol = 1e-10;
  return p;
}

InnerSolvePolicy InnerSolvePolicy::experiment() {
  InnerSolvePolicy p;
  p.mode = InnerSolveMode::conjugate_gradient;
  p.cg_max_iters = 3;
  p.cg_rel_tol = 1e-2;
  return p;
}

namespace {

struct CgOutcome {
  int iterations = 0;
  double residual_norm = 0.0;  // true residual, recomputed at exit
};

// Plain CG for an SPD operator. The recurrence residual drives the stopping
// test; the returned residual is recomputed from scratch since the recurrence
// drifts near round-off.
CgOutcome conjugate_gradient(const std::function<Vector(const Vector&)>& op, const Vector& b,
                             Vector& x, double rel_tol, int max_iters) {
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    x.setZero();
    return {0, 0.0};
  }
  Vector r = b - op(x);
  Vector p = r;
  double rho = r.squaredNorm();
  const double stop = rel_tol * b_norm;
  int it = 0;
  while (it < max_iters && std::sqrt(rho) > stop) {
    const Vector ap = op(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) break;  // round-off floor
    const double step = rho / curvature;
    x += step * p;
    r -= step * ap;
    const double rho_next = r.squaredNorm();
    p = r + (rho_next / rho) * p;
    rho = rho_next;
    ++it;
  }
  return {it, (b - op(x)).norm()};
}

Matrix materialize_gram_in(const LinearMap& a, double alpha) {
  Matrix ad = materialize(a);
  Matrix gram = ad.transpose() * ad;
  gram.diagonal().array() += alpha;
  return gram;
}

Matrix materialize_gram_out(const LinearMap& a, double alpha) {
  Matrix ad = materialize(a);
  Matrix gram = ad * ad.transpose();
  gram.diagonal().array() += alpha;
  return gram;
}

}  // namespace

NormalSolveResult solve_regularized_normal(const LinearMap& map, const Vector& rhs, double alpha,
                                           const InnerSolvePolicy& policy, const Vector* warm) {
  policy.validate();
  if (!(alpha > 0.0)) throw std::invalid_argument("solve_regularized_normal: alpha must be positive");
  if (!rhs.allFinite())
    throw std::invalid_argument("solve_regularized_normal: rhs has non-finite entries");
  if (rhs.size() != map.dim_out())
    throw std::invalid_argument("solve_regularized_normal: rhs size mismatch");

  const Vector atb = map.apply_adjoint(rhs);
  NormalSolveResult out;
  out.rhs_norm = atb.norm();

  if (policy.mode == InnerSolveMode::direct_dense) {
    if (map.dim_in() > policy.dense_threshold)
      throw std::invalid_argument("solve_regularized_normal: dimension exceeds dense_threshold");
    const Matrix gram = materialize_gram_in(map, alpha);
    out.solution = gram.ldlt().solve(atb);
    out.residual_norm = (gram * out.solution - atb).norm();
    return out;
  }

  Vector h = (policy.warm_start && warm != nullptr && warm->size() == map.dim_in())
                 ? *warm
                 : Vector::Zero(map.dim_in());
  auto op = [&](const Vector& v) -> Vector {
    return map.apply_adjoint(map.apply(v)) + alpha * v;
  };
  const CgOutcome cg = conjugate_gradient(op, atb, h, policy.cg_rel_tol, policy.cg_max_iters);
  out.solution = std::move(h);
  out.iterations = cg.iterations;
  out.residual_norm = cg.residual_norm;
  return out;
}

ResolventResult apply_output_resolvent(const LinearMap& map, const Vector& w, double alpha,
                                       const InnerSolvePolicy& policy) {
  policy.validate();
  if (!(alpha > 0.0)) throw std::invalid_argument("apply_output_resolvent: alpha must be positive");
  if (w.size() != map.dim_out())
    throw std::invalid_argument("apply_output_resolvent: vector size mismatch");

  ResolventResult out;
  if (policy.mode == InnerSolveMode::direct_dense) {
    if (map.dim_out() > policy.dense_threshold)
      throw std::invalid_argument("apply_output_resolvent: dimension exceeds dense_threshold");
    const Matrix gram = materialize_gram_out(map, alpha);
    Vector s = gram.ldlt().solve(w);
    out.relative_residual = w.norm() > 0.0 ? (gram * s - w).norm() / w.norm() : 0.0;
    out.value = alpha * s;
    return out;
  }

  Vector s = Vector::Zero(map.dim_out());
  auto op = [&](const Vector& v) -> Vector { return map.apply(map.apply_adjoint(v)) + alpha * v; };
  const CgOutcome cg = conjugate_gradient(op, w, s, policy.cg_rel_tol, policy.cg_max_iters);
  out.iterations = cg.iterations;
  out.relative_residual = w.norm() > 0.0 ? cg.residual_norm / w.norm() : 0.0;
  out.value = alpha * s;
  return out;
}

double estimate_operator_norm(const LinearMap& map, int iters, std::uint64_t seed) {
  if (iters < 1) throw std::invalid_argument("estimate_operator_norm: iters must be >= 1");
  Rng rng(mix_seed(seed, 0x6f72626eu));
  Vector v = rng.gaussian_vector(map.dim_in());
  if (v.norm() == 0.0) v.setOnes();
  v.normalize();
  double rayleigh = 0.0;
  for (int t = 0; t < iters; ++t) {
    const Vector w = map.apply_adjoint(map.apply(v));
    rayleigh = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;  // probe in the kernel; for the zero map this is exact
    v = w / wn;
  }
  return std::sqrt(std::max(rayleigh, 0.0));
}

Matrix materialize(const LinearMap& map) {
  Matrix a(map.dim_out(), map.dim_in());
  Vector e = Vector::Zero(map.dim_in());
  for (Index j = 0; j < map.dim_in(); ++j) {
    e[j] = 1.0;
    a.col(j) = map.apply(e);
    e[j] = 0.0;
  }
  return a;
}

double adjoint_probe(const LinearMap& map, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x70726f62u));
  const Vector u = rng.gaussian_vector(map.dim_in());
  const Vector w = rng.gaussian_vector(map.dim_out());
  const Vector au = map.apply(u);
  const Vector atw = map.apply_adjoint(w);
  const double lhs = au.dot(w);
  const double rhs = u.dot(atw);
  const double scale = au.norm() * w.norm() + u.norm() * atw.norm() + 1e-300;
  return std::abs(lhs - rhs) / scale;
}

double max_adjoint_probe(const LinearMap& map, int n_probes, std::uint64_t seed) {
  double worst = 0.0;
  for (int p = 0; p < n_probes; ++p) worst = std::max(worst, adjoint_probe(map, mix_seed(seed, p)));
  return worst;
}

}  // namespace regkacz
