#pragma once

#include "regkacz/types.hpp"

#include <cstdint>
#include <functional>

namespace regkacz {

/// Matrix-free linear operator with an explicit adjoint. The closures must be
/// pure; a map is then safe to use from several threads at once.
class LinearMap {
public:
  using Apply = std::function<Vector(const Vector&)>;

  LinearMap(Index dim_in, Index dim_out, Apply forward, Apply adjoint);

  static LinearMap identity(Index n);
  static LinearMap from_dense(Matrix a);

  Index dim_in() const noexcept { return dim_in_; }
  Index dim_out() const noexcept { return dim_out_; }

  Vector apply(const Vector& u) const;
  Vector apply_adjoint(const Vector& w) const;

private:
  Index dim_in_;
  Index dim_out_;
  Apply forward_;
  Apply adjoint_;
};

enum class InnerSolveMode { direct_dense, conjugate_gradient };

struct InnerSolvePolicy {
  InnerSolveMode mode = InnerSolveMode::conjugate_gradient;
  int cg_max_iters = 400;
  double cg_rel_tol = 1e-10;
  int dense_threshold = 512;  // direct mode refuses dimensions above this
  bool warm_start = false;

  void validate() const;

  /// Tolerances used by property checks and diagnostics.
  static InnerSolvePolicy tight();
  /// Three loosely converged CG steps per inner solve; the cost profile of
  /// the showcase experiments.
  static InnerSolvePolicy experiment();
};

struct NormalSolveResult {
  Vector solution;
  int iterations = 0;
  double residual_norm = 0.0;  // ||(A*A + alpha I) h - A* rhs||, recomputed at exit
  double rhs_norm = 0.0;       // ||A* rhs||

  double relative_residual() const { return rhs_norm > 0.0 ? residual_norm / rhs_norm : 0.0; }
};

/// Solves (A*A + alpha I) h = A* rhs. CG mode touches the operator only
/// through forward/adjoint applications; direct mode materializes the normal
/// matrix and factorizes it.
NormalSolveResult solve_regularized_normal(const LinearMap& map, const Vector& rhs, double alpha,
                                           const InnerSolvePolicy& policy,
                                           const Vector* warm = nullptr);

struct ResolventResult {
  Vector value;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Evaluates alpha (A A* + alpha I)^{-1} w in the data space.
ResolventResult apply_output_resolvent(const LinearMap& map, const Vector& w, double alpha,
                                       const InnerSolvePolicy& policy);

/// Power iteration on A*A. Deterministic for a given seed; the Rayleigh
/// quotient is a lower estimate of ||A||, so callers add a safety factor.
double estimate_operator_norm(const LinearMap& map, int iters, std::uint64_t seed);

/// Applies the map to unit vectors; intended for small dimensions.
Matrix materialize(const LinearMap& map);

/// Normalized adjoint-consistency defect |<Au,w> - <u,A*w>| / scale for one
/// seeded probe pair.
double adjoint_probe(const LinearMap& map, std::uint64_t seed);
double max_adjoint_probe(const LinearMap& map, int n_probes, std::uint64_t seed);

}  // namespace regkacz
