#pragma once

#include "regkacz/model.hpp"

#include <string>
#include <vector>

namespace regkacz {

/// Row-block partition of a severely ill-conditioned smoothing operator
/// (squared cumulative integration on a uniform grid); eta = 0.
struct BlockLinearProblem {
  int n = 0;
  int n_blocks = 0;
  Matrix kernel;                 // full stacked operator
  std::vector<int> block_start;  // size n_blocks + 1; rows [s_i, s_{i+1}) form block i
  Vector x_true;
  Vector x0;
  double block_norm_bound = 0.0;  // max block spectral norm, computed exactly
};

struct BlockLinearBuild {
  OperatorFamily family;
  BlockLinearProblem problem;
  std::vector<Vector> exact_y;
};

BlockLinearBuild build_block_linear(int n, int n_blocks, std::uint64_t seed);

enum class MeasurementKind { full_field, boundary_flux };

struct EllipticLoad {
  double center = 0.5;
  double width = 0.1;
  double amplitude = 0.0;
  double u_left = 0.0;
  double u_right = 0.0;
};

struct Elliptic1DProblem {
  int n_cells = 0;
  double gamma_min = 0.0;
  double gamma_max = 0.0;
  std::vector<EllipticLoad> loads;
  Vector gamma_true;  // per cell, unscaled
  Vector x_true;      // sqrt(h)-scaled coordinates used by the family
  Vector x0;
  MeasurementKind measurement = MeasurementKind::full_field;
  bool fine_data = false;
  double coordinate_scale = 0.0;  // sqrt(h)
};

struct Elliptic1DBuild {
  OperatorFamily family;
  Elliptic1DProblem problem;
  std::vector<Vector> exact_y;
};

/// Coefficient identification for -(gamma u')' = f with Dirichlet data and
/// gamma piecewise constant per cell. Parameter and field vectors use
/// sqrt(h)-scaled coordinates so Euclidean norms approximate L2 norms and
/// noise levels are mesh-independent. The linearization ships with its exact
/// discrete adjoint (one extra solve of the same tridiagonal system).
/// fine_data generates the exact data on a 2x finer grid.
Elliptic1DBuild build_elliptic_1d(int n_cells, int n_loads, const std::string& profile,
                                  std::uint64_t seed,
                                  MeasurementKind measurement = MeasurementKind::full_field,
                                  bool fine_data = false);

/// Interior field of the forward solve on the inversion grid; exposed for
/// oracle tests.
Vector elliptic_forward_field(const Vector& gamma_cells, const EllipticLoad& load);

/// One-sided fluxes gamma u' at the left and right boundary nodes.
std::pair<double, double> elliptic_boundary_fluxes(const Vector& gamma_cells,
                                                   const EllipticLoad& load);

/// Max over probes of ||F_i'(x) - F_i'(x0)|| (dense difference). A zero value
/// certifies an x-independent Jacobian, for which the null-space inclusion
/// behind minimum-norm convergence holds automatically.
double jacobian_variation(const OperatorFamily& family, const std::vector<Vector>& probes);

struct ProblemDefaults {
  double eta = 0.0;
  double C = 1.0;
  double tau_noisy = 2.0;
  double tau_exact = 40.0;
  double safety = 1.05;
  int max_cycles = 500;
};

struct ExperimentInstance {
  OperatorFamily family;
  NoisyData data;
  Vector x0;
  std::vector<Vector> exact_y;
  ProblemDefaults defaults;
  std::string problem_id;
};

struct ProblemInfo {
  std::string id;
  std::string description;
  int n_equations = 0;
  Index dim_x = 0;
};

/// Deterministic bundle for a registered problem id; the seed governs only
/// the noise realization, not the problem itself. Throws std::out_of_range
/// for unknown ids.
ExperimentInstance make_experiment_instance(const std::string& id, double rel_noise,
                                            std::uint64_t seed);

std::vector<ProblemInfo> list_problems();

}  // namespace regkacz
