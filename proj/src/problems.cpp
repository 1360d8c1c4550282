#include "regkacz/problems.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace regkacz {

namespace {

// ---------------------------------------------------------------------------
// block-linear problem
// ---------------------------------------------------------------------------

// Discrete Green's matrix of -u'' on (0,1) with zero boundary values: the
// inverse of the second-difference matrix on n interior points. A smoothing
// (double-integration) operator whose eigenpairs are known in closed form:
// eigenvectors sin(k pi t_j), eigenvalues 1 / ((4/h^2) sin^2(k pi h / 2)),
// so the condition number grows like (2n/pi)^2.
Matrix greens_smoothing_kernel(int n) {
  const double h = 1.0 / (n + 1);
  Matrix k = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = 2.0 / (h * h);
    if (i + 1 < n) {
      k(i, i + 1) = -1.0 / (h * h);
      k(i + 1, i) = -1.0 / (h * h);
    }
  }
  return k.ldlt().solve(Matrix::Identity(n, n));
}

// ---------------------------------------------------------------------------
// elliptic coefficient problem: -(gamma u')' = f on (0,1), Dirichlet data,
// gamma piecewise constant per cell, P1 elements on a uniform grid
// ---------------------------------------------------------------------------

struct Tridiag {
  Vector diag;  // m entries
  Vector off;   // m-1 entries, symmetric coupling

  Vector solve(const Vector& rhs) const {
    const Index m = diag.size();
    Vector cp(m), dp(m);
    cp[0] = m > 1 ? off[0] / diag[0] : 0.0;
    dp[0] = rhs[0] / diag[0];
    for (Index i = 1; i < m; ++i) {
      const double denom = diag[i] - off[i - 1] * cp[i - 1];
      cp[i] = i + 1 < m ? off[i] / denom : 0.0;
      dp[i] = (rhs[i] - off[i - 1] * dp[i - 1]) / denom;
    }
    Vector x(m);
    x[m - 1] = dp[m - 1];
    for (Index i = m - 2; i >= 0; --i) x[i] = dp[i] - cp[i] * x[i + 1];
    return x;
  }
};

double load_density(const EllipticLoad& ld, double t) {
  const double z = (t - ld.center) / ld.width;
  return ld.amplitude * std::exp(-z * z);
}

struct EllipticGrid {
  int n_cells = 0;
  double h = 0.0;

  explicit EllipticGrid(int n) : n_cells(n), h(1.0 / n) {}

  Tridiag assemble(const Vector& gamma) const {
    const Index m = n_cells - 1;
    Tridiag k;
    k.diag.resize(m);
    k.off.resize(m - 1);
    for (Index i = 1; i <= m; ++i) k.diag[i - 1] = (gamma[i - 1] + gamma[i]) / h;
    for (Index i = 1; i < m; ++i) k.off[i - 1] = -gamma[i] / h;
    return k;
  }

  Vector load_vector(const Vector& gamma, const EllipticLoad& ld) const {
    const Index m = n_cells - 1;
    Vector b(m);
    for (Index i = 1; i <= m; ++i) b[i - 1] = h * load_density(ld, i * h);
    b[0] += gamma[0] * ld.u_left / h;
    b[m - 1] += gamma[n_cells - 1] * ld.u_right / h;
    return b;
  }

  Vector interior_field(const Vector& gamma, const EllipticLoad& ld) const {
    return assemble(gamma).solve(load_vector(gamma, ld));
  }

  // cell gradients of the full field (with boundary values attached)
  Vector cell_gradients(const Vector& u_interior, const EllipticLoad& ld) const {
    Vector du(n_cells);
    auto node = [&](Index i) -> double {
      if (i == 0) return ld.u_left;
      if (i == n_cells) return ld.u_right;
      return u_interior[i - 1];
    };
    for (Index j = 0; j < n_cells; ++j) du[j] = (node(j + 1) - node(j)) / h;
    return du;
  }

  // derivative of the discrete equilibrium equations with respect to gamma,
  // applied as M v and M^T w (two nonzeros per row)
  Vector apply_m(const Vector& du, const Vector& v) const {
    const Index m = n_cells - 1;
    Vector out(m);
    for (Index i = 1; i <= m; ++i) out[i - 1] = du[i - 1] * v[i - 1] - du[i] * v[i];
    return out;
  }

  Vector apply_mt(const Vector& du, const Vector& w) const {
    Vector out(n_cells);
    auto w_node = [&](Index i) -> double {
      if (i == 0 || i == n_cells) return 0.0;
      return w[i - 1];
    };
    for (Index j = 0; j < n_cells; ++j) out[j] = du[j] * (w_node(j + 1) - w_node(j));
    return out;
  }
};

struct EllipticModel {
  EllipticGrid grid;
  std::vector<EllipticLoad> loads;
  MeasurementKind measurement = MeasurementKind::full_field;
  double scale = 0.0;  // sqrt(h): Euclidean norms of scaled vectors ~ L2 norms

  explicit EllipticModel(int n_cells) : grid(n_cells), scale(std::sqrt(1.0 / n_cells)) {}

  Index data_dim() const {
    return measurement == MeasurementKind::full_field ? grid.n_cells - 1 : 1;
  }

  Vector gamma_of(const Vector& x) const { return x / scale; }

  Vector observe(const Vector& gamma, int i) const {
    const EllipticLoad& ld = loads[static_cast<std::size_t>(i)];
    const Vector u = grid.interior_field(gamma, ld);
    if (measurement == MeasurementKind::full_field) return scale * u;
    Vector out(1);
    out[0] = right_flux(gamma, u, ld);
    return out;
  }

  double right_flux(const Vector& gamma, const Vector& u, const EllipticLoad& ld) const {
    const Index m = grid.n_cells - 1;
    return gamma[grid.n_cells - 1] * (ld.u_right - u[m - 1]) / grid.h;
  }

  // Exact discrete sensitivity of the observation with respect to the scaled
  // parameter x. The field perturbation is du = -K^{-1} M v; for full-field
  // data the sqrt(h) factors on the parameter and field sides cancel. The
  // adjoint reuses the same (symmetric) stiffness solve, so the adjoint test
  // holds to round-off.
  LinearMap sensitivity(const Vector& gamma, int i) const {
    const EllipticLoad& ld = loads[static_cast<std::size_t>(i)];
    auto st = std::make_shared<const SensitivityState>(make_state(gamma, ld));
    const Index dim_x = grid.n_cells;
    if (measurement == MeasurementKind::full_field) {
      return LinearMap(
          dim_x, grid.n_cells - 1,
          [st](const Vector& v) -> Vector {
            return -st->stiffness.solve(st->grid.apply_m(st->du, v));
          },
          [st](const Vector& w) -> Vector {
            return -st->grid.apply_mt(st->du, st->stiffness.solve(w));
          });
    }
    return LinearMap(
        dim_x, 1,
        [st](const Vector& v) -> Vector {
          const Index m = st->grid.n_cells - 1;
          const Vector t = st->stiffness.solve(st->grid.apply_m(st->du, v));
          Vector out(1);
          out[0] = (st->boundary_jump * v[st->grid.n_cells - 1] +
                    st->gamma_last / st->grid.h * t[m - 1]) /
                   st->scale;
          return out;
        },
        [st](const Vector& w) -> Vector {
          const Index m = st->grid.n_cells - 1;
          Vector e = Vector::Zero(m);
          e[m - 1] = w[0] * st->gamma_last / st->grid.h;
          Vector out = st->grid.apply_mt(st->du, st->stiffness.solve(e));
          out[st->grid.n_cells - 1] += w[0] * st->boundary_jump;
          return out / st->scale;
        });
  }

private:
  struct SensitivityState {
    EllipticGrid grid;
    Tridiag stiffness;
    Vector du;                   // cell gradients of the base field
    double gamma_last = 0.0;
    double boundary_jump = 0.0;  // (u_right - u_m)/h, flux sensitivity to gamma_{n-1}
    double scale = 0.0;
  };

  SensitivityState make_state(const Vector& gamma, const EllipticLoad& ld) const {
    SensitivityState s{grid, grid.assemble(gamma), Vector(), 0.0, 0.0, scale};
    const Vector u = s.stiffness.solve(grid.load_vector(gamma, ld));
    s.du = grid.cell_gradients(u, ld);
    s.gamma_last = gamma[grid.n_cells - 1];
    s.boundary_jump = (ld.u_right - u[grid.n_cells - 2]) / grid.h;
    return s;
  }
};

Vector gamma_profile(const std::string& profile, int n_cells) {
  Vector g(n_cells);
  const double h = 1.0 / n_cells;
  for (int j = 0; j < n_cells; ++j) {
    const double t = (j + 0.5) * h;
    if (profile == "constant") {
      g[j] = 1.25;
    } else if (profile == "bump") {
      const double z = (t - 0.5) / 0.18;
      g[j] = 1.0 + 4.0 * std::exp(-z * z);
    } else {
      throw std::invalid_argument("build_elliptic_1d: unknown profile '" + profile + "'");
    }
  }
  return g;
}

std::vector<EllipticLoad> default_loads(int n_loads) {
  std::vector<EllipticLoad> loads(static_cast<std::size_t>(n_loads));
  for (int i = 0; i < n_loads; ++i) {
    loads[static_cast<std::size_t>(i)].center = static_cast<double>(i + 1) / (n_loads + 1);
    loads[static_cast<std::size_t>(i)].width = 0.1;
    loads[static_cast<std::size_t>(i)].amplitude = 30.0;
  }
  return loads;
}

// exact data on a grid refined by `factor`, restricted to the coarse nodes
Vector fine_observation(const EllipticModel& coarse, const Vector& gamma_coarse, int i,
                        int factor) {
  const int n_f = coarse.grid.n_cells * factor;
  EllipticModel fine(n_f);
  fine.loads = coarse.loads;
  fine.measurement = coarse.measurement;
  Vector gamma_f(n_f);
  for (int j = 0; j < n_f; ++j) gamma_f[j] = gamma_coarse[j / factor];
  const EllipticLoad& ld = coarse.loads[static_cast<std::size_t>(i)];
  const Vector u_f = fine.grid.interior_field(gamma_f, ld);
  if (coarse.measurement == MeasurementKind::boundary_flux) {
    Vector out(1);
    out[0] = fine.right_flux(gamma_f, u_f, ld);
    return out;
  }
  const Index m_c = coarse.grid.n_cells - 1;
  Vector out(m_c);
  for (Index ic = 1; ic <= m_c; ++ic) out[ic - 1] = coarse.scale * u_f[ic * factor - 1];
  return out;
}

}  // namespace

BlockLinearBuild build_block_linear(int n, int n_blocks, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("build_block_linear: n must be >= 2");
  if (n_blocks < 1 || n_blocks > n)
    throw std::invalid_argument("build_block_linear: need 1 <= n_blocks <= n");

  BlockLinearProblem prob;
  prob.n = n;
  prob.n_blocks = n_blocks;
  prob.kernel = greens_smoothing_kernel(n);
  prob.block_start.resize(static_cast<std::size_t>(n_blocks) + 1);
  for (int i = 0; i <= n_blocks; ++i)
    prob.block_start[static_cast<std::size_t>(i)] = static_cast<int>(static_cast<long>(i) * n / n_blocks);

  // smooth low-frequency target: the first three singular profiles of the
  // kernel are exactly the lowest sine modes, with a small seeded admixture
  Rng rng(mix_seed(seed, 0xb10cb10cull));
  const double c2 = 0.20 + 0.02 * (2.0 * rng.next_uniform() - 1.0);
  const double c3 = 0.02 + 0.005 * (2.0 * rng.next_uniform() - 1.0);
  prob.x_true.resize(n);
  const double h = 1.0 / (n + 1);
  for (int j = 0; j < n; ++j) {
    const double t = (j + 1) * h;
    prob.x_true[j] = std::sin(std::numbers::pi * t) + c2 * std::sin(2.0 * std::numbers::pi * t) +
                     c3 * std::sin(3.0 * std::numbers::pi * t);
  }
  prob.x0 = Vector::Zero(n);

  std::vector<LinearMap> maps;
  std::vector<Index> dims;
  std::vector<Vector> exact_y;
  prob.block_norm_bound = 0.0;
  for (int i = 0; i < n_blocks; ++i) {
    const int r0 = prob.block_start[static_cast<std::size_t>(i)];
    const int rows = prob.block_start[static_cast<std::size_t>(i) + 1] - r0;
    Matrix block = prob.kernel.middleRows(r0, rows);
    Eigen::JacobiSVD<Matrix> bsvd(block);
    prob.block_norm_bound = std::max(prob.block_norm_bound, bsvd.singularValues()(0));
    exact_y.push_back(block * prob.x_true);
    dims.push_back(rows);
    maps.push_back(LinearMap::from_dense(std::move(block)));
  }

  auto shared_maps = std::make_shared<const std::vector<LinearMap>>(std::move(maps));
  OperatorFamily::Init init;
  init.n_equations = n_blocks;
  init.dim_x = n;
  init.dim_y = dims;
  init.evaluate = [shared_maps](int i, const Vector& x) {
    return (*shared_maps)[static_cast<std::size_t>(i)].apply(x);
  };
  init.linearize = [shared_maps](int i, const Vector&) {
    return (*shared_maps)[static_cast<std::size_t>(i)];
  };
  init.eta = 0.0;
  init.lipschitz_bound = prob.block_norm_bound;
  init.ground_truth = prob.x_true;
  init.monitoring_radius = 2.2 * (prob.x0 - prob.x_true).norm();

  return BlockLinearBuild{OperatorFamily(std::move(init)), std::move(prob), std::move(exact_y)};
}

Elliptic1DBuild build_elliptic_1d(int n_cells, int n_loads, const std::string& profile,
                                  std::uint64_t seed, MeasurementKind measurement,
                                  bool fine_data) {
  if (n_cells < 8) throw std::invalid_argument("build_elliptic_1d: n_cells must be >= 8");
  if (n_loads < 1) throw std::invalid_argument("build_elliptic_1d: n_loads must be >= 1");

  auto model = std::make_shared<EllipticModel>(n_cells);
  model->loads = default_loads(n_loads);
  model->measurement = measurement;

  Elliptic1DProblem prob;
  prob.n_cells = n_cells;
  prob.gamma_min = 0.1;
  prob.gamma_max = 10.0;
  prob.loads = model->loads;
  prob.gamma_true = gamma_profile(profile, n_cells);
  prob.measurement = measurement;
  prob.fine_data = fine_data;
  prob.coordinate_scale = model->scale;
  if (prob.gamma_true.minCoeff() < prob.gamma_min || prob.gamma_true.maxCoeff() > prob.gamma_max)
    throw std::invalid_argument("build_elliptic_1d: profile leaves the coefficient bounds");
  prob.x_true = model->scale * prob.gamma_true;
  prob.x0 = model->scale * Vector::Ones(n_cells);

  std::vector<Vector> exact_y;
  for (int i = 0; i < n_loads; ++i) {
    exact_y.push_back(fine_data ? fine_observation(*model, prob.gamma_true, i, 2)
                                : model->observe(prob.gamma_true, i));
  }

  // author-calibrated uniform bound on the sensitivity norms: probed at the
  // start and at the target, with headroom for the iterates in between
  double c_bound = 0.0;
  for (int i = 0; i < n_loads; ++i) {
    for (const Vector* x : {&prob.x0, &prob.x_true}) {
      const LinearMap a = model->sensitivity(model->gamma_of(*x), i);
      c_bound = std::max(c_bound, estimate_operator_norm(a, 200, mix_seed(seed, 0xce11 + i)));
    }
  }
  c_bound *= 1.10;

  OperatorFamily::Init init;
  init.n_equations = n_loads;
  init.dim_x = n_cells;
  init.dim_y.assign(static_cast<std::size_t>(n_loads), model->data_dim());
  init.evaluate = [model](int i, const Vector& x) { return model->observe(model->gamma_of(x), i); };
  init.linearize = [model](int i, const Vector& x) {
    return model->sensitivity(model->gamma_of(x), i);
  };
  init.domain_box = Box{model->scale * prob.gamma_min * Vector::Ones(n_cells),
                        model->scale * prob.gamma_max * Vector::Ones(n_cells)};
  init.eta = 0.1;
  init.lipschitz_bound = c_bound;
  init.ground_truth = prob.x_true;
  init.monitoring_radius = 2.2 * (prob.x0 - prob.x_true).norm();

  return Elliptic1DBuild{OperatorFamily(std::move(init)), std::move(prob), std::move(exact_y)};
}

Vector elliptic_forward_field(const Vector& gamma_cells, const EllipticLoad& load) {
  if (gamma_cells.size() < 2)
    throw std::invalid_argument("elliptic_forward_field: need at least 2 cells");
  if (gamma_cells.minCoeff() <= 0.0)
    throw std::invalid_argument("elliptic_forward_field: gamma must be positive");
  EllipticGrid grid(static_cast<int>(gamma_cells.size()));
  return grid.interior_field(gamma_cells, load);
}

std::pair<double, double> elliptic_boundary_fluxes(const Vector& gamma_cells,
                                                   const EllipticLoad& load) {
  const int n = static_cast<int>(gamma_cells.size());
  EllipticGrid grid(n);
  const Vector u = grid.interior_field(gamma_cells, load);
  const double left = gamma_cells[0] * (u[0] - load.u_left) / grid.h;
  const double right = gamma_cells[n - 1] * (load.u_right - u[n - 2]) / grid.h;
  return {left, right};
}

double jacobian_variation(const OperatorFamily& family, const std::vector<Vector>& probes) {
  if (probes.size() < 2) throw std::invalid_argument("jacobian_variation: need >= 2 probes");
  double worst = 0.0;
  for (int i = 0; i < family.n_equations(); ++i) {
    const Matrix ref = materialize(family.linearize(i, probes.front()));
    for (std::size_t p = 1; p < probes.size(); ++p) {
      const Matrix other = materialize(family.linearize(i, probes[p]));
      worst = std::max(worst, (other - ref).norm());
    }
  }
  return worst;
}

namespace {

struct RegistryEntry {
  std::string description;
  std::function<std::pair<OperatorFamily, std::vector<Vector>>(Vector& x0, ProblemDefaults&)> build;
};

const std::vector<std::pair<std::string, RegistryEntry>>& registry() {
  static const std::vector<std::pair<std::string, RegistryEntry>> table = {
      {"block-linear-64",
       {"severely ill-conditioned smoothing operator on 64 points, 8 row blocks, eta = 0",
        [](Vector& x0, ProblemDefaults& d) {
          BlockLinearBuild b = build_block_linear(64, 8, 0x5eedb10cull);
          x0 = b.problem.x0;
          d.eta = 0.0;
          d.C = b.problem.block_norm_bound;
          return std::make_pair(std::move(b.family), std::move(b.exact_y));
        }}},
      {"elliptic1d-9loads",
       {"1D diffusion coefficient identification, 9 interior-field measurements, data from a "
        "2x finer grid",
        [](Vector& x0, ProblemDefaults& d) {
          Elliptic1DBuild b = build_elliptic_1d(128, 9, "bump", 0x5eede111ull,
                                                MeasurementKind::full_field, true);
          x0 = b.problem.x0;
          d.eta = b.family.eta();
          d.C = *b.family.lipschitz_bound();
          return std::make_pair(std::move(b.family), std::move(b.exact_y));
        }}},
      {"elliptic1d-9loads-flux",
       {"as elliptic1d-9loads but observing only the boundary flux (one scalar per load); "
        "much less data, much harder",
        [](Vector& x0, ProblemDefaults& d) {
          Elliptic1DBuild b = build_elliptic_1d(128, 9, "bump", 0x5eede111ull,
                                                MeasurementKind::boundary_flux, true);
          x0 = b.problem.x0;
          d.eta = b.family.eta();
          d.C = *b.family.lipschitz_bound();
          return std::make_pair(std::move(b.family), std::move(b.exact_y));
        }}},
  };
  return table;
}

}  // namespace

ExperimentInstance make_experiment_instance(const std::string& id, double rel_noise,
                                            std::uint64_t seed) {
  for (const auto& [key, entry] : registry()) {
    if (key != id) continue;
    Vector x0;
    ProblemDefaults defaults;
    auto [family, exact_y] = entry.build(x0, defaults);
    NoisyData data = make_noisy_data(exact_y, rel_noise, seed);
    return ExperimentInstance{std::move(family), std::move(data), std::move(x0),
                              std::move(exact_y), defaults, id};
  }
  throw std::out_of_range("make_experiment_instance: unknown problem id '" + id + "'");
}

std::vector<ProblemInfo> list_problems() {
  std::vector<ProblemInfo> out;
  for (const auto& [key, entry] : registry()) {
    Vector x0;
    ProblemDefaults defaults;
    auto [family, exact_y] = entry.build(x0, defaults);
    out.push_back(ProblemInfo{key, entry.description, family.n_equations(), family.dim_x()});
  }
  return out;
}

}  // namespace regkacz
