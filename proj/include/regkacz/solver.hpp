#pragma once

#include "regkacz/model.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace regkacz {

enum class AlphaMode { fixed, residual_matched };
enum class RecordLevel { summary, full_trace };
enum class StopReason { discrepancy_cycle, cycle_budget, exact_data_converged, domain_violation };

std::string to_string(AlphaMode m);
std::string to_string(RecordLevel r);
std::string to_string(StopReason r);

struct SolverConfig {
  double alpha = 3.15;
  double tau = 2.0;
  double q = 0.75;
  double eta = 0.0;
  double C = 1.0;
  AlphaMode alpha_mode = AlphaMode::fixed;
  InnerSolvePolicy inner;
  int max_cycles = 500;
  /// Exact-data stopping threshold, relative to the largest initial residual.
  double exact_data_rel_tol = 1e-10;
  RecordLevel record_level = RecordLevel::full_trace;

  /// Throws InfeasibleParameters naming the failed constraint. In fixed mode
  /// the full triple is checked:
  ///   tau > (1+eta)/(1-eta),  eta + (1+eta)/tau < q < 1,  alpha > C^2 q/(1-q).
  void validate() const;
};

struct ParameterSelection {
  double tau = 0.0;
  double q = 0.0;
  double alpha = 0.0;
};

/// Picks (tau, q, alpha) satisfying the three constraints above strictly.
/// When tau is absent it is set to twice its feasibility floor; q is the
/// midpoint of its open interval; alpha = safety * C^2 q/(1-q).
ParameterSelection select_parameters(double eta, double C, std::optional<double> tau,
                                     double safety);

struct StepRecord {
  long k = 0;
  int sub_index = 0;
  int omega = 0;
  double residual_norm = 0.0;
  /// ||F'(x) h + F(x) - y_delta||, the update form of the damped step residual.
  std::optional<double> predicted_residual_norm;
  double h_norm = 0.0;
  /// ||x_k - x*|| at the step's starting iterate (full-trace runs with truth).
  std::optional<double> error_to_truth;
  std::optional<double> alpha_used;
  int cg_iters = 0;
  double cg_rel_residual = 0.0;
  /// Resolvent form ||alpha (A A* + alpha I)^{-1} (F(x) - y_delta)|| and the
  /// vector distance between the two forms (full-trace runs).
  std::optional<double> resolvent_residual_norm;
  std::optional<double> form_gap;
};

struct RunResult {
  long stop_index = 0;
  StopReason stop_reason = StopReason::cycle_budget;
  Vector final_x;
  std::vector<StepRecord> trace;  // one record per executed step
  std::vector<int> nonloped_per_cycle;
  std::vector<double> final_residual_norms;  // re-evaluated at final_x
  double adjoint_spot_max = 0.0;             // per-cycle adjoint consistency probes
  double max_distance_from_x0 = 0.0;         // for the monitoring radius, never enforced
  std::string abort_message;                 // set for domain-violation stops

  long cycles_executed() const { return static_cast<long>(nonloped_per_cycle.size()); }
  long total_nonloped() const;
};

struct LmkScratch {
  std::vector<Vector> warm_h;
  std::vector<std::optional<double>> matched_alpha;
  explicit LmkScratch(int n_equations)
      : warm_h(static_cast<std::size_t>(n_equations)),
        matched_alpha(static_cast<std::size_t>(n_equations)) {}
};

struct StepOutcome {
  Vector x_next;
  StepRecord record;
};

/// One Kaczmarz step of the damped Gauss-Newton iteration: skip the update
/// when the sub-equation residual is below tau * delta (for exact data the
/// update always runs), otherwise add h = (A*A + alpha I)^{-1} A* (y - F(x)).
StepOutcome lmk_step(const OperatorFamily& family, const NoisyData& data, const Vector& x,
                     long k, const SolverConfig& config, LmkScratch* scratch = nullptr);

/// Cycles lmk_step over the equations. Stops at the first cycle in which
/// every step loped (noisy data), when all residuals fall below the exact-data
/// threshold (exact data), or when the cycle budget runs out. A domain
/// violation aborts with the partial trace attached.
RunResult run_llmk(const OperatorFamily& family, const NoisyData& data, Vector x0,
                   const SolverConfig& config);

/// Loping Landweber-Kaczmarz baseline: h = step_size * F'(x)^* (y - F(x)),
/// same loping rule and stopping. Requires step_size * C^2 <= 1.
RunResult run_llk(const OperatorFamily& family, const NoisyData& data, Vector x0,
                  double step_size, const SolverConfig& config);

/// F'(x)(x_next - x) + F(x) - y_delta: the residual the local linear model
/// predicts at the updated iterate.
std::pair<Vector, double> predicted_residual(const OperatorFamily& family, int i,
                                             const Vector& x, const Vector& x_next,
                                             const NoisyData& data);

/// alpha (A A* + alpha I)^{-1} (F(x) - y_delta): the same quantity through
/// the data-space resolvent, used to cross-check the update form.
std::pair<Vector, double> resolvent_residual(const OperatorFamily& family, int i,
                                             const Vector& x, const NoisyData& data,
                                             double alpha, const InnerSolvePolicy& policy);

struct MatchedAlpha {
  double alpha = 0.0;
  bool clipped_low = false;
  bool clipped_high = false;
  int evaluations = 0;
};

/// Finds alpha with ||alpha (A A* + alpha I)^{-1} r|| = q ||r|| by bisection
/// in log(alpha), using that the left side increases monotonically in alpha.
/// When the target is outside the bracket the nearest endpoint is returned
/// flagged (or an error is thrown in strict mode).
MatchedAlpha residual_matched_alpha(const LinearMap& map, const Vector& r, double q,
                                    std::pair<double, double> bracket, double rel_tol,
                                    const InnerSolvePolicy& policy,
                                    std::optional<double> warm_start = std::nullopt,
                                    bool strict_bracket = false);

/// Per-step bracket used by the residual-matched mode.
std::pair<double, double> matched_alpha_bracket(double C);

struct MonotonicityViolation {
  long k = 0;
  double amount = 0.0;
  double cg_rel_residual = 0.0;
};

struct MonotonicityReport {
  int steps_checked = 0;
  double slack = 0.0;
  std::vector<MonotonicityViolation> violations;           // at tight inner tolerance
  std::vector<MonotonicityViolation> loose_tol_flags;      // attributable to loose inner solves
  std::vector<MonotonicityViolation> estimate_violations;  // descent-estimate check

  bool passed() const { return violations.empty() && estimate_violations.empty(); }
};

/// Checks ||x_{k+1} - x*|| <= ||x_k - x*|| + slack along the trace, with
/// slack = 1e-10 ||x0 - x*||, and that the per-step descent estimate
///   e_{k+1}^2 - e_k^2 <= 2 (omega/alpha) ||B|| [ (eta-q) r + (1+eta) delta ] - h^2
/// bounds the observed squared decrement. Requires a full trace recorded
/// against the same reference vector.
MonotonicityReport verify_monotonicity(const RunResult& run, const Vector& x_ref,
                                       const SolverConfig& config, const NoisyData& data);

struct SummabilityReport {
  double residual_sq_sum = 0.0, residual_sq_bound = 0.0;
  double transform_sq_sum = 0.0, transform_sq_bound = 0.0;
  double cross_sum = 0.0, cross_bound = 0.0;
  double step_sq_sum = 0.0, step_sq_bound = 0.0;

  bool passed() const;
};

/// Exact-data runs only: partial sums of the four summable series against
/// their a-priori bounds in terms of alpha, q, eta and ||x0 - x*||.
SummabilityReport verify_summability(const RunResult& run, const SolverConfig& config);

}  // namespace regkacz
