#include "regkacz/solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

namespace regkacz {

std::string to_string(AlphaMode m) {
  return m == AlphaMode::fixed ? "fixed" : "residual-matched";
}

std::string to_string(RecordLevel r) {
  return r == RecordLevel::summary ? "summary" : "full-trace";
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::discrepancy_cycle: return "discrepancy-cycle";
    case StopReason::cycle_budget: return "cycle-budget";
    case StopReason::exact_data_converged: return "exact-data-converged";
    case StopReason::domain_violation: return "domain-violation";
  }
  return "unknown";
}

long RunResult::total_nonloped() const {
  long total = 0;
  for (int c : nonloped_per_cycle) total += c;
  return total;
}

ParameterSelection select_parameters(double eta, double C, std::optional<double> tau,
                                     double safety) {
  if (!(eta >= 0.0 && eta < 1.0))
    throw InfeasibleParameters("select_parameters: eta must lie in [0, 1)");
  if (!(C > 0.0)) throw InfeasibleParameters("select_parameters: C must be positive");
  if (!(safety >= 1.0)) throw InfeasibleParameters("select_parameters: safety must be >= 1");

  const double tau_floor = (1.0 + eta) / (1.0 - eta);
  const double t = tau ? *tau : 2.0 * tau_floor;
  if (!(t > 1.0)) throw InfeasibleParameters("select_parameters: constraint tau > 1 fails");
  const double q_low = eta + (1.0 + eta) / t;
  if (!(q_low < 1.0))
    throw InfeasibleParameters(
        "select_parameters: constraint eta + (1+eta)/tau < 1 fails (equivalently tau > "
        "(1+eta)/(1-eta)); the q-interval is empty for eta=" +
        std::to_string(eta) + ", tau=" + std::to_string(t));

  ParameterSelection sel;
  sel.tau = t;
  sel.q = 0.5 * (q_low + 1.0);
  const double alpha_floor = C * C * sel.q / (1.0 - sel.q);
  sel.alpha = safety * alpha_floor;
  if (!(sel.alpha > alpha_floor))
    sel.alpha = std::nextafter(alpha_floor, std::numeric_limits<double>::infinity());
  return sel;
}

void SolverConfig::validate() const {
  inner.validate();
  if (max_cycles < 1) throw InfeasibleParameters("SolverConfig: max_cycles must be >= 1");
  if (!(eta >= 0.0 && eta < 1.0)) throw InfeasibleParameters("SolverConfig: eta must lie in [0, 1)");
  if (!(C > 0.0)) throw InfeasibleParameters("SolverConfig: C must be positive");
  if (!(exact_data_rel_tol >= 0.0))
    throw InfeasibleParameters("SolverConfig: exact_data_rel_tol must be >= 0");
  if (!(tau > (1.0 + eta) / (1.0 - eta)))
    throw InfeasibleParameters("SolverConfig: constraint tau > (1+eta)/(1-eta) fails");
  if (!(q > eta + (1.0 + eta) / tau && q < 1.0))
    throw InfeasibleParameters("SolverConfig: constraint eta + (1+eta)/tau < q < 1 fails");
  if (alpha_mode == AlphaMode::fixed && !(alpha > C * C * q / (1.0 - q)))
    throw InfeasibleParameters("SolverConfig: constraint alpha > C^2 q/(1-q) fails");
}

std::pair<Vector, double> predicted_residual(const OperatorFamily& family, int i, const Vector& x,
                                             const Vector& x_next, const NoisyData& data) {
  const LinearMap a = family.linearize(i, x);
  Vector b = a.apply(x_next - x) + family.evaluate(i, x) -
             data.y_delta.at(static_cast<std::size_t>(i));
  const double norm = b.norm();
  return {std::move(b), norm};
}

std::pair<Vector, double> resolvent_residual(const OperatorFamily& family, int i, const Vector& x,
                                             const NoisyData& data, double alpha,
                                             const InnerSolvePolicy& policy) {
  const LinearMap a = family.linearize(i, x);
  const Vector fmy = family.evaluate(i, x) - data.y_delta.at(static_cast<std::size_t>(i));
  ResolventResult res = apply_output_resolvent(a, fmy, alpha, policy);
  const double norm = res.value.norm();
  return {std::move(res.value), norm};
}

std::pair<double, double> matched_alpha_bracket(double C) {
  return {1e-6 * C * C, 1e6 * C * C};
}

MatchedAlpha residual_matched_alpha(const LinearMap& map, const Vector& r, double q,
                                    std::pair<double, double> bracket, double rel_tol,
                                    const InnerSolvePolicy& policy,
                                    std::optional<double> warm_start, bool strict_bracket) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("residual_matched_alpha: q must lie in (0, 1)");
  if (!(bracket.first > 0.0 && bracket.second > bracket.first))
    throw std::invalid_argument("residual_matched_alpha: invalid bracket");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("residual_matched_alpha: rel_tol must be > 0");

  const double r_norm = r.norm();
  MatchedAlpha out;
  if (r_norm == 0.0) {  // any alpha matches a zero residual
    out.alpha = bracket.second;
    return out;
  }
  const double target = q * r_norm;

  // ||alpha (AA* + alpha I)^{-1} r|| for many alphas on one operator. Small
  // data spaces get a one-off eigendecomposition of A A*, after which each
  // evaluation is O(dim_out); otherwise fall back to per-alpha CG solves.
  std::function<double(double)> transform_norm;
  if (map.dim_out() <= policy.dense_threshold) {
    const Matrix ad = materialize(map);
    Eigen::SelfAdjointEigenSolver<Matrix> es(ad * ad.transpose());
    if (es.info() != Eigen::Success)
      throw std::runtime_error("residual_matched_alpha: eigendecomposition failed");
    Vector z = es.eigenvectors().transpose() * r;
    Vector evals = es.eigenvalues().cwiseMax(0.0);
    transform_norm = [z = std::move(z), evals = std::move(evals)](double alpha) {
      double s = 0.0;
      for (Index i = 0; i < z.size(); ++i) {
        const double f = alpha / (evals[i] + alpha);
        s += f * f * z[i] * z[i];
      }
      return std::sqrt(s);
    };
  } else {
    transform_norm = [&map, &r, &policy](double alpha) {
      return apply_output_resolvent(map, r, alpha, policy).value.norm();
    };
  }

  // The transform norm increases monotonically in alpha, so a sign change of
  // g brackets the root.
  auto g = [&](double alpha) {
    out.evaluations += 1;
    return transform_norm(alpha) - target;
  };

  double lo = bracket.first;
  double hi = bracket.second;
  if (warm_start && *warm_start > lo && *warm_start < hi) {
    // grow a local bracket around the previous step's alpha
    double wlo = std::max(lo, *warm_start / 4.0);
    double whi = std::min(hi, *warm_start * 4.0);
    double glo = g(wlo);
    double ghi = g(whi);
    while (glo > 0.0 && wlo > lo) {
      wlo = std::max(lo, wlo / 16.0);
      glo = g(wlo);
    }
    while (ghi < 0.0 && whi < hi) {
      whi = std::min(hi, whi * 16.0);
      ghi = g(whi);
    }
    if (glo <= 0.0 && ghi >= 0.0) {
      lo = wlo;
      hi = whi;
    }
  }

  double g_lo = g(lo);
  if (g_lo >= 0.0) {
    if (strict_bracket && g_lo > rel_tol * r_norm)
      throw std::runtime_error("residual_matched_alpha: target below bracket");
    out.alpha = lo;
    out.clipped_low = g_lo > rel_tol * r_norm;
    return out;
  }
  double g_hi = g(hi);
  if (g_hi <= 0.0) {
    if (strict_bracket && -g_hi > rel_tol * r_norm)
      throw std::runtime_error("residual_matched_alpha: target above bracket");
    out.alpha = hi;
    out.clipped_high = -g_hi > rel_tol * r_norm;
    return out;
  }

  double mid = std::sqrt(lo * hi);
  for (int it = 0; it < 200; ++it) {
    mid = std::sqrt(lo * hi);
    const double g_mid = g(mid);
    if (std::abs(g_mid) <= rel_tol * r_norm) break;
    if (g_mid < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi / lo < 1.0 + 1e-14) break;
  }
  out.alpha = mid;
  return out;
}

namespace {

// Resolvent evaluations behind the diagnostics and the matched-alpha search.
// Dense for small data spaces (robust for tiny alpha), tight CG otherwise.
InnerSolvePolicy diagnostics_policy(const LinearMap& map) {
  InnerSolvePolicy p = InnerSolvePolicy::tight();
  p.cg_rel_tol = 1e-12;
  p.cg_max_iters = 800;
  if (map.dim_out() <= p.dense_threshold) p.mode = InnerSolveMode::direct_dense;
  return p;
}

struct LoopHooks {
  // Produces (x_next, record) for step k; may throw DomainViolation.
  std::function<StepOutcome(const Vector&, long)> step;
};

RunResult run_loop(const OperatorFamily& family, const NoisyData& data, Vector x0,
                   const SolverConfig& config, const LoopHooks& hooks) {
  config.validate();
  const int n_eq = family.n_equations();
  if (static_cast<int>(data.y_delta.size()) != n_eq || static_cast<int>(data.delta.size()) != n_eq)
    throw std::invalid_argument("run: data does not match the family");
  for (int i = 0; i < n_eq; ++i) {
    if (data.y_delta[static_cast<std::size_t>(i)].size() != family.dim_y(i))
      throw std::invalid_argument("run: data dimension mismatch");
  }
  if (x0.size() != family.dim_x()) throw std::invalid_argument("run: x0 dimension mismatch");

  const bool exact = data.exact_regime();
  RunResult out;
  Vector x = x0;
  const Vector start = std::move(x0);

  auto all_residual_norms = [&](const Vector& at) {
    std::vector<double> norms(static_cast<std::size_t>(n_eq));
    for (int i = 0; i < n_eq; ++i) norms[static_cast<std::size_t>(i)] = residual(family, i, at, data).second;
    return norms;
  };

  double exact_tol_abs = 0.0;
  if (exact) {
    const std::vector<double> r0 = all_residual_norms(x);
    exact_tol_abs = config.exact_data_rel_tol * *std::max_element(r0.begin(), r0.end());
  }

  auto abort_on_violation = [&](long k, const DomainViolation& e) -> RunResult& {
    out.stop_reason = StopReason::domain_violation;
    out.stop_index = k > 0 ? k - 1 : 0;
    out.abort_message = "step " + std::to_string(k) + ": " + e.what();
    out.final_x = x;
    return out;
  };

  auto finalize = [&](StopReason reason, long stop_index) -> RunResult& {
    out.stop_reason = reason;
    out.stop_index = stop_index;
    out.final_x = x;
    out.final_residual_norms = all_residual_norms(x);
    return out;
  };

  long k = 0;
  for (int cycle = 0; cycle < config.max_cycles; ++cycle) {
    if (config.record_level == RecordLevel::full_trace) {
      const double probe =
          adjoint_probe(family.linearize(cycle % n_eq, x), mix_seed(data.seed, 0xad0 + cycle));
      out.adjoint_spot_max = std::max(out.adjoint_spot_max, probe);
    }
    int nonloped = 0;
    for (int s = 0; s < n_eq; ++s, ++k) {
      try {
        StepOutcome o = hooks.step(x, k);
        x = std::move(o.x_next);
        nonloped += o.record.omega;
        out.trace.push_back(std::move(o.record));
      } catch (const DomainViolation& e) {
        if (s > 0) out.nonloped_per_cycle.push_back(nonloped);
        return abort_on_violation(k, e);
      }
    }
    out.nonloped_per_cycle.push_back(nonloped);
    out.max_distance_from_x0 = std::max(out.max_distance_from_x0, (x - start).norm());
    try {
      if (!exact && nonloped == 0) {
        // first cycle in which every iterate stayed put; report its first step
        return finalize(StopReason::discrepancy_cycle, k - n_eq);
      }
      if (exact) {
        const std::vector<double> norms = all_residual_norms(x);
        if (*std::max_element(norms.begin(), norms.end()) <= exact_tol_abs) {
          out.stop_reason = StopReason::exact_data_converged;
          out.stop_index = k - 1;
          out.final_x = x;
          out.final_residual_norms = norms;
          return out;
        }
      }
    } catch (const DomainViolation& e) {
      // the last update left the admissible box; the re-evaluation found it
      return abort_on_violation(k, e);
    }
  }
  try {
    return finalize(StopReason::cycle_budget, k - 1);
  } catch (const DomainViolation& e) {
    return abort_on_violation(k, e);
  }
}

}  // namespace

StepOutcome lmk_step(const OperatorFamily& family, const NoisyData& data, const Vector& x, long k,
                     const SolverConfig& config, LmkScratch* scratch) {
  const int n_eq = family.n_equations();
  const int i = static_cast<int>(k % n_eq);
  const bool full = config.record_level == RecordLevel::full_trace;

  StepRecord rec;
  rec.k = k;
  rec.sub_index = i;
  auto [r, r_norm] = residual(family, i, x, data);
  rec.residual_norm = r_norm;
  if (full && family.ground_truth()) rec.error_to_truth = (x - *family.ground_truth()).norm();

  const double threshold = config.tau * data.delta.at(static_cast<std::size_t>(i));
  rec.omega = (r_norm >= threshold) ? 1 : 0;  // delta = 0 never lopes
  if (rec.omega == 0) return {x, std::move(rec)};

  const LinearMap a = family.linearize(i, x);
  double alpha = config.alpha;
  if (config.alpha_mode == AlphaMode::residual_matched) {
    std::optional<double> warm;
    if (scratch) warm = scratch->matched_alpha[static_cast<std::size_t>(i)];
    const MatchedAlpha matched = residual_matched_alpha(
        a, r, config.q, matched_alpha_bracket(config.C), 1e-3, diagnostics_policy(a), warm);
    alpha = matched.alpha;
    if (scratch) scratch->matched_alpha[static_cast<std::size_t>(i)] = alpha;
  }
  rec.alpha_used = alpha;

  const Vector* warm_h = nullptr;
  if (scratch && config.inner.warm_start) {
    const Vector& prev = scratch->warm_h[static_cast<std::size_t>(i)];
    if (prev.size() == x.size()) warm_h = &prev;
  }
  NormalSolveResult solve = solve_regularized_normal(a, r, alpha, config.inner, warm_h);
  rec.cg_iters = solve.iterations;
  rec.cg_rel_residual = solve.relative_residual();
  rec.h_norm = solve.solution.norm();
  Vector x_next = x + solve.solution;

  if (full) {
    const Vector b_update = a.apply(solve.solution) - r;  // F'(x) h + F(x) - y
    rec.predicted_residual_norm = b_update.norm();
    const Vector fmy = -r;
    const ResolventResult res = apply_output_resolvent(a, fmy, alpha, diagnostics_policy(a));
    rec.resolvent_residual_norm = res.value.norm();
    rec.form_gap = (b_update - res.value).norm();
  }
  if (scratch && config.inner.warm_start)
    scratch->warm_h[static_cast<std::size_t>(i)] = solve.solution;
  return {std::move(x_next), std::move(rec)};
}

RunResult run_llmk(const OperatorFamily& family, const NoisyData& data, Vector x0,
                   const SolverConfig& config) {
  LmkScratch scratch(family.n_equations());
  LoopHooks hooks;
  hooks.step = [&](const Vector& x, long k) { return lmk_step(family, data, x, k, config, &scratch); };
  return run_loop(family, data, std::move(x0), config, hooks);
}

RunResult run_llk(const OperatorFamily& family, const NoisyData& data, Vector x0, double step_size,
                  const SolverConfig& config) {
  if (!(step_size > 0.0)) throw std::invalid_argument("run_llk: step_size must be positive");
  if (!(step_size * config.C * config.C <= 1.0))
    throw std::invalid_argument("run_llk: step_size * C^2 must not exceed 1");

  const int n_eq = family.n_equations();
  const bool full = config.record_level == RecordLevel::full_trace;
  LoopHooks hooks;
  hooks.step = [&, step_size](const Vector& x, long k) -> StepOutcome {
    const int i = static_cast<int>(k % n_eq);
    StepRecord rec;
    rec.k = k;
    rec.sub_index = i;
    auto [r, r_norm] = residual(family, i, x, data);
    rec.residual_norm = r_norm;
    if (full && family.ground_truth()) rec.error_to_truth = (x - *family.ground_truth()).norm();
    const double threshold = config.tau * data.delta.at(static_cast<std::size_t>(i));
    rec.omega = (r_norm >= threshold) ? 1 : 0;
    if (rec.omega == 0) return {x, std::move(rec)};
    const Vector h = step_size * family.linearize(i, x).apply_adjoint(r);
    rec.h_norm = h.norm();
    return {x + h, std::move(rec)};
  };
  return run_loop(family, data, std::move(x0), config, hooks);
}

MonotonicityReport verify_monotonicity(const RunResult& run, const Vector& x_ref,
                                       const SolverConfig& config, const NoisyData& data) {
  MonotonicityReport report;
  if (run.trace.empty()) return report;
  for (const StepRecord& rec : run.trace) {
    if (!rec.error_to_truth)
      throw std::runtime_error("verify_monotonicity: trace lacks error records (full-trace "
                               "recording with ground truth required)");
  }
  const double e0 = *run.trace.front().error_to_truth;
  report.slack = 1e-10 * e0;
  const double slack_sq = 1e-10 * e0 * e0 + 1e-14;
  const bool tight = config.inner.cg_rel_tol <= 1e-8;

  auto error_after = [&](std::size_t idx) {
    if (idx + 1 < run.trace.size()) return *run.trace[idx + 1].error_to_truth;
    return (run.final_x - x_ref).norm();
  };

  for (std::size_t idx = 0; idx < run.trace.size(); ++idx) {
    const StepRecord& rec = run.trace[idx];
    const double e_k = *rec.error_to_truth;
    const double e_next = error_after(idx);
    report.steps_checked += 1;

    const double increase = e_next - e_k;
    if (increase > report.slack) {
      MonotonicityViolation v{rec.k, increase, rec.cg_rel_residual};
      if (tight)
        report.violations.push_back(v);
      else
        report.loose_tol_flags.push_back(v);
    }

    if (rec.omega == 1 && rec.predicted_residual_norm && rec.alpha_used) {
      const double delta_i = data.delta.at(static_cast<std::size_t>(rec.sub_index));
      const double rhs = 2.0 / *rec.alpha_used * (*rec.predicted_residual_norm) *
                             ((config.eta - config.q) * rec.residual_norm +
                              (1.0 + config.eta) * delta_i) -
                         rec.h_norm * rec.h_norm;
      const double lhs = e_next * e_next - e_k * e_k;
      if (lhs - rhs > slack_sq) {
        MonotonicityViolation v{rec.k, lhs - rhs, rec.cg_rel_residual};
        if (tight)
          report.estimate_violations.push_back(v);
        else
          report.loose_tol_flags.push_back(v);
      }
    }
  }
  return report;
}

bool SummabilityReport::passed() const {
  return residual_sq_sum <= residual_sq_bound && transform_sq_sum <= transform_sq_bound &&
         cross_sum <= cross_bound && step_sq_sum <= step_sq_bound;
}

SummabilityReport verify_summability(const RunResult& run, const SolverConfig& config) {
  SummabilityReport rep;
  if (run.trace.empty()) return rep;
  if (!run.trace.front().error_to_truth)
    throw std::runtime_error("verify_summability: trace lacks error records");
  const double e0 = *run.trace.front().error_to_truth;
  const double gap = config.q - config.eta;  // positive for feasible configs
  rep.residual_sq_bound = gap > 0.0 ? config.alpha / (2.0 * config.q * gap) * e0 * e0
                                    : std::numeric_limits<double>::infinity();
  rep.transform_sq_bound =
      gap > 0.0 ? config.alpha / (2.0 * gap) * e0 * e0 : std::numeric_limits<double>::infinity();
  rep.cross_bound = rep.transform_sq_bound;
  rep.step_sq_bound = e0 * e0;
  for (const StepRecord& rec : run.trace) {
    rep.residual_sq_sum += rec.residual_norm * rec.residual_norm;
    const double b = rec.predicted_residual_norm.value_or(0.0);
    rep.transform_sq_sum += b * b;
    rep.cross_sum += b * rec.residual_norm;
    rep.step_sq_sum += rec.h_norm * rec.h_norm;
  }
  return rep;
}

}  // namespace regkacz
