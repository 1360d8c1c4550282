#include "regkacz/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace regkacz {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string to_string(SolverKind s) {
  switch (s) {
    case SolverKind::llmk: return "llmk";
    case SolverKind::lmk_exact: return "lmk-exact";
    case SolverKind::llk: return "llk";
  }
  return "unknown";
}

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "llmk") return SolverKind::llmk;
  if (s == "lmk-exact") return SolverKind::lmk_exact;
  if (s == "llk") return SolverKind::llk;
  throw std::invalid_argument("unknown solver '" + s + "' (expected llmk, lmk-exact or llk)");
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt17_opt(const std::optional<double>& v) { return v ? fmt17(*v) : "nan"; }

std::string fnv64_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// write-temp-then-rename so readers never observe partial artifacts
void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << content;
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

constexpr const char* kTraceHeader =
    "k,sub_index,omega,residual_norm,Bk_norm,h_norm,error_to_truth,alpha_used,cg_iters";

std::string render_trace_csv(const RunResult& run) {
  std::string out(kTraceHeader);
  out += "\n";
  // rows k = 0 .. stop_index; for discrepancy stops this truncates the
  // trailing no-op records of the final all-loped cycle (the cycle series
  // still covers that cycle)
  const std::size_t rows =
      std::min(run.trace.size(), static_cast<std::size_t>(run.stop_index) + 1);
  for (std::size_t idx = 0; idx < rows; ++idx) {
    const StepRecord& r = run.trace[idx];
    out += std::to_string(r.k);
    out += ',';
    out += std::to_string(r.sub_index);
    out += ',';
    out += std::to_string(r.omega);
    out += ',';
    out += fmt17(r.residual_norm);
    out += ',';
    out += fmt17_opt(r.predicted_residual_norm);
    out += ',';
    out += fmt17(r.h_norm);
    out += ',';
    out += fmt17_opt(r.error_to_truth);
    out += ',';
    out += fmt17_opt(r.alpha_used);
    out += ',';
    out += std::to_string(r.cg_iters);
    out += '\n';
  }
  return out;
}

std::string render_cycle_csv(const RunResult& run) {
  std::string out = "cycle,nonloped_count\n";
  for (std::size_t c = 0; c < run.nonloped_per_cycle.size(); ++c) {
    out += std::to_string(c);
    out += ',';
    out += std::to_string(run.nonloped_per_cycle[c]);
    out += '\n';
  }
  return out;
}

ordered_json config_json(const SolverConfig& c) {
  ordered_json j;
  j["alpha"] = c.alpha;
  j["tau"] = c.tau;
  j["q"] = c.q;
  j["eta"] = c.eta;
  j["C"] = c.C;
  j["alpha_mode"] = to_string(c.alpha_mode);
  j["max_cycles"] = c.max_cycles;
  j["exact_data_rel_tol"] = c.exact_data_rel_tol;
  j["record_level"] = to_string(c.record_level);
  j["inner"] = {{"mode", c.inner.mode == InnerSolveMode::direct_dense ? "direct-dense"
                                                                      : "conjugate-gradient"},
                {"cg_max_iters", c.inner.cg_max_iters},
                {"cg_rel_tol", c.inner.cg_rel_tol},
                {"dense_threshold", c.inner.dense_threshold},
                {"warm_start", c.inner.warm_start}};
  return j;
}

SolverConfig config_from_json(const ordered_json& j) {
  SolverConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.tau = j.at("tau").get<double>();
  c.q = j.at("q").get<double>();
  c.eta = j.at("eta").get<double>();
  c.C = j.at("C").get<double>();
  c.alpha_mode = j.at("alpha_mode").get<std::string>() == "fixed" ? AlphaMode::fixed
                                                                  : AlphaMode::residual_matched;
  c.max_cycles = j.at("max_cycles").get<int>();
  c.exact_data_rel_tol = j.at("exact_data_rel_tol").get<double>();
  c.record_level = j.at("record_level").get<std::string>() == "summary" ? RecordLevel::summary
                                                                        : RecordLevel::full_trace;
  const auto& in = j.at("inner");
  c.inner.mode = in.at("mode").get<std::string>() == "direct-dense"
                     ? InnerSolveMode::direct_dense
                     : InnerSolveMode::conjugate_gradient;
  c.inner.cg_max_iters = in.at("cg_max_iters").get<int>();
  c.inner.cg_rel_tol = in.at("cg_rel_tol").get<double>();
  c.inner.dense_threshold = in.at("dense_threshold").get<int>();
  c.inner.warm_start = in.at("warm_start").get<bool>();
  return c;
}

bool wants(const ExperimentSpec& spec, OutputKind kind) {
  return std::find(spec.outputs.begin(), spec.outputs.end(), kind) != spec.outputs.end();
}

double max_relative_form_gap(const RunResult& run) {
  double worst = -1.0;
  for (const StepRecord& r : run.trace) {
    if (r.omega == 1 && r.form_gap && r.resolvent_residual_norm &&
        *r.resolvent_residual_norm > 0.0)
      worst = std::max(worst, *r.form_gap / *r.resolvent_residual_norm);
  }
  return worst;
}

}  // namespace

fs::path resolve_out_dir(const ExperimentSpec& spec) {
  if (!spec.out_dir.empty()) return spec.out_dir;
  if (const char* env = std::getenv(kOutDirEnvVar); env != nullptr && env[0] != '\0') return env;
  return "out";
}

std::string spec_label(const ExperimentSpec& spec) {
  if (!spec.label.empty()) return spec.label;
  char noise[32];
  std::snprintf(noise, sizeof noise, "%g", spec.rel_noise);
  return spec.problem_id + "_" + to_string(spec.solver) + "_n" + noise + "_s" +
         std::to_string(spec.seed);
}

ResolvedExperiment resolve_experiment(const ExperimentSpec& spec) {
  if (spec.problem_id.empty()) throw std::invalid_argument("experiment spec: problem id missing");
  if (spec.solver == SolverKind::lmk_exact && spec.rel_noise != 0.0)
    throw InfeasibleParameters("lmk-exact runs on exact data; set rel_noise = 0");
  if (!(spec.rel_noise >= 0.0)) throw std::invalid_argument("experiment spec: rel_noise < 0");

  ExperimentInstance inst = make_experiment_instance(spec.problem_id, spec.rel_noise, spec.seed);
  const ProblemDefaults& d = inst.defaults;
  const ConfigOverrides& ov = spec.overrides;
  const bool exact = spec.rel_noise == 0.0;

  const double eta = ov.eta.value_or(d.eta);
  const double C = ov.C.value_or(d.C);
  const double tau = ov.tau.value_or(exact ? d.tau_exact : d.tau_noisy);
  const ParameterSelection sel = select_parameters(eta, C, tau, d.safety);

  SolverConfig cfg;
  cfg.eta = eta;
  cfg.C = C;
  cfg.tau = sel.tau;
  cfg.q = ov.q.value_or(sel.q);
  if (ov.alpha) {
    cfg.alpha = *ov.alpha;
  } else if (ov.q) {
    const double floor = C * C * cfg.q / (1.0 - cfg.q);
    cfg.alpha = d.safety * floor;
  } else {
    cfg.alpha = sel.alpha;
  }
  cfg.alpha_mode = ov.alpha_mode.value_or(AlphaMode::fixed);
  cfg.max_cycles = ov.max_cycles.value_or(d.max_cycles);
  cfg.exact_data_rel_tol = ov.exact_data_rel_tol.value_or(1e-10);
  cfg.record_level = ov.record_level.value_or(RecordLevel::full_trace);
  cfg.inner = exact ? InnerSolvePolicy::tight() : InnerSolvePolicy::experiment();
  if (ov.inner_mode) cfg.inner.mode = *ov.inner_mode;
  if (ov.cg_iters) cfg.inner.cg_max_iters = *ov.cg_iters;
  if (ov.cg_tol) cfg.inner.cg_rel_tol = *ov.cg_tol;
  if (ov.warm_start) cfg.inner.warm_start = *ov.warm_start;
  cfg.validate();

  ResolvedExperiment out{std::move(inst), cfg, 0.0};
  out.lk_step_size = ov.step_size.value_or(0.9 / (C * C));
  if (!(out.lk_step_size > 0.0) || out.lk_step_size * C * C > 1.0)
    throw InfeasibleParameters("experiment spec: step_size * C^2 must lie in (0, 1]");
  return out;
}

RunReport run_experiment(const ExperimentSpec& spec) {
  ResolvedExperiment res = resolve_experiment(spec);

  RunReport report;
  report.spec = spec;
  if (spec.solver == SolverKind::llk) {
    report.result = run_llk(res.instance.family, res.instance.data, res.instance.x0,
                            res.lk_step_size, res.config);
  } else {
    report.result =
        run_llmk(res.instance.family, res.instance.data, res.instance.x0, res.config);
  }
  const RunResult& rr = report.result;

  if (res.instance.family.ground_truth())
    report.final_error_to_truth = (rr.final_x - *res.instance.family.ground_truth()).norm();

  const fs::path dir = resolve_out_dir(spec);
  const std::string label = spec_label(spec);

  std::string trace_csv, cycle_csv;
  if (wants(spec, OutputKind::trace_csv)) {
    report.trace_csv = dir / (label + "_trace.csv");
    trace_csv = render_trace_csv(rr);
    write_file_atomic(report.trace_csv, trace_csv);
  }
  if (wants(spec, OutputKind::cycle_series_csv)) {
    report.cycle_csv = dir / (label + "_cycles.csv");
    cycle_csv = render_cycle_csv(rr);
    write_file_atomic(report.cycle_csv, cycle_csv);
  }
  if (wants(spec, OutputKind::summary_json)) {
    report.summary_json = dir / (label + "_summary.json");
    const NoisyData& data = res.instance.data;

    bool noise_ok = true;
    if (data.exact_y) {
      for (std::size_t i = 0; i < data.y_delta.size(); ++i) {
        const double realized = (data.y_delta[i] - (*data.exact_y)[i]).norm();
        const double scale = std::max(1.0, (*data.exact_y)[i].norm());
        if (std::abs(realized - data.delta[i]) > 1e-12 * scale) noise_ok = false;
      }
    }

    ordered_json j;
    j["schema"] = "regkacz-run-v1";
    j["spec"] = {{"problem", spec.problem_id},
                 {"solver", to_string(spec.solver)},
                 {"rel_noise", spec.rel_noise},
                 {"seed", spec.seed},
                 {"label", label}};
    j["config"] = config_json(res.config);
    if (spec.solver == SolverKind::llk) j["lk_step_size"] = res.lk_step_size;
    ordered_json jd;
    jd["seed"] = data.seed;
    jd["rel_noise"] = spec.rel_noise;
    jd["delta"] = data.delta;
    jd["noise_equality_ok"] = noise_ok;
    j["data"] = jd;

    ordered_json jr;
    jr["stop_index"] = rr.stop_index;
    jr["stop_reason"] = to_string(rr.stop_reason);
    jr["cycles_executed"] = rr.cycles_executed();
    jr["total_nonloped"] = rr.total_nonloped();
    jr["nonloped_per_cycle"] = rr.nonloped_per_cycle;
    jr["final_residual_norms"] = rr.final_residual_norms;
    std::vector<double> tau_delta;
    for (double dl : data.delta) tau_delta.push_back(res.config.tau * dl);
    jr["tau_delta"] = tau_delta;
    if (report.final_error_to_truth >= 0.0)
      jr["final_error_to_truth"] = report.final_error_to_truth;
    jr["adjoint_spot_max"] = rr.adjoint_spot_max;
    jr["max_distance_from_x0"] = rr.max_distance_from_x0;
    const double gap = max_relative_form_gap(rr);
    if (gap >= 0.0) jr["max_form_gap_rel"] = gap;
    if (!rr.abort_message.empty()) jr["abort_message"] = rr.abort_message;
    j["result"] = jr;

    ordered_json ja;
    if (!trace_csv.empty())
      ja["trace_csv"] = {{"path", report.trace_csv.filename().string()},
                         {"fnv64", fnv64_hex(trace_csv)}};
    if (!cycle_csv.empty())
      ja["cycle_csv"] = {{"path", report.cycle_csv.filename().string()},
                         {"fnv64", fnv64_hex(cycle_csv)}};
    j["artifacts"] = ja;

    write_file_atomic(report.summary_json, j.dump(2) + "\n");
  }
  return report;
}

ComparisonReport run_comparison(ExperimentSpec spec) {
  ExperimentSpec lmk_spec = spec;
  lmk_spec.solver = SolverKind::llmk;
  if (!lmk_spec.overrides.alpha_mode)
    lmk_spec.overrides.alpha_mode = AlphaMode::residual_matched;
  lmk_spec.label = spec_label(lmk_spec);

  ExperimentSpec lk_spec = spec;
  lk_spec.solver = SolverKind::llk;
  lk_spec.label = spec_label(lk_spec);

  const RunReport r_lmk = run_experiment(lmk_spec);
  const RunReport r_lk = run_experiment(lk_spec);

  // orderings come from the serialized summaries, so every number in the
  // report is traceable to an artifact on disk
  auto side_from_file = [](const fs::path& summary) {
    ComparisonSide s;
    const ordered_json j = ordered_json::parse(read_file(summary));
    const auto& r = j.at("result");
    s.stop_index = r.at("stop_index").get<long>();
    s.cycles_executed = r.at("cycles_executed").get<long>();
    s.total_nonloped = r.at("total_nonloped").get<long>();
    const std::string reason = r.at("stop_reason").get<std::string>();
    s.stop_reason = reason == "discrepancy-cycle"    ? StopReason::discrepancy_cycle
                    : reason == "cycle-budget"       ? StopReason::cycle_budget
                    : reason == "exact-data-converged" ? StopReason::exact_data_converged
                                                       : StopReason::domain_violation;
    if (r.contains("final_error_to_truth"))
      s.final_error_to_truth = r.at("final_error_to_truth").get<double>();
    s.final_residual_norms = r.at("final_residual_norms").get<std::vector<double>>();
    s.summary_json = summary;
    return s;
  };

  ComparisonReport rep;
  rep.llmk = side_from_file(r_lmk.summary_json);
  rep.llk = side_from_file(r_lk.summary_json);
  rep.llmk_fewer_cycles = rep.llmk.cycles_executed < rep.llk.cycles_executed;
  rep.llmk_nonloped_le = rep.llmk.total_nonloped <= rep.llk.total_nonloped;
  rep.both_discrepancy = rep.llmk.stop_reason == StopReason::discrepancy_cycle &&
                         rep.llk.stop_reason == StopReason::discrepancy_cycle;

  const VerifyReport v_lmk = verify_run(r_lmk.result, resolve_experiment(lmk_spec));
  const VerifyReport v_lk = verify_run(r_lk.result, resolve_experiment(lk_spec));
  rep.verify_passed = v_lmk.passed() && v_lk.passed();

  ordered_json j;
  j["schema"] = "regkacz-compare-v1";
  auto side_json = [](const ComparisonSide& s) {
    ordered_json js;
    js["summary"] = s.summary_json.filename().string();
    js["stop_index"] = s.stop_index;
    js["cycles_executed"] = s.cycles_executed;
    js["total_nonloped"] = s.total_nonloped;
    js["stop_reason"] = to_string(s.stop_reason);
    if (s.final_error_to_truth >= 0.0) js["final_error_to_truth"] = s.final_error_to_truth;
    js["final_residual_norms"] = s.final_residual_norms;
    return js;
  };
  j["llmk"] = side_json(rep.llmk);
  j["llk"] = side_json(rep.llk);
  j["orderings"] = {{"llmk_fewer_cycles", rep.llmk_fewer_cycles},
                    {"llmk_nonloped_le", rep.llmk_nonloped_le},
                    {"both_discrepancy", rep.both_discrepancy}};
  j["verify_passed"] = rep.verify_passed;

  const fs::path dir = resolve_out_dir(spec);
  char noise[32];
  std::snprintf(noise, sizeof noise, "%g", spec.rel_noise);
  rep.report_json = dir / (spec.problem_id + "_compare_n" + noise + "_s" +
                           std::to_string(spec.seed) + ".json");
  write_file_atomic(rep.report_json, j.dump(2) + "\n");
  return rep;
}

SweepReport noise_sweep(ExperimentSpec spec, const std::vector<double>& amplitudes) {
  if (amplitudes.size() < 3)
    throw std::invalid_argument("noise_sweep: need at least 3 amplitudes for a slope fit");
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    if (!(amplitudes[i] > 0.0))
      throw std::invalid_argument("noise_sweep: amplitudes must be positive");
    if (i > 0 && !(amplitudes[i] < amplitudes[i - 1]))
      throw std::invalid_argument("noise_sweep: amplitudes must be strictly decreasing");
  }
  if (spec.solver == SolverKind::lmk_exact)
    throw std::invalid_argument("noise_sweep: sweeping needs a noisy solver (llmk or llk)");

  // the exact-data reference trajectory uses the same configuration as the
  // noisy runs; only the data differ
  ExperimentSpec probe = spec;
  probe.rel_noise = amplitudes.front();
  const ResolvedExperiment base = resolve_experiment(probe);
  const int n_eq = base.instance.family.n_equations();
  const long fixed_k = 2L * n_eq;

  SolverConfig truncated = base.config;
  truncated.max_cycles = 2;

  auto run_solver = [&](const ResolvedExperiment& r, const SolverConfig& cfg) {
    if (spec.solver == SolverKind::llk)
      return run_llk(r.instance.family, r.instance.data, r.instance.x0, r.lk_step_size, cfg);
    return run_llmk(r.instance.family, r.instance.data, r.instance.x0, cfg);
  };

  // x_{2N} of the exact-data trajectory
  NoisyData exact_data;
  exact_data.y_delta = base.instance.exact_y;
  exact_data.delta.assign(base.instance.exact_y.size(), 0.0);
  exact_data.seed = spec.seed;
  exact_data.exact_y = base.instance.exact_y;
  const RunResult exact_truncated = spec.solver == SolverKind::llk
                                        ? run_llk(base.instance.family, exact_data,
                                                  base.instance.x0, base.lk_step_size, truncated)
                                        : run_llmk(base.instance.family, exact_data,
                                                   base.instance.x0, truncated);

  SweepReport rep;
  rep.fixed_k = fixed_k;
  const fs::path dir = resolve_out_dir(spec);

  for (double amp : amplitudes) {
    ExperimentSpec s = spec;
    s.rel_noise = amp;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", amp);
    s.label = spec_label(spec) + "_sweep_a" + buf;
    const RunReport rr = run_experiment(s);

    const ResolvedExperiment res = resolve_experiment(s);
    const RunResult trunc = run_solver(res, truncated);

    SweepRow row;
    row.amplitude = amp;
    row.delta_min =
        *std::min_element(res.instance.data.delta.begin(), res.instance.data.delta.end());
    row.stop_index = rr.result.stop_index;
    row.cycles_executed = rr.result.cycles_executed();
    row.stop_reason = rr.result.stop_reason;
    row.final_error_to_truth = rr.final_error_to_truth;
    row.fixed_k_distance = (trunc.final_x - exact_truncated.final_x).norm();
    rep.rows.push_back(row);
  }

  // least-squares slope of log k* against log delta_min
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const SweepRow& row : rep.rows) {
    if (row.stop_index <= 0 || row.delta_min <= 0.0) continue;
    const double x = std::log(row.delta_min);
    const double y = std::log(static_cast<double>(row.stop_index));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    m += 1;
  }
  rep.slope = m >= 2 ? (m * sxy - sx * sy) / (m * sxx - sx * sx)
                     : std::numeric_limits<double>::quiet_NaN();

  std::string csv =
      "amplitude,delta_min,stop_index,cycles_executed,stop_reason,final_error_to_truth,"
      "fixed_k_distance\n";
  for (const SweepRow& row : rep.rows) {
    csv += fmt17(row.amplitude);
    csv += ',';
    csv += fmt17(row.delta_min);
    csv += ',';
    csv += std::to_string(row.stop_index);
    csv += ',';
    csv += std::to_string(row.cycles_executed);
    csv += ',';
    csv += to_string(row.stop_reason);
    csv += ',';
    csv += fmt17(row.final_error_to_truth);
    csv += ',';
    csv += fmt17(row.fixed_k_distance);
    csv += '\n';
  }
  rep.csv = dir / (spec_label(spec) + "_sweep.csv");
  write_file_atomic(rep.csv, csv);

  ordered_json j;
  j["schema"] = "regkacz-sweep-v1";
  j["spec"] = {{"problem", spec.problem_id},
               {"solver", to_string(spec.solver)},
               {"seed", spec.seed}};
  j["amplitudes"] = amplitudes;
  j["fixed_k"] = rep.fixed_k;
  j["slope_log_kstar_vs_log_delta_min"] = rep.slope;
  ordered_json rows = ordered_json::array();
  for (const SweepRow& row : rep.rows) {
    rows.push_back({{"amplitude", row.amplitude},
                    {"delta_min", row.delta_min},
                    {"stop_index", row.stop_index},
                    {"cycles_executed", row.cycles_executed},
                    {"stop_reason", to_string(row.stop_reason)},
                    {"final_error_to_truth", row.final_error_to_truth},
                    {"fixed_k_distance", row.fixed_k_distance}});
  }
  j["rows"] = rows;
  j["csv"] = rep.csv.filename().string();
  rep.report_json = dir / (spec_label(spec) + "_sweep.json");
  write_file_atomic(rep.report_json, j.dump(2) + "\n");
  return rep;
}

bool VerifyReport::passed() const {
  for (const VerifyCheck& c : checks)
    if (!c.skipped && !c.passed) return false;
  return true;
}

VerifyReport verify_run(const RunResult& run, const ResolvedExperiment& resolved) {
  VerifyReport rep;
  const OperatorFamily& family = resolved.instance.family;
  const NoisyData& data = resolved.instance.data;
  const SolverConfig& cfg = resolved.config;
  const bool exact = data.exact_regime();
  const bool tight = cfg.inner.cg_rel_tol <= 1e-8;
  const int n_eq = family.n_equations();

  auto add = [&](std::string name, bool passed, std::string detail = "", bool skipped = false) {
    rep.checks.push_back(VerifyCheck{std::move(name), passed, skipped, std::move(detail)});
  };

  {  // omega agrees with the loping rule at every step
    bool ok = true;
    long bad_k = -1;
    for (const StepRecord& r : run.trace) {
      const double threshold = cfg.tau * data.delta.at(static_cast<std::size_t>(r.sub_index));
      const int expected = r.residual_norm >= threshold ? 1 : 0;
      if (r.omega != expected) {
        ok = false;
        bad_k = r.k;
        break;
      }
    }
    add("loping-correctness", ok, ok ? "" : "mismatch at k=" + std::to_string(bad_k));
  }

  {  // loped steps leave the iterate untouched
    bool ok = true;
    for (const StepRecord& r : run.trace)
      if (r.omega == 0 && r.h_norm != 0.0) ok = false;
    add("stationarity", ok);
  }

  if (run.stop_reason == StopReason::discrepancy_cycle) {
    bool ok = run.stop_index % n_eq == 0;
    std::string detail;
    if (!ok) detail = "stop index not a cycle boundary";
    if (run.trace.size() < static_cast<std::size_t>(n_eq)) {
      ok = false;
    } else {
      for (std::size_t idx = run.trace.size() - static_cast<std::size_t>(n_eq);
           idx < run.trace.size(); ++idx)
        if (run.trace[idx].omega != 0) ok = false;
    }
    for (int i = 0; i < n_eq; ++i) {
      if (!(run.final_residual_norms.at(static_cast<std::size_t>(i)) <
            cfg.tau * data.delta.at(static_cast<std::size_t>(i)))) {
        ok = false;
        detail = "final residual " + std::to_string(i) + " not below tau*delta";
      }
    }
    add("stopping-soundness", ok, detail);
  } else {
    add("stopping-soundness", true, "stop reason: " + to_string(run.stop_reason), true);
  }

  {  // the two algebraic forms of the damped step residual agree
    const double threshold = std::max(10.0 * cfg.inner.cg_rel_tol, 1e-9);
    const double gap = max_relative_form_gap(run);
    if (gap < 0.0)
      add("step-residual-two-form", true, "no recorded diagnostics", true);
    else
      add("step-residual-two-form", gap <= threshold,
          "max relative gap " + fmt17(gap) + " vs " + fmt17(threshold));
  }

  {  // q ||r|| <= ||B|| <= ||r|| at updating steps
    if (!tight) {
      add("step-residual-bounds", true, "inner tolerance too loose to assert; see trace", true);
    } else {
      bool ok = true;
      std::string detail;
      for (const StepRecord& r : run.trace) {
        if (r.omega != 1 || !r.predicted_residual_norm) continue;
        const double b = *r.predicted_residual_norm;
        const double lo = cfg.q * r.residual_norm * (1.0 - 1e-8);
        const double hi = r.residual_norm * (1.0 + 1e-8);
        if (b < lo || b > hi) {
          ok = false;
          detail = "k=" + std::to_string(r.k) + ": ||B||=" + fmt17(b) + " outside [" + fmt17(lo) +
                   ", " + fmt17(hi) + "], cg_rel_residual=" + fmt17(r.cg_rel_residual);
          break;
        }
      }
      add("step-residual-bounds", ok, detail);
    }
  }

  if (cfg.alpha_mode == AlphaMode::residual_matched) {
    add("monotonicity", true, "experimental mode (residual-matched alpha): not asserted", true);
  } else if (!family.ground_truth()) {
    add("monotonicity", true, "no ground truth available", true);
  } else if (run.trace.empty() || !run.trace.front().error_to_truth) {
    add("monotonicity", true, "trace has no error records", true);
  } else {
    const MonotonicityReport mono = verify_monotonicity(run, *family.ground_truth(), cfg, data);
    std::string detail;
    if (!mono.violations.empty())
      detail = std::to_string(mono.violations.size()) + " violations, first at k=" +
               std::to_string(mono.violations.front().k);
    else if (!mono.estimate_violations.empty())
      detail = std::to_string(mono.estimate_violations.size()) + " estimate violations";
    else if (!mono.loose_tol_flags.empty())
      detail = std::to_string(mono.loose_tol_flags.size()) + " flags at loose inner tolerance";
    add("monotonicity", mono.passed(), detail);
  }

  {
    bool has_transforms = false;
    for (const StepRecord& r : run.trace)
      if (r.omega == 1 && r.predicted_residual_norm) has_transforms = true;
    if (exact && family.ground_truth() && has_transforms && run.trace.front().error_to_truth) {
      const SummabilityReport sums = verify_summability(run, cfg);
      std::string detail =
          "residual_sq " + fmt17(sums.residual_sq_sum) + "/" + fmt17(sums.residual_sq_bound);
      add("summability", sums.passed(), detail);
    } else {
      add("summability", true, exact ? "no step-transform records" : "noisy run", true);
    }
  }

  add("adjoint-spot-checks", run.adjoint_spot_max <= 1e-8,
      "max probe defect " + fmt17(run.adjoint_spot_max));

  if (family.monitoring_radius()) {  // informational: the analysis ball is never enforced
    const bool inside = run.max_distance_from_x0 <= *family.monitoring_radius();
    add("ball-monitor", true,
        std::string(inside ? "iterates stayed within " : "iterates left ") +
            "the monitoring radius: max distance " + fmt17(run.max_distance_from_x0) + " vs " +
            fmt17(*family.monitoring_radius()),
        true);
  }

  {  // the noise construction promises equality in the noise-level bound
    bool ok = true;
    if (data.exact_y) {
      for (std::size_t i = 0; i < data.y_delta.size(); ++i) {
        const double realized = (data.y_delta[i] - (*data.exact_y)[i]).norm();
        const double scale = std::max(1.0, (*data.exact_y)[i].norm());
        if (std::abs(realized - data.delta[i]) > 1e-12 * scale) ok = false;
      }
    }
    add("noise-construction", ok);
  }

  return rep;
}

namespace {

struct TraceRow {
  long k = 0;
  int sub_index = 0;
  int omega = 0;
  double residual_norm = 0.0;
  double bk_norm = std::numeric_limits<double>::quiet_NaN();
  double h_norm = 0.0;
  double error_to_truth = std::numeric_limits<double>::quiet_NaN();
  double alpha_used = std::numeric_limits<double>::quiet_NaN();
  int cg_iters = 0;
};

std::vector<TraceRow> parse_trace_csv(const std::string& content) {
  std::vector<TraceRow> rows;
  std::istringstream is(content);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("trace csv: empty file");
  if (line != kTraceHeader) throw std::runtime_error("trace csv: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<std::string, 9> cells;
    std::size_t cell = 0, start = 0;
    for (std::size_t p = 0; p <= line.size(); ++p) {
      if (p == line.size() || line[p] == ',') {
        if (cell >= cells.size()) throw std::runtime_error("trace csv: too many columns");
        cells[cell++] = line.substr(start, p - start);
        start = p + 1;
      }
    }
    if (cell != cells.size()) throw std::runtime_error("trace csv: missing columns");
    TraceRow r;
    r.k = std::stol(cells[0]);
    r.sub_index = std::stoi(cells[1]);
    r.omega = std::stoi(cells[2]);
    r.residual_norm = std::strtod(cells[3].c_str(), nullptr);
    r.bk_norm = std::strtod(cells[4].c_str(), nullptr);
    r.h_norm = std::strtod(cells[5].c_str(), nullptr);
    r.error_to_truth = std::strtod(cells[6].c_str(), nullptr);
    r.alpha_used = std::strtod(cells[7].c_str(), nullptr);
    r.cg_iters = std::stoi(cells[8]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

VerifyReport verify_files(const fs::path& summary_json) {
  const ordered_json j = ordered_json::parse(read_file(summary_json));
  if (j.at("schema").get<std::string>() != "regkacz-run-v1")
    throw std::runtime_error("verify_files: not a run summary");
  const SolverConfig cfg = config_from_json(j.at("config"));
  if (cfg.record_level == RecordLevel::summary)
    throw std::runtime_error(
        "verify_files: summary-level record carries no trace; re-run with full-trace recording");
  if (!j.at("artifacts").contains("trace_csv"))
    throw std::runtime_error("verify_files: no trace artifact listed");

  const std::vector<double> delta = j.at("data").at("delta").get<std::vector<double>>();
  const auto& jr = j.at("result");
  const std::string stop_reason = jr.at("stop_reason").get<std::string>();
  const long stop_index = jr.at("stop_index").get<long>();
  const std::vector<double> final_residuals =
      jr.at("final_residual_norms").get<std::vector<double>>();
  const int n_eq = static_cast<int>(delta.size());
  bool exact = true;
  for (double dl : delta) exact = exact && dl == 0.0;

  const fs::path dir = summary_json.parent_path();
  const std::string trace_content =
      read_file(dir / j.at("artifacts").at("trace_csv").at("path").get<std::string>());
  const std::vector<TraceRow> rows = parse_trace_csv(trace_content);

  VerifyReport rep;
  auto add = [&](std::string name, bool passed, std::string detail = "", bool skipped = false) {
    rep.checks.push_back(VerifyCheck{std::move(name), passed, skipped, std::move(detail)});
  };

  {
    const std::string declared = j.at("artifacts").at("trace_csv").at("fnv64").get<std::string>();
    add("artifact-checksum", declared == fnv64_hex(trace_content));
  }

  {
    const std::size_t expected = static_cast<std::size_t>(stop_index) + 1;
    add("row-count", rows.size() == expected,
        "rows=" + std::to_string(rows.size()) + " stop_index=" + std::to_string(stop_index));
  }

  {
    bool ok = true;
    long bad_k = -1;
    for (const TraceRow& r : rows) {
      const double threshold = cfg.tau * delta.at(static_cast<std::size_t>(r.sub_index));
      const int expected = r.residual_norm >= threshold ? 1 : 0;
      if (r.omega != expected) {
        ok = false;
        bad_k = r.k;
        break;
      }
    }
    add("loping-correctness", ok, ok ? "" : "mismatch at k=" + std::to_string(bad_k));
  }

  {
    bool ok = true;
    for (const TraceRow& r : rows)
      if (r.omega == 0 && r.h_norm != 0.0) ok = false;
    add("stationarity", ok);
  }

  if (stop_reason == "discrepancy-cycle") {
    bool ok = stop_index % n_eq == 0;
    for (int i = 0; i < n_eq; ++i)
      if (!(final_residuals.at(static_cast<std::size_t>(i)) <
            cfg.tau * delta.at(static_cast<std::size_t>(i))))
        ok = false;
    // the final all-loped cycle is summarized by the cycle series
    if (j.at("artifacts").contains("cycle_csv")) {
      const std::string cycles =
          read_file(dir / j.at("artifacts").at("cycle_csv").at("path").get<std::string>());
      const std::size_t last_nl = cycles.find_last_of('\n', cycles.size() - 2);
      const std::string last_line = cycles.substr(last_nl + 1);
      const std::size_t comma = last_line.find(',');
      if (comma == std::string::npos || std::stol(last_line.substr(comma + 1)) != 0) ok = false;
    }
    add("stopping-soundness", ok);
  } else {
    add("stopping-soundness", true, "stop reason: " + stop_reason, true);
  }

  {
    const bool tight = cfg.inner.cg_rel_tol <= 1e-8;
    if (!tight) {
      add("step-residual-bounds", true, "inner tolerance too loose to assert", true);
    } else {
      bool ok = true;
      for (const TraceRow& r : rows) {
        if (r.omega != 1 || std::isnan(r.bk_norm)) continue;
        if (r.bk_norm < cfg.q * r.residual_norm * (1.0 - 1e-8) ||
            r.bk_norm > r.residual_norm * (1.0 + 1e-8))
          ok = false;
      }
      add("step-residual-bounds", ok);
    }
  }

  if (jr.contains("max_form_gap_rel")) {
    const double gap = jr.at("max_form_gap_rel").get<double>();
    add("step-residual-two-form", gap <= std::max(10.0 * cfg.inner.cg_rel_tol, 1e-9),
        "max relative gap " + fmt17(gap));
  } else {
    add("step-residual-two-form", true, "not recorded", true);
  }

  const bool have_errors = !rows.empty() && !std::isnan(rows.front().error_to_truth);
  if (cfg.alpha_mode == AlphaMode::residual_matched) {
    add("monotonicity", true, "experimental mode (residual-matched alpha): not asserted", true);
  } else if (!have_errors || !jr.contains("final_error_to_truth")) {
    add("monotonicity", true, "no error records", true);
  } else {
    const double e0 = rows.front().error_to_truth;
    const double slack = 1e-10 * e0;
    const bool tight = cfg.inner.cg_rel_tol <= 1e-8;
    bool ok = true;
    const double final_error = jr.at("final_error_to_truth").get<double>();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double e_next =
          i + 1 < rows.size() ? rows[i + 1].error_to_truth : final_error;
      if (std::isnan(e_next)) continue;
      if (e_next - rows[i].error_to_truth > slack) ok = false;
    }
    if (!tight)
      add("monotonicity", true, "inner tolerance too loose to assert", true);
    else
      add("monotonicity", ok);
  }

  bool has_transforms = false;
  for (const TraceRow& r : rows)
    if (r.omega == 1 && !std::isnan(r.bk_norm)) has_transforms = true;
  if (exact && have_errors && has_transforms) {
    const double e0 = rows.front().error_to_truth;
    const double gap = cfg.q - cfg.eta;
    double residual_sq = 0, transform_sq = 0, cross = 0, step_sq = 0;
    for (const TraceRow& r : rows) {
      residual_sq += r.residual_norm * r.residual_norm;
      const double b = std::isnan(r.bk_norm) ? 0.0 : r.bk_norm;
      transform_sq += b * b;
      cross += b * r.residual_norm;
      step_sq += r.h_norm * r.h_norm;
    }
    const bool ok = gap > 0.0 && residual_sq <= cfg.alpha / (2.0 * cfg.q * gap) * e0 * e0 &&
                    transform_sq <= cfg.alpha / (2.0 * gap) * e0 * e0 &&
                    cross <= cfg.alpha / (2.0 * gap) * e0 * e0 && step_sq <= e0 * e0;
    add("summability", ok);
  } else {
    add("summability", true, exact ? "no step-transform records" : "noisy run", true);
  }

  return rep;
}

}  // namespace regkacz
