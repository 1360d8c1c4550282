// Experiment driver for the Kaczmarz-type regularization solvers: single
// runs, method comparisons, noise sweeps and trace verification, all writing
// byte-reproducible artifacts.

#include "regkacz/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using regkacz::AlphaMode;
using regkacz::ExperimentSpec;
using regkacz::InnerSolveMode;
using regkacz::RecordLevel;
using ordered_json = nlohmann::ordered_json;

struct CliOptions {
  std::string config_file;
  std::string problem;
  std::string solver;
  double noise = -1.0;  // negative: unset
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha, tau, q, eta, cg_tol, step_size;
  std::optional<int> max_cycles, cg_iters;
  std::string alpha_mode;
  std::string record;
  std::string out_dir;
  std::string label;
  bool warm_start = false;
  std::vector<double> amplitudes;
  std::string summary_path;
};

void add_spec_flags(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_file, "JSON config file; flags override its fields");
  cmd->add_option("--problem", o.problem, "registered problem id (see list-problems)");
  cmd->add_option("--noise", o.noise, "relative noise level, e.g. 0.05");
  cmd->add_option("--seed", o.seed, "noise seed");
  cmd->add_option("--alpha", o.alpha, "regularization weight (fixed mode)");
  cmd->add_option("--tau", o.tau, "loping threshold factor");
  cmd->add_option("--q", o.q, "contraction factor in (eta + (1+eta)/tau, 1)");
  cmd->add_option("--eta", o.eta, "nonlinearity constant override");
  cmd->add_option("--max-cycles", o.max_cycles, "cycle budget");
  cmd->add_option("--cg-iters", o.cg_iters, "inner CG iteration cap");
  cmd->add_option("--cg-tol", o.cg_tol, "inner CG relative tolerance");
  cmd->add_option("--alpha-mode", o.alpha_mode, "fixed | residual-matched");
  cmd->add_option("--step-size", o.step_size, "l-LK step size (default 0.9/C^2)");
  cmd->add_option("--record", o.record, "summary | full-trace");
  cmd->add_flag("--cg-warm-start", o.warm_start, "warm-start CG from the previous step");
  cmd->add_option("--out-dir", o.out_dir, "output directory (or env REGKACZ_OUT_DIR)");
  cmd->add_option("--label", o.label, "artifact basename override");
}

ExperimentSpec spec_from_options(const CliOptions& o, bool need_solver) {
  ExperimentSpec spec;
  bool noise_set = false;

  if (!o.config_file.empty()) {
    std::ifstream is(o.config_file);
    if (!is) throw CLI::ValidationError("--config", "cannot open " + o.config_file);
    ordered_json j = ordered_json::parse(is);
    if (j.contains("problem")) spec.problem_id = j["problem"].get<std::string>();
    if (j.contains("solver")) spec.solver = regkacz::solver_kind_from_string(j["solver"]);
    if (j.contains("noise")) {
      spec.rel_noise = j["noise"].get<double>();
      noise_set = true;
    }
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out_dir")) spec.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("label")) spec.label = j["label"].get<std::string>();
    auto& ov = spec.overrides;
    if (j.contains("alpha")) ov.alpha = j["alpha"].get<double>();
    if (j.contains("tau")) ov.tau = j["tau"].get<double>();
    if (j.contains("q")) ov.q = j["q"].get<double>();
    if (j.contains("eta")) ov.eta = j["eta"].get<double>();
    if (j.contains("max_cycles")) ov.max_cycles = j["max_cycles"].get<int>();
    if (j.contains("cg_iters")) ov.cg_iters = j["cg_iters"].get<int>();
    if (j.contains("cg_tol")) ov.cg_tol = j["cg_tol"].get<double>();
    if (j.contains("step_size")) ov.step_size = j["step_size"].get<double>();
    if (j.contains("alpha_mode"))
      ov.alpha_mode = j["alpha_mode"].get<std::string>() == "residual-matched"
                          ? AlphaMode::residual_matched
                          : AlphaMode::fixed;
    if (j.contains("record"))
      ov.record_level = j["record"].get<std::string>() == "summary" ? RecordLevel::summary
                                                                    : RecordLevel::full_trace;
  }

  if (!o.problem.empty()) spec.problem_id = o.problem;
  if (!o.solver.empty()) spec.solver = regkacz::solver_kind_from_string(o.solver);
  if (o.noise >= 0.0) {
    spec.rel_noise = o.noise;
    noise_set = true;
  }
  if (o.seed) spec.seed = *o.seed;
  if (!o.out_dir.empty()) spec.out_dir = o.out_dir;
  if (!o.label.empty()) spec.label = o.label;

  auto& ov = spec.overrides;
  if (o.alpha) ov.alpha = o.alpha;
  if (o.tau) ov.tau = o.tau;
  if (o.q) ov.q = o.q;
  if (o.eta) ov.eta = o.eta;
  if (o.max_cycles) ov.max_cycles = o.max_cycles;
  if (o.cg_iters) ov.cg_iters = o.cg_iters;
  if (o.cg_tol) ov.cg_tol = o.cg_tol;
  if (o.step_size) ov.step_size = o.step_size;
  if (o.warm_start) ov.warm_start = true;
  if (!o.alpha_mode.empty()) {
    if (o.alpha_mode != "fixed" && o.alpha_mode != "residual-matched")
      throw CLI::ValidationError("--alpha-mode", "expected fixed or residual-matched");
    ov.alpha_mode = o.alpha_mode == "fixed" ? AlphaMode::fixed : AlphaMode::residual_matched;
  }
  if (!o.record.empty()) {
    if (o.record != "summary" && o.record != "full-trace")
      throw CLI::ValidationError("--record", "expected summary or full-trace");
    ov.record_level = o.record == "summary" ? RecordLevel::summary : RecordLevel::full_trace;
  }

  if (spec.solver == regkacz::SolverKind::lmk_exact && !noise_set) spec.rel_noise = 0.0;
  if (need_solver && spec.problem_id.empty())
    throw CLI::ValidationError("--problem", "a problem id is required");
  return spec;
}

void print_run(const regkacz::RunReport& r) {
  std::printf("problem   : %s\n", r.spec.problem_id.c_str());
  std::printf("solver    : %s\n", regkacz::to_string(r.spec.solver).c_str());
  std::printf("stop      : %s at k* = %ld (%ld cycles, %ld non-loped steps)\n",
              regkacz::to_string(r.result.stop_reason).c_str(), r.result.stop_index,
              r.result.cycles_executed(), r.result.total_nonloped());
  if (r.final_error_to_truth >= 0.0)
    std::printf("error     : %.6g (to ground truth)\n", r.final_error_to_truth);
  if (!r.summary_json.empty()) std::printf("summary   : %s\n", r.summary_json.string().c_str());
  if (!r.trace_csv.empty()) std::printf("trace     : %s\n", r.trace_csv.string().c_str());
  if (!r.cycle_csv.empty()) std::printf("cycles    : %s\n", r.cycle_csv.string().c_str());
}

int print_verify(const regkacz::VerifyReport& rep) {
  for (const regkacz::VerifyCheck& c : rep.checks) {
    const char* tag = c.skipped ? "SKIP" : (c.passed ? "PASS" : "FAIL");
    std::printf("[%s] %-24s %s\n", tag, c.name.c_str(), c.detail.c_str());
  }
  std::printf("verify: %s\n", rep.passed() ? "PASS" : "FAIL");
  return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kaczmarz-type regularization solvers for systems of ill-posed equations"};
  app.require_subcommand(1);

  CliOptions run_opts, cmp_opts, sweep_opts, verify_opts;

  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  run_opts.solver = "";
  run_cmd->add_option("--solver", run_opts.solver, "llmk | lmk-exact | llk");
  add_spec_flags(run_cmd, run_opts);

  CLI::App* cmp_cmd =
      app.add_subcommand("compare", "run l-LMK and l-LK on the same noisy instance");
  add_spec_flags(cmp_cmd, cmp_opts);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "re-run at decreasing noise amplitudes");
  sweep_cmd
      ->add_option("--amplitudes", sweep_opts.amplitudes,
                   "strictly decreasing positive amplitudes (>= 3)")
      ->delimiter(',');
  sweep_cmd->add_option("--solver", sweep_opts.solver, "llmk | llk");
  add_spec_flags(sweep_cmd, sweep_opts);

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "check solver invariants for a run or a summary file");
  verify_cmd->add_option("--summary", verify_opts.summary_path,
                         "verify a serialized run from its summary file");
  verify_cmd->add_option("--solver", verify_opts.solver, "llmk | lmk-exact | llk");
  add_spec_flags(verify_cmd, verify_opts);

  CLI::App* list_cmd = app.add_subcommand("list-problems", "list registered problem ids");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const ExperimentSpec spec = spec_from_options(run_opts, true);
      print_run(regkacz::run_experiment(spec));
      return 0;
    }
    if (cmp_cmd->parsed()) {
      const ExperimentSpec spec = spec_from_options(cmp_opts, true);
      const regkacz::ComparisonReport rep = regkacz::run_comparison(spec);
      std::printf("l-LMK: %ld cycles, %ld non-loped steps, stop %s\n", rep.llmk.cycles_executed,
                  rep.llmk.total_nonloped, regkacz::to_string(rep.llmk.stop_reason).c_str());
      std::printf("l-LK : %ld cycles, %ld non-loped steps, stop %s\n", rep.llk.cycles_executed,
                  rep.llk.total_nonloped, regkacz::to_string(rep.llk.stop_reason).c_str());
      std::printf("l-LMK used fewer cycles: %s; non-loped steps <=: %s\n",
                  rep.llmk_fewer_cycles ? "yes" : "no", rep.llmk_nonloped_le ? "yes" : "no");
      std::printf("report: %s\n", rep.report_json.string().c_str());
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const ExperimentSpec spec = spec_from_options(sweep_opts, true);
      const regkacz::SweepReport rep = regkacz::noise_sweep(spec, sweep_opts.amplitudes);
      for (const regkacz::SweepRow& row : rep.rows)
        std::printf("amplitude %-8g k* = %-6ld error = %-12.6g fixed-k dist = %.6g\n",
                    row.amplitude, row.stop_index, row.final_error_to_truth,
                    row.fixed_k_distance);
      std::printf("log-log slope of k* vs delta_min: %.4f\n", rep.slope);
      std::printf("report: %s\n", rep.report_json.string().c_str());
      return 0;
    }
    if (verify_cmd->parsed()) {
      if (!verify_opts.summary_path.empty())
        return print_verify(regkacz::verify_files(verify_opts.summary_path));
      const ExperimentSpec spec = spec_from_options(verify_opts, true);
      regkacz::ResolvedExperiment resolved = regkacz::resolve_experiment(spec);
      const regkacz::RunReport report = regkacz::run_experiment(spec);
      return print_verify(regkacz::verify_run(report.result, resolved));
    }
    if (list_cmd->parsed()) {
      for (const regkacz::ProblemInfo& p : regkacz::list_problems())
        std::printf("%-24s N=%-3d dim_x=%-5lld %s\n", p.id.c_str(), p.n_equations,
                    static_cast<long long>(p.dim_x), p.description.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
