#pragma once

#include "regkacz/problems.hpp"
#include "regkacz/solver.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace regkacz {

enum class SolverKind { llmk, lmk_exact, llk };

std::string to_string(SolverKind s);
SolverKind solver_kind_from_string(const std::string& s);

struct ConfigOverrides {
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<double> q;
  std::optional<double> eta;
  std::optional<double> C;
  std::optional<double> cg_tol;
  std::optional<double> step_size;  // l-LK only
  std::optional<double> exact_data_rel_tol;
  std::optional<int> max_cycles;
  std::optional<int> cg_iters;
  std::optional<AlphaMode> alpha_mode;
  std::optional<InnerSolveMode> inner_mode;
  std::optional<bool> warm_start;
  std::optional<RecordLevel> record_level;
};

enum class OutputKind { trace_csv, summary_json, cycle_series_csv };

struct ExperimentSpec {
  std::string problem_id;
  SolverKind solver = SolverKind::llmk;
  double rel_noise = 0.05;
  std::uint64_t seed = 0;
  ConfigOverrides overrides;
  std::vector<OutputKind> outputs = {OutputKind::trace_csv, OutputKind::summary_json,
                                     OutputKind::cycle_series_csv};
  std::string out_dir;  // empty: env override, then "./out"
  std::string label;    // artifact basename; derived from the spec when empty
};

struct ResolvedExperiment {
  ExperimentInstance instance;
  SolverConfig config;
  double lk_step_size = 0.0;
};

/// Applies registry defaults and overrides, validating feasibility before
/// any computation. lmk-exact requires rel_noise == 0.
ResolvedExperiment resolve_experiment(const ExperimentSpec& spec);

std::filesystem::path resolve_out_dir(const ExperimentSpec& spec);
std::string spec_label(const ExperimentSpec& spec);

struct RunReport {
  ExperimentSpec spec;
  RunResult result;
  double final_error_to_truth = -1.0;  // negative when no ground truth
  std::filesystem::path trace_csv;
  std::filesystem::path cycle_csv;
  std::filesystem::path summary_json;
};

/// Builds the instance, runs the requested solver and writes the artifact
/// files. Deterministic: identical specs produce byte-identical artifacts.
RunReport run_experiment(const ExperimentSpec& spec);

struct ComparisonSide {
  long stop_index = 0;
  long cycles_executed = 0;
  long total_nonloped = 0;
  StopReason stop_reason = StopReason::cycle_budget;
  double final_error_to_truth = -1.0;
  std::vector<double> final_residual_norms;
  std::filesystem::path summary_json;
};

struct ComparisonReport {
  ComparisonSide llmk;
  ComparisonSide llk;
  bool llmk_fewer_cycles = false;
  bool llmk_nonloped_le = false;
  bool both_discrepancy = false;
  bool verify_passed = false;
  std::filesystem::path report_json;
};

/// Runs l-LMK and l-LK on the same instance and noise realization, writes
/// both runs' artifacts plus a comparison report. The orderings are
/// recomputed from the serialized summaries, not from in-memory state.
/// The l-LMK side defaults to residual-matched alpha (override to taste).
ComparisonReport run_comparison(ExperimentSpec spec);

struct SweepRow {
  double amplitude = 0.0;
  double delta_min = 0.0;
  long stop_index = 0;
  long cycles_executed = 0;
  StopReason stop_reason = StopReason::cycle_budget;
  double final_error_to_truth = 0.0;
  double fixed_k_distance = 0.0;  // || x_k^delta - x_k || at k = 2N
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double slope = 0.0;  // least-squares d log k* / d log delta_min
  long fixed_k = 0;
  std::filesystem::path csv;
  std::filesystem::path report_json;
};

/// Runs the spec at each amplitude with a shared noise direction (the
/// amplitudes only rescale it), tabulates stopping indices, final errors and
/// fixed-k distances to the exact-data trajectory, and fits the log-log
/// slope of k* against delta_min. Needs at least 3 amplitudes, strictly
/// decreasing and positive.
SweepReport noise_sweep(ExperimentSpec spec, const std::vector<double>& amplitudes);

struct VerifyCheck {
  std::string name;
  bool passed = true;
  bool skipped = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool passed() const;
};

/// Full in-memory check suite: loping correctness, stationarity, stopping
/// soundness, step-residual two-form agreement and bounds, monotonicity
/// (skipped with a notice in residual-matched mode) and, for exact-data
/// runs with ground truth, the summability bounds.
VerifyReport verify_run(const RunResult& run, const ResolvedExperiment& resolved);

/// Re-checks a serialized run from its artifact files. Throws
/// std::runtime_error for summary-level records, which carry no trace.
VerifyReport verify_files(const std::filesystem::path& summary_json);

inline constexpr const char* kOutDirEnvVar = "REGKACZ_OUT_DIR";

}  // namespace regkacz
