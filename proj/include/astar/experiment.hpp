#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "astar/config.hpp"
#include "astar/metrics.hpp"

namespace astar {

/// Locale-independent shortest form with at most 12 significant digits.
std::string format_number(double v);

/// Trace CSV: step, seg_total, ret_total, total, seg_<a>_<b>..., ret_<name>..., step_size, mask_from_step.
void write_trace_csv(std::ostream& out, const RunTrace& trace, const ConceptSet& concepts);

/// Heatmaps of every snapshot: <dir>/seed<seed>_t<t>_<concept>.pgm.
void write_heatmaps(const std::filesystem::path& dir, const RunTrace& trace, const ConceptSet& concepts);

struct ExperimentOptions {
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::filesystem::path> output;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> snapshot_every;
  std::optional<std::filesystem::path> layout_file;
  bool heatmaps = true;
};

/// One method of an experiment: a label and its guidance settings.
struct Method {
  std::string label;
  GuidanceConfig guidance;
};

struct MethodResult {
  Method method;
  std::vector<RunTrace> traces;  // sorted seed order
  std::vector<RunSummary> runs;
  CohortStats stats;
  std::vector<double> peak_in_box;  // layout only: per-concept fraction of seeds
};

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<MethodResult> methods;
  std::vector<std::string> warnings;
};

/// Where outputs go: the explicit path, else the config's output (relative paths under
/// the output root), else <root>/<config-stem>_<kind>. The root is $ASTAR_OUTPUT_ROOT or
/// "astar-out".
std::filesystem::path resolve_output_dir(const RunConfig& cfg, ExperimentKind kind,
                                         const std::optional<std::filesystem::path>& explicit_out);

/// The methods an experiment kind runs.
std::vector<Method> experiment_methods(const RunConfig& cfg, ExperimentKind kind);

/// Runs every method over the seeds and writes traces, heatmaps and summary.csv.
/// Outputs are staged in a sibling directory and moved into place only on success.
ExperimentResult run_experiment(RunConfig cfg, ExperimentKind kind, const ExperimentOptions& opts,
                                std::ostream* log = nullptr);

}  // namespace astar
