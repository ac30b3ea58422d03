#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "astar/guidance.hpp"

namespace astar {

struct CurvePoint {
  std::size_t t = 0;
  double value = 0.0;
};

struct OverlapCurve {
  std::vector<CurvePoint> points;
  bool single_concept = false;  // fewer than two concepts, curve empty
};

/// Mean pairwise soft IoU of the snapshot maps, one point per snapshot.
OverlapCurve overlap_curve(const RunTrace& trace);

struct RetentionCurve {
  std::vector<std::vector<CurvePoint>> per_concept;
  std::vector<bool> undefined;  // step-T mask empty for that concept
};

/// Fraction of each concept's step-T mask whose normalized activation is >= tau_frac.
RetentionCurve retention_curve(const RunTrace& trace, double tau_frac);

/// Outcome of one seed under one configuration.
struct RunSummary {
  std::uint64_t seed = 0;
  bool both_present = false;
  std::vector<bool> present;
  std::vector<double> score;
  double final_overlap = 0.0;
  std::vector<double> final_retention;  // NaN when undefined
};

RunSummary summarize(const RunTrace& trace, double tau_frac);

/// Proxy statistics of one method over a seed cohort.
struct CohortStats {
  std::vector<std::uint64_t> seeds;  // sorted
  double both_present_rate = 0.0;
  std::vector<double> presence_rate;
  double mean_final_overlap = 0.0;
  std::vector<double> mean_final_retention;  // over seeds with a defined value
};

CohortStats aggregate(std::vector<RunSummary> runs, std::size_t concept_count);

struct CohortComparison {
  CohortStats baseline;
  CohortStats guided;
  double both_present_delta = 0.0;
  std::vector<double> presence_delta;
  double overlap_delta = 0.0;
  std::vector<double> retention_delta;
  double overlap_decreased_fraction = 0.0;  // seeds where guided final overlap < baseline
  std::vector<RunTrace> baseline_traces;    // in sorted seed order
  std::vector<RunTrace> guided_traces;
};

/// Runs `jobs` worker threads (0 = hardware concurrency) over seeds for a function
/// producing one trace per seed. Results come back in the order of `seeds`.
std::vector<RunTrace> run_cohort(const std::vector<std::uint64_t>& seeds, const Pipeline& pipeline,
                                 const GuidanceConfig& cfg, std::size_t jobs = 0);

CohortComparison cohort_compare(const Pipeline& pipeline, const GuidanceConfig& baseline,
                                const GuidanceConfig& guided, std::vector<std::uint64_t> seeds,
                                std::size_t jobs = 0);

/// Per-run seeds expanded from a master seed with splitmix64.
std::vector<std::uint64_t> expand_seeds(std::uint64_t master, std::size_t count);

}  // namespace astar
