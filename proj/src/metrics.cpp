#include "astar/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace astar {

OverlapCurve overlap_curve(const RunTrace& trace) {
  OverlapCurve out;
  for (const auto& snap : trace.snapshots) {
    const std::size_t n = snap.maps.count();
    if (n < 2) {
      out.single_concept = true;
      out.points.clear();
      return out;
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t m = 1; m < n; ++m)
      for (std::size_t k = 0; k < m; ++k, ++pairs) {
        const auto a = snap.maps.slice(k), b = snap.maps.slice(m);
        total += soft_iou(a, b).value;
      }
    out.points.push_back({snap.t, total / static_cast<double>(pairs)});
  }
  return out;
}

RetentionCurve retention_curve(const RunTrace& trace, double tau_frac) {
  if (trace.steps.empty()) throw std::invalid_argument("retention_curve: empty trace");
  const auto& reference = trace.steps.front().masks;
  RetentionCurve out;
  out.per_concept.resize(reference.size());
  out.undefined.resize(reference.size());
  for (std::size_t n = 0; n < reference.size(); ++n) {
    const std::size_t area = reference[n].count();
    out.undefined[n] = area == 0;
    if (area == 0) continue;
    for (const auto& snap : trace.snapshots) {
      const auto map = snap.maps.slice(n);
      std::size_t kept = 0;
      for (std::size_t i = 0; i < map.size(); ++i) kept += (reference[n].cells[i] && map[i] >= tau_frac) ? 1 : 0;
      out.per_concept[n].push_back({snap.t, static_cast<double>(kept) / static_cast<double>(area)});
    }
  }
  return out;
}

RunSummary summarize(const RunTrace& trace, double tau_frac) {
  RunSummary s;
  s.seed = trace.seed;
  s.present = trace.presence.present;
  s.score = trace.presence.score;
  s.both_present = trace.presence.all_present();
  const auto ov = overlap_curve(trace);
  s.final_overlap = ov.points.empty() ? 0.0 : ov.points.back().value;
  const auto ret = retention_curve(trace, tau_frac);
  for (std::size_t n = 0; n < ret.per_concept.size(); ++n) {
    s.final_retention.push_back(ret.undefined[n] ? std::numeric_limits<double>::quiet_NaN()
                                                 : ret.per_concept[n].back().value);
  }
  return s;
}

CohortStats aggregate(std::vector<RunSummary> runs, std::size_t concept_count) {
  if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
  std::sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) { return a.seed < b.seed; });
  CohortStats st;
  st.presence_rate.assign(concept_count, 0.0);
  st.mean_final_retention.assign(concept_count, 0.0);
  std::vector<std::size_t> defined(concept_count, 0);
  const double count = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    st.seeds.push_back(r.seed);
    st.both_present_rate += r.both_present ? 1.0 : 0.0;
    st.mean_final_overlap += r.final_overlap;
    for (std::size_t n = 0; n < concept_count; ++n) {
      st.presence_rate[n] += r.present[n] ? 1.0 : 0.0;
      if (!std::isnan(r.final_retention[n])) {
        st.mean_final_retention[n] += r.final_retention[n];
        ++defined[n];
      }
    }
  }
  st.both_present_rate /= count;
  st.mean_final_overlap /= count;
  for (std::size_t n = 0; n < concept_count; ++n) {
    st.presence_rate[n] /= count;
    st.mean_final_retention[n] = defined[n] ? st.mean_final_retention[n] / static_cast<double>(defined[n])
                                            : std::numeric_limits<double>::quiet_NaN();
  }
  return st;
}

std::vector<RunTrace> run_cohort(const std::vector<std::uint64_t>& seeds, const Pipeline& pipeline,
                                 const GuidanceConfig& cfg, std::size_t jobs) {
  std::vector<RunTrace> out(seeds.size());
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, std::max<std::size_t>(seeds.size(), 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
      try {
        out[i] = run(seeds[i], pipeline, cfg);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = seeds.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

CohortComparison cohort_compare(const Pipeline& pipeline, const GuidanceConfig& baseline,
                                const GuidanceConfig& guided, std::vector<std::uint64_t> seeds, std::size_t jobs) {
  if (seeds.empty()) throw std::invalid_argument("cohort_compare: seed list is empty");
  std::sort(seeds.begin(), seeds.end());
  if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end()) {
    throw std::invalid_argument("cohort_compare: duplicate seeds");
  }
  CohortComparison out;
  out.baseline_traces = run_cohort(seeds, pipeline, baseline, jobs);
  out.guided_traces = run_cohort(seeds, pipeline, guided, jobs);

  const std::size_t n = pipeline.spec.concepts().size();
  std::vector<RunSummary> base_runs, guided_runs;
  std::size_t decreased = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    base_runs.push_back(summarize(out.baseline_traces[i], baseline.tau_frac));
    guided_runs.push_back(summarize(out.guided_traces[i], guided.tau_frac));
    if (guided_runs.back().final_overlap < base_runs.back().final_overlap) ++decreased;
  }
  out.baseline = aggregate(base_runs, n);
  out.guided = aggregate(guided_runs, n);
  out.both_present_delta = out.guided.both_present_rate - out.baseline.both_present_rate;
  out.overlap_delta = out.guided.mean_final_overlap - out.baseline.mean_final_overlap;
  for (std::size_t k = 0; k < n; ++k) {
    out.presence_delta.push_back(out.guided.presence_rate[k] - out.baseline.presence_rate[k]);
    out.retention_delta.push_back(out.guided.mean_final_retention[k] - out.baseline.mean_final_retention[k]);
  }
  out.overlap_decreased_fraction = static_cast<double>(decreased) / static_cast<double>(seeds.size());
  return out;
}

std::vector<std::uint64_t> expand_seeds(std::uint64_t master, std::size_t count) {
  std::vector<std::uint64_t> out;
  std::uint64_t state = master;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    out.push_back(z ^ (z >> 31));
  }
  return out;
}

}  // namespace astar
