#include "astar/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "astar/pgm.hpp"

namespace astar {

namespace fs = std::filesystem;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  return std::string(buf, p);
}

void write_trace_csv(std::ostream& out, const RunTrace& trace, const ConceptSet& concepts) {
  const std::size_t n = concepts.size();
  out << "step,seg_total,ret_total,total";
  for (std::size_t m = 1; m < n; ++m)
    for (std::size_t k = 0; k < m; ++k) out << ",seg_" << concepts[k].name << "_" << concepts[m].name;
  for (std::size_t k = 0; k < n; ++k) out << ",ret_" << concepts[k].name;
  out << ",step_size,mask_from_step\n";
  for (const auto& s : trace.steps) {
    out << s.t << "," << format_number(s.loss.seg_total) << "," << format_number(s.loss.ret_total) << ","
        << format_number(s.loss.total);
    for (const auto& p : s.loss.per_pair) out << "," << format_number(p.value);
    if (s.loss.per_pair.empty())
      for (std::size_t i = 0; i < n * (n - 1) / 2; ++i) out << ",";
    if (s.loss.per_concept.empty()) {
      for (std::size_t k = 0; k < n; ++k) out << ",";
    } else {
      for (const auto& c : s.loss.per_concept) out << "," << (c.skipped ? std::string() : format_number(c.value));
    }
    out << "," << format_number(s.step_size) << ",";
    if (s.consumed_mask_step) out << *s.consumed_mask_step;
    out << "\n";
  }
}

void write_heatmaps(const fs::path& dir, const RunTrace& trace, const ConceptSet& concepts) {
  fs::create_directories(dir);
  for (const auto& snap : trace.snapshots)
    for (std::size_t k = 0; k < concepts.size(); ++k) {
      const auto values = snap.maps.slice(k);
      write_pgm(dir / ("seed" + std::to_string(trace.seed) + "_t" + std::to_string(snap.t) + "_" +
                       concepts[k].name + ".pgm"),
                heatmap(values, snap.maps.resolution));
    }
}

fs::path resolve_output_dir(const RunConfig& cfg, ExperimentKind kind, const std::optional<fs::path>& explicit_out) {
  if (explicit_out) return *explicit_out;
  const char* env = std::getenv("ASTAR_OUTPUT_ROOT");
  const fs::path root = env && *env ? fs::path(env) : fs::path("astar-out");
  if (cfg.output) return cfg.output->is_absolute() ? *cfg.output : root / *cfg.output;
  const std::string stem = cfg.source.empty() ? std::string("experiment") : cfg.source.stem().string();
  return root / (stem + "_" + kind_name(kind));
}

std::vector<Method> experiment_methods(const RunConfig& cfg, ExperimentKind kind) {
  GuidanceConfig off = cfg.guidance;
  off.lambda_seg = off.lambda_ret = 0.0;
  switch (kind) {
    case ExperimentKind::Run: return {{"run", cfg.guidance}};
    case ExperimentKind::Compare: return {{"baseline", off}, {"guided", cfg.guidance}};
    case ExperimentKind::Ablate: {
      std::vector<Method> out;
      for (auto row : {AblationRow::None, AblationRow::RetOnly, AblationRow::SegOnly, AblationRow::Both}) {
        out.push_back({ablation_label(row), ablation_config(cfg.guidance, row)});
      }
      return out;
    }
    case ExperimentKind::Layout: {
      GuidanceConfig layout = cfg.guidance;
      layout.mask_source = MaskSource::UserLayout;
      return {{"baseline", off}, {"layout", layout}};
    }
  }
  return {};
}

namespace {

class CsvRows {
 public:
  explicit CsvRows(std::ostream& out) : out_(out) { out_ << "method,scope,metric,value\n"; }
  void row(const std::string& method, const std::string& scope, const std::string& metric, double value) {
    out_ << method << "," << scope << "," << metric << "," << format_number(value) << "\n";
  }

 private:
  std::ostream& out_;
};

void write_summary(std::ostream& out, const std::vector<MethodResult>& results, const ConceptSet& concepts) {
  CsvRows csv(out);
  const std::size_t n = concepts.size();
  for (const auto& m : results) {
    const auto& st = m.stats;
    const std::string& label = m.method.label;
    csv.row(label, "cohort", "seeds", static_cast<double>(st.seeds.size()));
    csv.row(label, "cohort", "proxy_both_present_rate", st.both_present_rate);
    for (std::size_t k = 0; k < n; ++k)
      csv.row(label, "cohort", "proxy_presence_rate_" + concepts[k].name, st.presence_rate[k]);
    csv.row(label, "cohort", "proxy_mean_final_overlap", st.mean_final_overlap);
    for (std::size_t k = 0; k < n; ++k)
      csv.row(label, "cohort", "proxy_mean_final_retention_" + concepts[k].name, st.mean_final_retention[k]);
    for (std::size_t k = 0; k < m.peak_in_box.size(); ++k)
      csv.row(label, "cohort", "peak_in_box_rate_" + concepts[k].name, m.peak_in_box[k]);
  }
  if (results.size() > 1) {
    const auto& base = results.front();
    for (std::size_t i = 1; i < results.size(); ++i) {
      const auto& m = results[i];
      const std::string scope = "paired_vs_" + base.method.label;
      const std::string& label = m.method.label;
      csv.row(label, scope, "proxy_both_present_delta", m.stats.both_present_rate - base.stats.both_present_rate);
      for (std::size_t k = 0; k < n; ++k)
        csv.row(label, scope, "proxy_presence_delta_" + concepts[k].name,
                m.stats.presence_rate[k] - base.stats.presence_rate[k]);
      csv.row(label, scope, "proxy_overlap_delta", m.stats.mean_final_overlap - base.stats.mean_final_overlap);
      for (std::size_t k = 0; k < n; ++k)
        csv.row(label, scope, "proxy_retention_delta_" + concepts[k].name,
                m.stats.mean_final_retention[k] - base.stats.mean_final_retention[k]);
      std::size_t decreased = 0;
      for (std::size_t s = 0; s < m.runs.size(); ++s) decreased += m.runs[s].final_overlap < base.runs[s].final_overlap;
      csv.row(label, scope, "proxy_overlap_decreased_fraction",
              static_cast<double>(decreased) / static_cast<double>(m.runs.size()));
    }
  }
  for (const auto& m : results) {
    for (const auto& r : m.runs) {
      const std::string scope = "seed_" + std::to_string(r.seed);
      const std::string& label = m.method.label;
      csv.row(label, scope, "proxy_both_present", r.both_present ? 1.0 : 0.0);
      for (std::size_t k = 0; k < n; ++k) csv.row(label, scope, "proxy_score_" + concepts[k].name, r.score[k]);
      csv.row(label, scope, "proxy_final_overlap", r.final_overlap);
      for (std::size_t k = 0; k < n; ++k)
        csv.row(label, scope, "proxy_final_retention_" + concepts[k].name, r.final_retention[k]);
    }
  }
}

std::vector<double> peak_in_box_rates(const std::vector<RunTrace>& traces, const std::vector<BinaryMask>& masks) {
  std::vector<double> out;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].empty()) {
      out.push_back(std::nan(""));
      continue;
    }
    std::size_t inside = 0;
    for (const auto& t : traces) inside += masks[k].at(t.presence.peak_row[k], t.presence.peak_col[k]) ? 1 : 0;
    out.push_back(static_cast<double>(inside) / static_cast<double>(traces.size()));
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(RunConfig cfg, ExperimentKind kind, const ExperimentOptions& opts,
                                std::ostream* log) {
  if (opts.seeds) cfg.seeds = *opts.seeds;
  if (opts.jobs) cfg.jobs = *opts.jobs;
  if (opts.snapshot_every) {
    if (*opts.snapshot_every < 1) throw ConfigError("snapshot interval must be at least 1");
    cfg.guidance.snapshot_every = *opts.snapshot_every;
  }
  if (cfg.seeds.empty()) throw ConfigError("no seeds to run");

  const Pipeline pipeline = cfg.pipeline();
  const ConceptSet& concepts = pipeline.spec.concepts();
  ExperimentResult result;

  if (kind == ExperimentKind::Layout) {
    if (!opts.layout_file) throw ConfigError("layout experiments need a layout file");
    LayoutMasks layout = load_layout_masks(*opts.layout_file, concepts, pipeline.spec.resolution());
    cfg.guidance.layout_masks = std::move(layout.masks);
    result.warnings = std::move(layout.warnings);
  }
  if (log) {
    *log << "# resolved configuration (" << kind_name(kind) << ")\n" << cfg.echo();
    for (const auto& w : result.warnings) *log << "warning: " << w << "\n";
  }

  auto seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end()) throw ConfigError("duplicate seeds");

  result.output_dir = resolve_output_dir(cfg, kind, opts.output);
  const fs::path out_dir = result.output_dir;
  const fs::path stage = out_dir.parent_path() / (out_dir.filename().string() + ".partial");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !fs::exists(out_dir / "summary.csv")) {
    throw std::runtime_error("refusing to overwrite " + out_dir.string() + ": not an earlier experiment output");
  }
  fs::remove_all(stage);
  fs::create_directories(stage);

  try {
    for (const auto& method : experiment_methods(cfg, kind)) {
      if (log) *log << "running " << method.label << " over " << seeds.size() << " seeds\n";
      MethodResult mr;
      mr.method = method;
      mr.traces = run_cohort(seeds, pipeline, method.guidance, cfg.jobs);
      for (const auto& t : mr.traces) mr.runs.push_back(summarize(t, method.guidance.tau_frac));
      mr.stats = aggregate(mr.runs, concepts.size());
      if (kind == ExperimentKind::Layout) mr.peak_in_box = peak_in_box_rates(mr.traces, cfg.guidance.layout_masks);

      const fs::path dir = stage / method.label;
      fs::create_directories(dir);
      for (const auto& t : mr.traces) {
        std::ofstream f(dir / ("trace_seed" + std::to_string(t.seed) + ".csv"), std::ios::binary);
        write_trace_csv(f, t, concepts);
        if (!f) throw std::runtime_error("failed to write trace for seed " + std::to_string(t.seed));
        if (opts.heatmaps) write_heatmaps(dir / "heatmaps", t, concepts);
      }
      result.methods.push_back(std::move(mr));
    }
    {
      std::ofstream f(stage / "summary.csv", std::ios::binary);
      write_summary(f, result.methods, concepts);
      if (!f) throw std::runtime_error("failed to write summary.csv");
    }
    fs::remove_all(out_dir);
    fs::rename(stage, out_dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(stage, ec);
    throw;
  }
  return result;
}

}  // namespace astar
