#include "astar/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "astar/metrics.hpp"

namespace astar {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string value;
  std::size_t line = 0;
};

class Reader {
 public:
  Reader(std::string origin, std::string section, std::string key, const Entry& e)
      : origin_(std::move(origin)), name_(section + "." + key), entry_(e) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(entry_.line) + ": " + name_ + ": " + msg);
  }

  double real() const {
    double v = 0.0;
    const auto& s = entry_.value;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) fail("expected a number, got '" + s + "'");
    return v;
  }

  std::uint64_t integer() const {
    std::uint64_t v = 0;
    const auto& s = entry_.value;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail("expected a non-negative integer, got '" + s + "'");
    return v;
  }

  bool boolean() const {
    const auto& s = entry_.value;
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    fail("expected true or false, got '" + s + "'");
  }

  const std::string& text() const { return entry_.value; }

 private:
  std::string origin_;
  std::string name_;
  Entry entry_;
};

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"scene", {"concepts", "channels", "embedding_norm", "embedding_seed", "resolution", "scene"}},
    {"schedule", {"steps", "beta_start", "beta_end", "guidance_scale"}},
    {"attention", {"projection", "width", "scale", "seed", "normalizer_gradient"}},
    {"guidance",
     {"lambda_seg", "lambda_ret", "tau_frac", "updates_per_step", "cutoff", "backtracking", "presence_threshold"}},
    {"run", {"seeds", "master_seed", "output", "snapshot_every", "jobs", "kind"}},
};

// "<weight> <concept>@<row>,<col>,<radius> ..."
CandidateScene parse_scene(const Reader& rd) {
  std::istringstream in(rd.text());
  std::string weight;
  in >> weight;
  CandidateScene scene;
  {
    auto [p, ec] = std::from_chars(weight.data(), weight.data() + weight.size(), scene.weight);
    if (ec != std::errc{} || p != weight.data() + weight.size()) rd.fail("scene must start with a weight");
  }
  std::string item;
  while (in >> item) {
    const auto at = item.find('@');
    const auto parts = at == std::string::npos ? std::vector<std::string>{} : split(item.substr(at + 1), ',');
    if (at == 0 || parts.size() != 3) rd.fail("placement '" + item + "' must look like name@row,col,radius");
    Placement p{item.substr(0, at)};
    double* dst[3] = {&p.row, &p.col, &p.radius};
    for (int i = 0; i < 3; ++i) {
      auto [q, ec] = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), *dst[i]);
      if (ec != std::errc{} || q != parts[i].data() + parts[i].size()) {
        rd.fail("placement '" + item + "' has a non-numeric field");
      }
    }
    scene.placements.push_back(std::move(p));
  }
  return scene;
}

std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Run: return "run";
    case ExperimentKind::Compare: return "compare";
    case ExperimentKind::Ablate: return "ablate";
    case ExperimentKind::Layout: return "layout";
  }
  return "?";
}

std::vector<std::uint64_t> parse_seed_spec(const std::string& text, std::uint64_t master_seed) {
  const std::string s = trim(text);
  if (s.find(',') == std::string::npos) {
    std::uint64_t count = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), count);
    if (ec != std::errc{} || p != s.data() + s.size() || count == 0) {
      throw ConfigError("seeds: expected a positive count or a comma-separated list, got '" + s + "'");
    }
    return expand_seeds(master_seed, count);
  }
  std::vector<std::uint64_t> out;
  for (const auto& item : split(s, ',')) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size()) throw ConfigError("seeds: bad seed '" + item + "'");
    out.push_back(v);
  }
  auto sorted = out;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("seeds: duplicate seed");
  return out;
}

RunConfig parse_config(std::istream& in, const std::string& origin) {
  std::map<std::string, std::map<std::string, Entry>> values;
  std::vector<Entry> scene_lines;
  std::string section, raw;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(std::string_view(raw).substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!kKnownKeys.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    if (section.empty()) fail("key outside of a section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!kKnownKeys.at(section).count(key)) fail("unknown key '" + key + "' in [" + section + "]");
    if (value.empty()) fail(section + "." + key + ": empty value");
    if (section == "scene" && key == "scene") {
      scene_lines.push_back({value, lineno});
      continue;
    }
    if (values[section].count(key)) fail(section + "." + key + ": given twice");
    values[section][key] = {value, lineno};
  }

  auto get = [&](const std::string& sec, const std::string& key) -> std::optional<Reader> {
    auto s = values.find(sec);
    if (s == values.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return Reader(origin, sec, key, k->second);
  };
  auto require = [&](const std::string& sec, const std::string& key) {
    auto r = get(sec, key);
    if (!r) throw ConfigError(origin + ": missing required key " + sec + "." + key);
    return *r;
  };

  RunConfig cfg;
  {
    const auto rd = require("scene", "concepts");
    cfg.scene.concepts = split(rd.text(), ',');
    if (cfg.scene.concepts.empty()) rd.fail("at least one concept is required");
  }
  if (auto rd = get("scene", "channels")) {
    cfg.scene.channels = rd->integer();
    if (cfg.scene.channels < cfg.scene.concepts.size()) rd->fail("must be at least the number of concepts");
  }
  if (auto rd = get("scene", "embedding_norm")) {
    cfg.scene.embedding_norm = rd->real();
    if (!(cfg.scene.embedding_norm > 0.0)) rd->fail("must be positive");
  }
  if (auto rd = get("scene", "embedding_seed")) cfg.scene.embedding_seed = rd->integer();
  if (auto rd = get("scene", "resolution")) {
    cfg.scene.resolution = rd->integer();
    if (cfg.scene.resolution < 2) rd->fail("must be at least 2");
  }
  for (const auto& e : scene_lines) cfg.scene.scenes.push_back(parse_scene(Reader(origin, "scene", "scene", e)));

  if (auto rd = get("schedule", "steps")) {
    cfg.schedule.steps = rd->integer();
    if (cfg.schedule.steps < 1) rd->fail("must be at least 1");
  }
  if (auto rd = get("schedule", "beta_start")) {
    cfg.schedule.beta_start = rd->real();
    if (!(cfg.schedule.beta_start > 0.0 && cfg.schedule.beta_start < 1.0)) rd->fail("must lie in (0, 1)");
  }
  if (auto rd = get("schedule", "beta_end")) {
    cfg.schedule.beta_end = rd->real();
    if (!(cfg.schedule.beta_end > 0.0 && cfg.schedule.beta_end < 1.0)) rd->fail("must lie in (0, 1)");
  }
  if (cfg.schedule.beta_end < cfg.schedule.beta_start) {
    throw ConfigError(origin + ": schedule.beta_end must not be below schedule.beta_start");
  }
  if (auto rd = get("schedule", "guidance_scale")) {
    cfg.schedule.guidance_scale = rd->real();
    if (cfg.schedule.guidance_scale < 0.0) rd->fail("must be non-negative");
  }

  if (auto rd = get("attention", "projection")) {
    if (rd->text() == "tied") cfg.attention.projection = ProjectionKind::Tied;
    else if (rd->text() == "gaussian") cfg.attention.projection = ProjectionKind::Gaussian;
    else rd->fail("expected tied or gaussian");
  }
  if (auto rd = get("attention", "width")) {
    cfg.attention.width = rd->integer();
    if (cfg.attention.width == 0) rd->fail("must be positive");
  }
  if (cfg.attention.width == 0) cfg.attention.width = cfg.scene.channels;
  if (cfg.attention.projection == ProjectionKind::Tied && cfg.attention.width > cfg.scene.channels) {
    throw ConfigError(origin + ": attention.width must not exceed scene.channels for tied projections");
  }
  if (auto rd = get("attention", "scale")) {
    cfg.attention.scale = rd->real();
    if (!(cfg.attention.scale > 0.0)) rd->fail("must be positive");
  }
  if (auto rd = get("attention", "seed")) cfg.attention.seed = rd->integer();
  if (auto rd = get("attention", "normalizer_gradient")) {
    if (rd->text() == "stop") cfg.guidance.normalizer = NormalizerGradient::Stop;
    else if (rd->text() == "through") cfg.guidance.normalizer = NormalizerGradient::Through;
    else rd->fail("expected stop or through");
  }

  auto& g = cfg.guidance;
  if (auto rd = get("guidance", "lambda_seg")) {
    g.lambda_seg = rd->real();
    if (g.lambda_seg < 0.0) rd->fail("must be non-negative");
  }
  if (auto rd = get("guidance", "lambda_ret")) {
    g.lambda_ret = rd->real();
    if (g.lambda_ret < 0.0) rd->fail("must be non-negative");
  }
  if (auto rd = get("guidance", "tau_frac")) {
    g.tau_frac = rd->real();
    if (!(g.tau_frac > 0.0 && g.tau_frac < 1.0)) rd->fail("must lie in (0, 1), got " + rd->text());
  }
  if (auto rd = get("guidance", "updates_per_step")) {
    g.updates_per_step = rd->integer();
    if (g.updates_per_step < 1) rd->fail("must be at least 1");
  }
  if (auto rd = get("guidance", "cutoff")) {
    g.cutoff = rd->integer();
    if (g.cutoff > cfg.schedule.steps) rd->fail("must not exceed schedule.steps");
  }
  if (auto rd = get("guidance", "backtracking")) g.backtracking = rd->boolean();
  if (auto rd = get("guidance", "presence_threshold")) g.presence_threshold = rd->real();

  if (auto rd = get("run", "master_seed")) cfg.master_seed = rd->integer();
  {
    const auto rd = require("run", "seeds");
    try {
      cfg.seeds = parse_seed_spec(rd.text(), cfg.master_seed);
    } catch (const ConfigError& e) {
      rd.fail(e.what());
    }
  }
  if (auto rd = get("run", "output")) cfg.output = rd->text();
  if (auto rd = get("run", "snapshot_every")) {
    g.snapshot_every = rd->integer();
    if (g.snapshot_every < 1) rd->fail("must be at least 1");
  }
  if (auto rd = get("run", "jobs")) cfg.jobs = rd->integer();
  if (auto rd = get("run", "kind")) {
    const std::string& k = rd->text();
    if (k == "run") cfg.kind = ExperimentKind::Run;
    else if (k == "compare") cfg.kind = ExperimentKind::Compare;
    else if (k == "ablate") cfg.kind = ExperimentKind::Ablate;
    else if (k == "layout") cfg.kind = ExperimentKind::Layout;
    else rd->fail("expected run, compare, ablate or layout");
  }

  try {
    (void)cfg.pipeline();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  RunConfig cfg = parse_config(in, path.string());
  cfg.source = path;
  return cfg;
}

Pipeline RunConfig::pipeline() const {
  ConceptSet concepts =
      ConceptSet::orthogonal(scene.concepts, scene.channels, scene.embedding_norm, scene.embedding_seed);
  SceneSpec spec = scene.scenes.empty() ? SceneSpec::pathological(std::move(concepts), scene.resolution)
                                        : SceneSpec(std::move(concepts), scene.scenes, scene.resolution);
  auto sched = DiffusionSchedule::linear(schedule.steps, schedule.beta_start, schedule.beta_end,
                                         schedule.guidance_scale);
  const std::size_t width = attention.width == 0 ? scene.channels : attention.width;
  auto weights = attention.projection == ProjectionKind::Tied
                     ? ProjectionWeights::tied(scene.channels, width, attention.scale, attention.seed)
                     : ProjectionWeights::gaussian(scene.channels, width, attention.scale, attention.seed);
  return Pipeline{std::move(spec), std::move(sched), std::move(weights)};
}

std::string RunConfig::echo() const {
  std::ostringstream out;
  out << "[scene]\nconcepts = ";
  for (std::size_t i = 0; i < scene.concepts.size(); ++i) out << (i ? ", " : "") << scene.concepts[i];
  out << "\nchannels = " << scene.channels << "\nembedding_norm = " << format_real(scene.embedding_norm)
      << "\nembedding_seed = " << scene.embedding_seed << "\nresolution = " << scene.resolution << "\n";
  const Pipeline p = pipeline();
  for (const auto& s : p.spec.scenes()) {
    out << "scene = " << format_real(s.weight);
    for (const auto& pl : s.placements) {
      out << " " << pl.concept_name << "@" << format_real(pl.row) << "," << format_real(pl.col) << ","
          << format_real(pl.radius);
    }
    out << "\n";
  }
  out << "\n[schedule]\nsteps = " << schedule.steps << "\nbeta_start = " << format_real(schedule.beta_start)
      << "\nbeta_end = " << format_real(schedule.beta_end)
      << "\nguidance_scale = " << format_real(schedule.guidance_scale) << "\n";
  out << "\n[attention]\nprojection = " << (attention.projection == ProjectionKind::Tied ? "tied" : "gaussian")
      << "\nwidth = " << (attention.width == 0 ? scene.channels : attention.width)
      << "\nscale = " << format_real(attention.scale) << "\nseed = " << attention.seed
      << "\nnormalizer_gradient = " << (guidance.normalizer == NormalizerGradient::Stop ? "stop" : "through")
      << "\n";
  out << "\n[guidance]\nlambda_seg = " << format_real(guidance.lambda_seg)
      << "\nlambda_ret = " << format_real(guidance.lambda_ret) << "\ntau_frac = " << format_real(guidance.tau_frac)
      << "\nupdates_per_step = " << guidance.updates_per_step << "\ncutoff = " << guidance.cutoff
      << "\nbacktracking = " << (guidance.backtracking ? "true" : "false")
      << "\npresence_threshold = " << format_real(guidance.presence_threshold) << "\n";
  out << "\n[run]\nseeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << "\nsnapshot_every = " << guidance.snapshot_every << "\njobs = " << jobs << "\n";
  if (output) out << "output = " << output->string() << "\n";
  if (kind) out << "kind = " << kind_name(*kind) << "\n";
  return out.str();
}

std::string ablation_label(AblationRow row) {
  switch (row) {
    case AblationRow::None: return "none";
    case AblationRow::RetOnly: return "ret_only";
    case AblationRow::SegOnly: return "seg_only";
    case AblationRow::Both: return "both";
  }
  return "?";
}

AblationRow ablation_row(const GuidanceConfig& cfg) {
  const bool seg = cfg.lambda_seg > 0.0, ret = cfg.lambda_ret > 0.0;
  if (seg && ret) return AblationRow::Both;
  if (seg) return AblationRow::SegOnly;
  if (ret) return AblationRow::RetOnly;
  return AblationRow::None;
}

GuidanceConfig ablation_config(const GuidanceConfig& base, AblationRow row) {
  GuidanceConfig g = base;
  const double seg_on = base.lambda_seg > 0.0 ? base.lambda_seg : 1.0;
  const double ret_on = base.lambda_ret > 0.0 ? base.lambda_ret : 1.0;
  g.lambda_seg = (row == AblationRow::SegOnly || row == AblationRow::Both) ? seg_on : 0.0;
  g.lambda_ret = (row == AblationRow::RetOnly || row == AblationRow::Both) ? ret_on : 0.0;
  return g;
}

}  // namespace astar
