#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "astar/guidance.hpp"

namespace astar {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Run, Compare, Ablate, Layout };

enum class ProjectionKind { Tied, Gaussian };

struct SceneSettings {
  std::vector<std::string> concepts;
  std::size_t channels = 8;
  double embedding_norm = 1.0;
  std::uint64_t embedding_seed = 7;
  std::size_t resolution = 16;
  std::vector<CandidateScene> scenes;  // empty: the two-concept default
};

struct ScheduleSettings {
  std::size_t steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.05;
  double guidance_scale = 0.2;
};

struct AttentionSettings {
  ProjectionKind projection = ProjectionKind::Tied;
  std::size_t width = 0;  // 0: same as channels
  double scale = 1.0;
  std::uint64_t seed = 11;
};

struct RunConfig {
  SceneSettings scene;
  ScheduleSettings schedule;
  AttentionSettings attention;
  GuidanceConfig guidance;
  std::vector<std::uint64_t> seeds;
  std::uint64_t master_seed = 0;
  std::optional<std::filesystem::path> output;
  std::size_t jobs = 0;
  std::optional<ExperimentKind> kind;
  std::filesystem::path source;  // config file, for relative paths

  Pipeline pipeline() const;
  /// Resolved configuration in the same key = value format.
  std::string echo() const;
};

RunConfig parse_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Seeds from a "--seeds" style value: a count ("64") or a comma list ("3,5,9").
std::vector<std::uint64_t> parse_seed_spec(const std::string& text, std::uint64_t master_seed);

std::string kind_name(ExperimentKind kind);

/// The four rows of the loss ablation grid.
enum class AblationRow { None, RetOnly, SegOnly, Both };

std::string ablation_label(AblationRow row);
/// Which row a guidance setting belongs to, from which weights are non-zero.
AblationRow ablation_row(const GuidanceConfig& cfg);
/// Guidance settings for one row. Enabled terms keep the configured weight, or 1 when
/// the configured weight is zero.
GuidanceConfig ablation_config(const GuidanceConfig& base, AblationRow row);

}  // namespace astar
