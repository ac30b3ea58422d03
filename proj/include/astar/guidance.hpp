#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "astar/attention.hpp"
#include "astar/losses.hpp"
#include "astar/masks.hpp"
#include "astar/toymodel.hpp"

namespace astar {

struct GuidanceConfig {
  double lambda_seg = 1.0;
  double lambda_ret = 1.0;
  double tau_frac = 0.5;
  std::size_t updates_per_step = 1;
  std::size_t cutoff = 0;  // guide only while t > cutoff
  MaskSource mask_source = MaskSource::Derived;
  std::vector<BinaryMask> layout_masks;  // used when mask_source == UserLayout
  NormalizerGradient normalizer = NormalizerGradient::Stop;
  bool backtracking = false;
  std::size_t max_halvings = 40;
  std::size_t snapshot_every = 5;
  double presence_threshold = 0.5;

  /// True when any loss term carries weight.
  bool enabled() const { return lambda_seg > 0.0 || lambda_ret > 0.0; }
  void validate(std::size_t steps) const;
};

/// Everything a run needs besides the seed.
struct Pipeline {
  SceneSpec spec;
  DiffusionSchedule schedule;
  ProjectionWeights weights;
};

class GuidanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepResult {
  Tensor latent;                   // z_t after the updates
  std::vector<BinaryMask> masks;   // masks handed to step t-1
  LossReport loss;                 // loss on the pre-update latent
  AttentionMaps maps;              // normalized maps of the post-update latent
  double step_size = 0.0;          // last step size actually applied
  bool updated = false;
};

/// Normalized attention maps of an (r, r, c) latent.
AttentionMaps attention_of(const Tensor& latent, const Pipeline& pipeline);

/// Loss and its gradient w.r.t. an (r, r, c) latent. `masks` empty omits retention.
struct LossGradient {
  LossReport report;
  Tensor gradient;
};
LossGradient loss_gradient(const Tensor& latent, std::span<const BinaryMask> masks, const Pipeline& pipeline,
                           const GuidanceConfig& cfg);

/// Value of the loss alone.
LossReport evaluate_loss(const Tensor& latent, std::span<const BinaryMask> masks, const Pipeline& pipeline,
                         const GuidanceConfig& cfg);

/// One guided step at timestep t with step size `step_size`. `prev_masks` is null only
/// on the first step of a derived-mask run.
StepResult astar_step(const Tensor& latent, std::size_t t, const std::vector<BinaryMask>* prev_masks,
                      double step_size, const Pipeline& pipeline, const GuidanceConfig& cfg);

struct StepRecord {
  std::size_t t = 0;
  LossReport loss;
  std::optional<std::size_t> consumed_mask_step;  // step that produced the masks used here
  std::vector<BinaryMask> masks;                  // produced at this step
  double step_size = 0.0;
  bool guided = false;
};

struct Snapshot {
  std::size_t t = 0;
  AttentionMaps maps;
};

struct RunTrace {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;  // t = T down to 1
  std::vector<Snapshot> snapshots;
  Tensor final_latent;
  Presence presence;
};

/// Steps T, 1, and every multiple of `every` in between, in decreasing order.
std::vector<std::size_t> snapshot_steps(std::size_t steps, std::size_t every);

/// Full sampling loop from z_T ~ N(0, I) drawn from `seed`.
RunTrace run(std::uint64_t seed, const Pipeline& pipeline, const GuidanceConfig& cfg);

}  // namespace astar
