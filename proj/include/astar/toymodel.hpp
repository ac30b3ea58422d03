#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "astar/attention.hpp"
#include "astar/tensor.hpp"

namespace astar {

/// Isotropic Gaussian bump of one concept, peak value 1.
struct Placement {
  std::string concept_name;
  double row = 0.0;
  double col = 0.0;
  double radius = 1.0;
};

struct CandidateScene {
  double weight = 0.0;
  std::vector<Placement> placements;
};

/// Data prior of the toy model: a weighted mixture of clean scenes.
class SceneSpec {
 public:
  SceneSpec(ConceptSet concepts, std::vector<CandidateScene> scenes, std::size_t resolution);

  /// Two-concept default: each concept alone (0.45 each) or both together (0.10).
  /// Concept 0 sits at (r/4, r/4), concept 1 at (3r/4 - 1, 3r/4 - 1), radius 0.15625 r.
  static SceneSpec pathological(ConceptSet concepts, std::size_t resolution);

  const ConceptSet& concepts() const noexcept { return concepts_; }
  const std::vector<CandidateScene>& scenes() const noexcept { return scenes_; }
  std::size_t resolution() const noexcept { return resolution_; }
  std::size_t channels() const noexcept { return concepts_.channels(); }
  /// Clean latents of each scene, (r, r, c).
  const std::vector<Tensor>& clean_latents() const noexcept { return latents_; }

 private:
  ConceptSet concepts_;
  std::vector<CandidateScene> scenes_;
  std::size_t resolution_;
  std::vector<Tensor> latents_;
};

/// z0[i,j,:] = sum over placements of bump(i,j) * embedding.
Tensor scene_to_latent(const std::vector<Placement>& placements, const ConceptSet& concepts, std::size_t resolution);

/// Timesteps are 1-based: index t in [1, T].
struct DiffusionSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  std::vector<double> guidance_steps;

  /// Linear betas; guidance step at t is guidance_scale * sqrt(1 - alpha_bar_t).
  static DiffusionSchedule linear(std::size_t steps, double beta_start, double beta_end, double guidance_scale);

  std::size_t steps() const noexcept { return betas.size(); }
  double beta(std::size_t t) const { return betas.at(t - 1); }
  double alpha(std::size_t t) const { return alphas.at(t - 1); }
  double alpha_bar(std::size_t t) const { return alpha_bars.at(t - 1); }
  double guidance_step(std::size_t t) const { return guidance_steps.at(t - 1); }
};

/// sqrt(abar_t) z0 + sqrt(1 - abar_t) noise.
Tensor forward_noise(const Tensor& z0, const DiffusionSchedule& schedule, std::size_t t, const Tensor& noise);

/// Exact posterior-mean noise predictor for the mixture prior.
class AnalyticDenoiser {
 public:
  AnalyticDenoiser(const SceneSpec& spec, const DiffusionSchedule& schedule);

  /// Posterior scene probabilities given z_t, computed in log space.
  std::vector<double> responsibilities(const Tensor& z, std::size_t t) const;
  Tensor posterior_mean(const Tensor& z, std::size_t t) const;
  Tensor eps(const Tensor& z, std::size_t t) const;
  /// log p(z_t) up to an additive constant independent of z.
  double log_density(const Tensor& z, std::size_t t) const;

 private:
  std::vector<double> log_terms(const Tensor& z, std::size_t t) const;

  const SceneSpec* spec_;
  const DiffusionSchedule* schedule_;
};

/// Seeded generator owned by one run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Tensor standard_normal(const Shape& shape);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// One reverse step. With `rng` null (or t == 1) no noise is added.
Tensor ancestral_step(const Tensor& z, const Tensor& eps, const DiffusionSchedule& schedule, std::size_t t,
                      Rng* rng);

struct Presence {
  std::vector<double> score;
  std::vector<bool> present;
  std::vector<std::size_t> peak_row;
  std::vector<std::size_t> peak_col;

  bool all_present() const;
};

/// Per concept: max over the grid of <z0[i,j,:], e> / |e|^2, present when >= threshold.
Presence concept_presence(const Tensor& z0, const ConceptSet& concepts, double threshold = 0.5);

}  // namespace astar
