#include "astar/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace astar {

SceneSpec::SceneSpec(ConceptSet concepts, std::vector<CandidateScene> scenes, std::size_t resolution)
    : concepts_(std::move(concepts)), scenes_(std::move(scenes)), resolution_(resolution) {
  if (resolution_ == 0) throw std::invalid_argument("scene resolution must be positive");
  if (scenes_.empty()) throw std::invalid_argument("scene spec needs at least one candidate scene");
  double total = 0.0;
  for (std::size_t k = 0; k < scenes_.size(); ++k) {
    const auto& s = scenes_[k];
    if (!(s.weight > 0.0) || !std::isfinite(s.weight)) {
      throw std::invalid_argument("scene " + std::to_string(k) + ": weight must be positive");
    }
    total += s.weight;
    std::set<std::string> seen;
    for (const auto& p : s.placements) {
      if (!concepts_.index_of(p.concept_name)) {
        throw std::invalid_argument("scene " + std::to_string(k) + ": unknown concept '" + p.concept_name + "'");
      }
      if (!seen.insert(p.concept_name).second) {
        throw std::invalid_argument("scene " + std::to_string(k) + ": concept '" + p.concept_name + "' placed twice");
      }
      const double hi = static_cast<double>(resolution_ - 1);
      if (!(p.row >= 0.0 && p.row <= hi && p.col >= 0.0 && p.col <= hi)) {
        throw std::invalid_argument("scene " + std::to_string(k) + ": placement of '" + p.concept_name +
                                    "' lies outside the grid");
      }
      if (!(p.radius > 0.0) || !std::isfinite(p.radius)) {
        throw std::invalid_argument("scene " + std::to_string(k) + ": radius must be positive");
      }
    }
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("scene weights must sum to 1");
  for (auto& s : scenes_) s.weight /= total;

  bool full = false, partial = false;
  for (const auto& s : scenes_) {
    (s.placements.size() == concepts_.size() ? full : partial) = true;
  }
  if (!full) throw std::invalid_argument("scene spec needs a scene containing every concept");
  if (!partial) throw std::invalid_argument("scene spec needs a scene omitting some concept");

  for (const auto& s : scenes_) latents_.push_back(scene_to_latent(s.placements, concepts_, resolution_));
}

SceneSpec SceneSpec::pathological(ConceptSet concepts, std::size_t resolution) {
  if (concepts.size() != 2) throw std::invalid_argument("the default scene spec needs exactly two concepts");
  const double r = static_cast<double>(resolution);
  const double radius = 0.15625 * r;
  const Placement a{concepts[0].name, r / 4.0, r / 4.0, radius};
  const Placement b{concepts[1].name, 3.0 * r / 4.0 - 1.0, 3.0 * r / 4.0 - 1.0, radius};
  std::vector<CandidateScene> scenes{{0.45, {a}}, {0.45, {b}}, {0.10, {a, b}}};
  return SceneSpec(std::move(concepts), std::move(scenes), resolution);
}

Tensor scene_to_latent(const std::vector<Placement>& placements, const ConceptSet& concepts, std::size_t resolution) {
  const std::size_t c = concepts.channels();
  Tensor z(Shape{resolution, resolution, c});
  for (const auto& p : placements) {
    const auto idx = concepts.index_of(p.concept_name);
    if (!idx) throw std::invalid_argument("unknown concept '" + p.concept_name + "'");
    const auto& e = concepts[*idx].embedding;
    const double denom = 2.0 * p.radius * p.radius;
    for (std::size_t i = 0; i < resolution; ++i)
      for (std::size_t j = 0; j < resolution; ++j) {
        const double di = static_cast<double>(i) - p.row, dj = static_cast<double>(j) - p.col;
        const double g = std::exp(-(di * di + dj * dj) / denom);
        for (std::size_t k = 0; k < c; ++k) z.at(i, j, k) += g * e[k];
      }
  }
  return z;
}

DiffusionSchedule DiffusionSchedule::linear(std::size_t steps, double beta_start, double beta_end,
                                            double guidance_scale) {
  if (steps == 0) throw std::invalid_argument("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::invalid_argument("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  if (!(guidance_scale >= 0.0)) throw std::invalid_argument("guidance scale must be non-negative");
  DiffusionSchedule s;
  double abar = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    s.betas.push_back(beta);
    s.alphas.push_back(1.0 - beta);
    abar *= 1.0 - beta;
    s.alpha_bars.push_back(abar);
    s.guidance_steps.push_back(guidance_scale * std::sqrt(1.0 - abar));
  }
  return s;
}

Tensor forward_noise(const Tensor& z0, const DiffusionSchedule& schedule, std::size_t t, const Tensor& noise) {
  if (t < 1 || t > schedule.steps()) throw std::out_of_range("forward_noise: timestep out of range");
  if (z0.shape() != noise.shape()) throw ShapeError("forward_noise: latent and noise shapes differ");
  const double a = std::sqrt(schedule.alpha_bar(t)), b = std::sqrt(1.0 - schedule.alpha_bar(t));
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * noise[i];
  return Tensor(z0.shape(), std::move(out));
}

AnalyticDenoiser::AnalyticDenoiser(const SceneSpec& spec, const DiffusionSchedule& schedule)
    : spec_(&spec), schedule_(&schedule) {}

std::vector<double> AnalyticDenoiser::log_terms(const Tensor& z, std::size_t t) const {
  const auto& latents = spec_->clean_latents();
  if (z.shape() != latents.front().shape()) throw ShapeError("denoiser: latent shape does not match the scene grid");
  const double ab = schedule_->alpha_bar(t), root = std::sqrt(ab), var = 1.0 - ab;
  std::vector<double> terms;
  for (std::size_t k = 0; k < latents.size(); ++k) {
    double sq = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double d = z[i] - root * latents[k][i];
      sq += d * d;
    }
    terms.push_back(std::log(spec_->scenes()[k].weight) - sq / (2.0 * var));
  }
  return terms;
}

std::vector<double> AnalyticDenoiser::responsibilities(const Tensor& z, std::size_t t) const {
  auto terms = log_terms(z, t);
  const double top = *std::max_element(terms.begin(), terms.end());
  double total = 0.0;
  for (double& v : terms) total += (v = std::exp(v - top));
  for (double& v : terms) v /= total;
  return terms;
}

Tensor AnalyticDenoiser::posterior_mean(const Tensor& z, std::size_t t) const {
  const auto w = responsibilities(z, t);
  const auto& latents = spec_->clean_latents();
  std::vector<double> mean(z.size(), 0.0);
  for (std::size_t k = 0; k < latents.size(); ++k)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += w[k] * latents[k][i];
  return Tensor(z.shape(), std::move(mean));
}

Tensor AnalyticDenoiser::eps(const Tensor& z, std::size_t t) const {
  const Tensor mean = posterior_mean(z, t);
  const double ab = schedule_->alpha_bar(t), root = std::sqrt(ab), sd = std::sqrt(1.0 - ab);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (z[i] - root * mean[i]) / sd;
  return Tensor(z.shape(), std::move(out));
}

double AnalyticDenoiser::log_density(const Tensor& z, std::size_t t) const {
  const auto terms = log_terms(z, t);
  const double top = *std::max_element(terms.begin(), terms.end());
  double total = 0.0;
  for (double v : terms) total += std::exp(v - top);
  return top + std::log(total);
}

Tensor Rng::standard_normal(const Shape& shape) {
  std::vector<double> out(numel(shape));
  for (double& v : out) v = normal_(engine_);
  return Tensor(shape, std::move(out));
}

Tensor ancestral_step(const Tensor& z, const Tensor& eps, const DiffusionSchedule& schedule, std::size_t t,
                      Rng* rng) {
  if (t < 1 || t > schedule.steps()) throw std::out_of_range("ancestral_step: timestep out of range");
  if (z.shape() != eps.shape()) throw ShapeError("ancestral_step: latent and noise shapes differ");
  const double beta = schedule.beta(t);
  const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double inv = 1.0 / std::sqrt(schedule.alpha(t));
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (z[i] - coef * eps[i]);
  if (rng != nullptr && t > 1) {
    const Tensor xi = rng->standard_normal(z.shape());
    const double sigma = std::sqrt(beta);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * xi[i];
  }
  return Tensor(z.shape(), std::move(out));
}

bool Presence::all_present() const {
  return std::all_of(present.begin(), present.end(), [](bool b) { return b; });
}

Presence concept_presence(const Tensor& z0, const ConceptSet& concepts, double threshold) {
  if (z0.rank() != 3 || z0.shape()[2] != concepts.channels()) {
    throw ShapeError("concept_presence: latent " + shape_string(z0.shape()) + " does not match " +
                     std::to_string(concepts.channels()) + " channels");
  }
  const std::size_t rows = z0.shape()[0], cols = z0.shape()[1], c = z0.shape()[2];
  Presence out;
  for (std::size_t n = 0; n < concepts.size(); ++n) {
    const auto& e = concepts[n].embedding;
    const double sq = concepts.squared_norm(n);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t br = 0, bc = 0;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < c; ++k) dot += z0.at(i, j, k) * e[k];
        dot /= sq;
        if (dot > best) best = dot, br = i, bc = j;
      }
    out.score.push_back(best);
    out.present.push_back(best >= threshold);
    out.peak_row.push_back(br);
    out.peak_col.push_back(bc);
  }
  return out;
}

}  // namespace astar
