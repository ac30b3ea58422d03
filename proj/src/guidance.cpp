#include "astar/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace astar {

void GuidanceConfig::validate(std::size_t steps) const {
  if (!(lambda_seg >= 0.0) || !(lambda_ret >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  if (!(tau_frac > 0.0 && tau_frac < 1.0)) throw std::invalid_argument("tau_frac must lie in (0, 1)");
  if (updates_per_step < 1) throw std::invalid_argument("updates_per_step must be at least 1");
  if (cutoff > steps) throw std::invalid_argument("cutoff must not exceed the step count");
  if (snapshot_every < 1) throw std::invalid_argument("snapshot interval must be at least 1");
}

namespace {

std::span<const BinaryMask> as_span(const std::vector<BinaryMask>* masks) {
  return masks == nullptr ? std::span<const BinaryMask>{} : std::span<const BinaryMask>(*masks);
}

struct Recorded {
  Tape tape;
  NodeId latent;
  RecordedLoss loss;
};

void record_loss(Recorded& rec, const Tensor& latent, std::span<const BinaryMask> masks, const Pipeline& pipeline,
                 const GuidanceConfig& cfg) {
  const auto& shape = latent.shape();
  rec.latent = rec.tape.variable(latent);
  const NodeId flat = rec.tape.reshape(rec.latent, Shape{shape[0] * shape[1], shape[2]});
  const NodeId attn = record_attention(rec.tape, flat, pipeline.spec.concepts(), pipeline.weights);
  const auto slices = record_normalized_slices(rec.tape, attn, cfg.normalizer);
  rec.loss = record_total_loss(rec.tape, slices, cfg.lambda_ret > 0.0 ? masks : std::span<const BinaryMask>{},
                               cfg.lambda_seg, cfg.lambda_ret);
}

Tensor descend(const Tensor& z, const Tensor& g, double step, std::size_t t) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = z[i] - step * g[i];
    if (!std::isfinite(out[i])) throw GuidanceError("step " + std::to_string(t) + ": latent update is not finite");
  }
  return Tensor(z.shape(), std::move(out));
}

std::vector<BinaryMask> derive_masks(const AttentionMaps& maps, const Pipeline& pipeline, double tau_frac,
                                     std::size_t t) {
  std::vector<BinaryMask> out;
  for (std::size_t n = 0; n < maps.count(); ++n) {
    BinaryMask m = binarize_bbox(maps.slice(n), maps.resolution, tau_frac);
    m.concept_name = pipeline.spec.concepts()[n].name;
    m.source = MaskSource::Derived;
    m.timestep = static_cast<int>(t);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

AttentionMaps attention_of(const Tensor& latent, const Pipeline& pipeline) {
  return normalize_maps(compute_attention(latent, pipeline.spec.concepts(), pipeline.weights));
}

LossGradient loss_gradient(const Tensor& latent, std::span<const BinaryMask> masks, const Pipeline& pipeline,
                           const GuidanceConfig& cfg) {
  Recorded rec;
  record_loss(rec, latent, masks, pipeline, cfg);
  const Gradients grads = rec.tape.backward(rec.loss.root);
  return {rec.loss.report, grads.wrt(rec.latent, latent)};
}

LossReport evaluate_loss(const Tensor& latent, std::span<const BinaryMask> masks, const Pipeline& pipeline,
                         const GuidanceConfig& cfg) {
  Recorded rec;
  record_loss(rec, latent, masks, pipeline, cfg);
  return rec.loss.report;
}

StepResult astar_step(const Tensor& latent, std::size_t t, const std::vector<BinaryMask>* prev_masks,
                      double step_size, const Pipeline& pipeline, const GuidanceConfig& cfg) {
  if (t < 1) throw std::invalid_argument("astar_step: timestep must be at least 1");
  const auto masks = as_span(prev_masks);
  StepResult out;
  out.latent = latent;

  if (!cfg.enabled() || step_size == 0.0) {
    out.loss = evaluate_loss(latent, masks, pipeline, cfg);
  } else {
    for (std::size_t u = 0; u < cfg.updates_per_step; ++u) {
      LossGradient lg;
      try {
        lg = loss_gradient(out.latent, masks, pipeline, cfg);
      } catch (const NumericError& e) {
        throw GuidanceError("step " + std::to_string(t) + ": non-finite gradient (" + e.what() + ")");
      }
      if (!lg.gradient.all_finite()) throw GuidanceError("step " + std::to_string(t) + ": non-finite gradient");
      if (u == 0) out.loss = lg.report;

      double step = step_size;
      Tensor next = descend(out.latent, lg.gradient, step, t);
      if (cfg.backtracking) {
        std::size_t halvings = 0;
        while (evaluate_loss(next, masks, pipeline, cfg).total > lg.report.total) {
          if (++halvings > cfg.max_halvings) {
            step = 0.0;
            next = out.latent;
            break;
          }
          step *= 0.5;
          next = descend(out.latent, lg.gradient, step, t);
        }
      }
      out.latent = std::move(next);
      out.step_size = step;
      out.updated = true;
    }
  }

  out.maps = attention_of(out.latent, pipeline);
  if (cfg.mask_source == MaskSource::UserLayout) {
    out.masks = cfg.layout_masks;
    for (auto& m : out.masks) m.timestep = static_cast<int>(t);
  } else {
    out.masks = derive_masks(out.maps, pipeline, cfg.tau_frac, t);
  }
  return out;
}

std::vector<std::size_t> snapshot_steps(std::size_t steps, std::size_t every) {
  std::vector<std::size_t> out;
  for (std::size_t t = steps; t >= 1; --t) {
    if (t == steps || t == 1 || (every > 0 && t % every == 0)) out.push_back(t);
  }
  return out;
}

RunTrace run(std::uint64_t seed, const Pipeline& pipeline, const GuidanceConfig& cfg) {
  const auto& sched = pipeline.schedule;
  const std::size_t T = sched.steps();
  cfg.validate(T);
  if (cfg.mask_source == MaskSource::UserLayout && cfg.layout_masks.size() != pipeline.spec.concepts().size()) {
    throw std::invalid_argument("layout mode needs one mask per concept");
  }
  const std::size_t r = pipeline.spec.resolution();
  const AnalyticDenoiser denoiser(pipeline.spec, sched);
  const auto snaps = snapshot_steps(T, cfg.snapshot_every);

  RunTrace trace;
  trace.seed = seed;
  Rng rng(seed);
  Tensor z = rng.standard_normal(Shape{r, r, pipeline.spec.channels()});

  std::optional<std::vector<BinaryMask>> carried;
  std::optional<std::size_t> carried_step;
  if (cfg.mask_source == MaskSource::UserLayout) carried = cfg.layout_masks;

  for (std::size_t t = T; t >= 1; --t) {
    const bool guided = t > cfg.cutoff && cfg.enabled();
    const double step = guided ? sched.guidance_step(t) : 0.0;
    StepResult res = astar_step(z, t, carried ? &*carried : nullptr, step, pipeline, cfg);

    StepRecord rec;
    rec.t = t;
    rec.loss = std::move(res.loss);
    rec.consumed_mask_step = carried_step;
    rec.masks = res.masks;
    rec.step_size = res.updated ? res.step_size : 0.0;
    rec.guided = res.updated;
    trace.steps.push_back(std::move(rec));
    if (std::find(snaps.begin(), snaps.end(), t) != snaps.end()) trace.snapshots.push_back({t, res.maps});

    carried = std::move(res.masks);
    carried_step = t;
    const Tensor eps = denoiser.eps(res.latent, t);
    z = ancestral_step(res.latent, eps, sched, t, &rng);
  }
  trace.final_latent = z;
  trace.presence = concept_presence(z, pipeline.spec.concepts(), cfg.presence_threshold);
  return trace;
}

}  // namespace astar
