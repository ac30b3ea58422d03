#include <doctest.h>

#include <cmath>
#include <limits>

#include "astar/guidance.hpp"
#include "fixtures.hpp"

using namespace astar;

namespace {

Pipeline small_pipeline(double guidance_scale = 50.0, std::size_t steps = 12) {
  auto cs = ConceptSet::orthogonal({"cat", "dog"}, 4, 0.6, 3);
  return Pipeline{SceneSpec::pathological(std::move(cs), 8), DiffusionSchedule::linear(steps, 1e-4, 0.05, guidance_scale),
                  ProjectionWeights::tied(4, 4, 3.0, 5)};
}

GuidanceConfig off() {
  GuidanceConfig g;
  g.lambda_seg = g.lambda_ret = 0.0;
  return g;
}

}  // namespace

TEST_CASE("zero step size leaves the latent untouched but still yields masks") {
  const auto p = small_pipeline();
  const Tensor z = fixtures::uniform({8, 8, 4}, -1, 1, 1);
  const auto res = astar_step(z, 5, nullptr, 0.0, p, GuidanceConfig{});
  CHECK(res.latent == z);
  CHECK(res.masks.size() == 2);
  CHECK_FALSE(res.masks[0].empty());
  CHECK(res.masks[0].timestep == 5);
}

TEST_CASE("zero weights leave the latent untouched") {
  const auto p = small_pipeline();
  const Tensor z = fixtures::uniform({8, 8, 4}, -1, 1, 2);
  CHECK(astar_step(z, 5, nullptr, 10.0, p, off()).latent == z);
}

TEST_CASE("zero-weight guidance reproduces the unguided sampler bit for bit") {
  const auto p = small_pipeline();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto guided = run(seed, p, off());
    // Unguided reference written directly against the toy model.
    const AnalyticDenoiser den(p.spec, p.schedule);
    Rng rng(seed);
    Tensor z = rng.standard_normal({8, 8, 4});
    for (std::size_t t = p.schedule.steps(); t >= 1; --t) z = ancestral_step(z, den.eps(z, t), p.schedule, t, &rng);
    CHECK(guided.final_latent == z);
  }
}

TEST_CASE("one small step lowers the segregation loss") {
  const auto p = small_pipeline();
  GuidanceConfig cfg;
  cfg.lambda_ret = 0.0;
  cfg.normalizer = NormalizerGradient::Through;
  const Tensor z = fixtures::uniform({8, 8, 4}, -0.5, 0.5, 4);
  const double before = evaluate_loss(z, {}, p, cfg).seg_total;
  double step = 1.0;
  double after = before;
  for (int i = 0; i < 40 && after >= before; ++i, step *= 0.5) {
    after = evaluate_loss(astar_step(z, 6, nullptr, step, p, cfg).latent, {}, p, cfg).seg_total;
  }
  CHECK(after < before);
}

TEST_CASE("backtracking guarantees local descent at every guided step") {
  const auto p = small_pipeline(400.0);
  GuidanceConfig cfg;
  cfg.backtracking = true;
  cfg.normalizer = NormalizerGradient::Through;
  Rng rng(9);
  Tensor z = rng.standard_normal({8, 8, 4});
  std::optional<std::vector<BinaryMask>> masks;
  for (std::size_t t = p.schedule.steps(); t >= 1; --t) {
    const auto res = astar_step(z, t, masks ? &*masks : nullptr, p.schedule.guidance_step(t), p, cfg);
    const auto span = masks ? std::span<const BinaryMask>(*masks) : std::span<const BinaryMask>{};
    CHECK(evaluate_loss(res.latent, span, p, cfg).total <= res.loss.total);
    masks = res.masks;
    z = res.latent;
  }
}

TEST_CASE("trace structure: one report per step and the mask chain") {
  const auto p = small_pipeline();
  GuidanceConfig cfg;
  cfg.snapshot_every = 5;
  const auto tr = run(11, p, cfg);
  REQUIRE(tr.steps.size() == 12);
  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    const auto& s = tr.steps[i];
    CHECK(s.t == 12 - i);
    if (i == 0) {
      CHECK_FALSE(s.consumed_mask_step.has_value());
      CHECK(s.loss.retention_absent);
    } else {
      CHECK(s.consumed_mask_step == s.t + 1);
      CHECK(s.loss.per_concept.size() == 2);
    }
    for (const auto& m : s.masks) CHECK(m.timestep == static_cast<int>(s.t));
  }
  std::vector<std::size_t> snap_t;
  for (const auto& s : tr.snapshots) snap_t.push_back(s.t);
  CHECK(snap_t == std::vector<std::size_t>{12, 10, 5, 1});
  CHECK(snapshot_steps(50, 5) == std::vector<std::size_t>{50, 45, 40, 35, 30, 25, 20, 15, 10, 5, 1});
}

TEST_CASE("runs are deterministic per seed") {
  const auto p = small_pipeline();
  const auto a = run(5, p, GuidanceConfig{}), b = run(5, p, GuidanceConfig{});
  CHECK(a.final_latent == b.final_latent);
  CHECK(a.steps.back().loss.total == b.steps.back().loss.total);
}

TEST_CASE("cutoff stops guidance at and below the cutoff step") {
  const auto p = small_pipeline();
  GuidanceConfig cfg;
  cfg.cutoff = 4;
  const auto tr = run(6, p, cfg);
  for (const auto& s : tr.steps) CHECK(s.guided == (s.t > 4));
}

TEST_CASE("layout masks are held fixed and used from the first step") {
  const auto p = small_pipeline();
  GuidanceConfig cfg;
  cfg.mask_source = MaskSource::UserLayout;
  cfg.layout_masks = {BinaryMask::filled(8, Rect{0, 0, 3, 3}), BinaryMask::filled(8, Rect{4, 4, 7, 7})};
  const auto tr = run(3, p, cfg);
  for (const auto& s : tr.steps) {
    CHECK_FALSE(s.loss.retention_absent);
    CHECK(s.masks[0].cells == cfg.layout_masks[0].cells);
  }
}

TEST_CASE("a non-finite update aborts with the step named") {
  const auto p = small_pipeline();
  const Tensor z = fixtures::uniform({8, 8, 4}, -1, 1, 7);
  try {
    astar_step(z, 7, nullptr, std::numeric_limits<double>::infinity(), p, GuidanceConfig{});
    FAIL("expected an error");
  } catch (const GuidanceError& e) {
    CHECK(std::string(e.what()).find("step 7") != std::string::npos);
  }
}
