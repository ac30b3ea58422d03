#include <doctest.h>

#include <bitset>
#include <random>

#include "astar/attention.hpp"
#include "astar/gradcheck.hpp"
#include "astar/losses.hpp"
#include "astar/masks.hpp"
#include "fixtures.hpp"

using namespace astar;

namespace {

AttentionMaps maps_from(const std::vector<std::vector<double>>& slices, std::size_t r) {
  const std::size_t n = slices.size();
  Tensor t({r, r, n});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t p = 0; p < r * r; ++p) t[p * n + k] = slices[k][p];
  return AttentionMaps{std::move(t), r, true};
}

BinaryMask mask_from(std::vector<std::uint8_t> cells, std::size_t r) {
  BinaryMask m;
  m.cells = std::move(cells);
  m.resolution = r;
  return m;
}

}  // namespace

TEST_CASE("soft IoU examples") {
  const std::vector<double> a{0.2, 0.8}, b{0.6, 0.4};
  CHECK(soft_iou(a, b).value == doctest::Approx(0.3).epsilon(1e-15));
  const std::vector<double> p{1, 0, 0.3, 0}, q{0, 0.7, 0, 0.2};
  CHECK(soft_iou(p, q).value == 0.0);
  CHECK(soft_iou(p, p).value == 0.5);
  const std::vector<double> zero(4, 0.0);
  const auto degenerate = soft_iou(zero, zero);
  CHECK(degenerate.value == 0.0);
  CHECK(degenerate.degenerate);
  const std::vector<double> neg{-0.1, 0.2};
  CHECK_THROWS(soft_iou(neg, a));
}

TEST_CASE("soft IoU equals the set formula on every pair of 3x3 binary maps") {
  std::size_t mismatches = 0;
  std::vector<double> a(9), b(9);
  for (unsigned x = 0; x < 512; ++x)
    for (unsigned y = 0; y < 512; ++y) {
      for (int i = 0; i < 9; ++i) a[i] = (x >> i) & 1u, b[i] = (y >> i) & 1u;
      const std::size_t inter = std::bitset<9>(x & y).count();
      const std::size_t total = std::bitset<9>(x).count() + std::bitset<9>(y).count();
      const double expected = total == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(total);
      if (soft_iou(a, b).value != expected) ++mismatches;
    }
  CHECK(mismatches == 0);
}

TEST_CASE("soft IoU properties on random maps") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = fixtures::uniform_values(16, 0, 1, rng), b = fixtures::uniform_values(16, 0, 1, rng);
    const double v = soft_iou(a, b).value;
    CHECK(v >= 0.0);
    CHECK(v <= 0.5);
    CHECK(soft_iou(b, a).value == v);
    std::vector<double> a3 = a, b3 = b;
    for (double& x : a3) x *= 3.0;
    for (double& x : b3) x *= 3.0;
    CHECK(soft_iou(a3, b3).value == doctest::Approx(v).epsilon(1e-13));
    CHECK(v == doctest::Approx(fixtures::soft_iou_direct(a, b)).epsilon(1e-14));

    // Moving mass of b off a's support never raises the overlap.
    std::vector<double> a_sparse = a, b_moved = b;
    for (std::size_t i = 8; i < 16; ++i) a_sparse[i] = 0.0;
    const double before = soft_iou(a_sparse, b_moved).value;
    std::uniform_int_distribution<std::size_t> from(0, 7), to(8, 15);
    const std::size_t i = from(rng), j = to(rng);
    const double amount = b_moved[i] * 0.5;
    b_moved[i] -= amount;
    b_moved[j] += amount;
    CHECK(soft_iou(a_sparse, b_moved).value <= before + 1e-15);
  }
}

TEST_CASE("segregation loss examples") {
  const std::vector<double> s{0.1, 0.9, 0.4, 0.0};
  const auto same = segregation_loss(maps_from({s, s, s}, 2));
  CHECK(same.seg_total == 1.5);
  CHECK(same.per_pair.size() == 3);

  const auto disjoint = segregation_loss(maps_from({{1, 0, 1, 0}, {0, 1, 0, 1}}, 2));
  CHECK(disjoint.seg_total == 0.0);

  const auto example = segregation_loss(maps_from({{0.2, 0.8, 0, 0}, {0.6, 0.4, 0, 0}}, 2));
  CHECK(example.seg_total == doctest::Approx(0.3));

  const auto single = segregation_loss(maps_from({s}, 2));
  CHECK(single.single_concept);
  CHECK(single.seg_total == 0.0);
}

TEST_CASE("segregation loss counts each pair once, lower index first") {
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> slices;
  for (int k = 0; k < 4; ++k) slices.push_back(fixtures::uniform_values(9, 0, 1, rng));
  const auto rep = segregation_loss(maps_from(slices, 3));
  REQUIRE(rep.per_pair.size() == 6);
  double expected = 0.0;
  for (const auto& p : rep.per_pair) {
    CHECK(p.first < p.second);
    expected += fixtures::soft_iou_direct(slices[p.first], slices[p.second]);
  }
  CHECK(rep.seg_total == doctest::Approx(expected).epsilon(1e-14));

  std::vector<std::vector<double>> reversed(slices.rbegin(), slices.rend());
  CHECK(segregation_loss(maps_from(reversed, 3)).seg_total == doctest::Approx(rep.seg_total).epsilon(1e-14));
}

TEST_CASE("retention loss examples") {
  const std::vector<std::uint8_t> box{1, 1, 0, 0};
  const std::vector<BinaryMask> masks{mask_from(box, 2)};
  CHECK(retention_loss(maps_from({{1, 1, 0, 0}}, 2), masks).ret_total == 0.5);
  CHECK(retention_loss(maps_from({{0, 0, 0, 0}}, 2), masks).ret_total == 1.0);
  CHECK(retention_loss(maps_from({{0.5, 0.5, 0, 0}}, 2), masks).ret_total == doctest::Approx(2.0 / 3.0));

  const std::vector<BinaryMask> empty{mask_from({0, 0, 0, 0}, 2)};
  const auto skipped = retention_loss(maps_from({{0.5, 0.5, 0, 0}}, 2), empty);
  CHECK(skipped.ret_total == 0.0);
  CHECK(skipped.per_concept.at(0).skipped);
}

TEST_CASE("total loss weighting") {
  LossReport seg, ret;
  seg.seg_total = 1.5;
  CHECK(total_loss(seg, ret, 1, 1).total == 1.5);
  seg.seg_total = 0.3;
  ret.ret_total = 0.5;
  CHECK(total_loss(seg, ret, 1, 1).total == doctest::Approx(0.8));
  CHECK(total_loss(seg, ret, 2, 0.5).total == doctest::Approx(0.85));
  CHECK_THROWS_AS(total_loss(seg, ret, -1, 1), std::invalid_argument);
}

TEST_CASE("tape loss agrees with the value-level losses") {
  std::mt19937_64 rng(91);
  std::vector<std::vector<double>> slices;
  for (int k = 0; k < 3; ++k) slices.push_back(fixtures::rescale(fixtures::uniform_values(16, 0, 1, rng)));
  std::vector<BinaryMask> masks;
  for (int k = 0; k < 3; ++k) masks.push_back(BinaryMask::filled(4, Rect{std::size_t(k), 0, 3, std::size_t(k + 1)}));
  const auto maps = maps_from(slices, 4);

  Tape t;
  std::vector<NodeId> nodes;
  for (const auto& s : slices) nodes.push_back(t.variable(Tensor({16}, s)));
  const auto rec = record_total_loss(t, nodes, masks, 1.0, 1.0);
  const auto expected = total_loss(segregation_loss(maps), retention_loss(maps, masks), 1.0, 1.0);
  CHECK(rec.report.total == doctest::Approx(expected.total).epsilon(1e-14));
  CHECK(t.value(rec.root).item() == rec.report.total);
}

TEST_CASE("loss bounds over randomized maps") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = fixtures::rescale(fixtures::uniform_values(16, 0, 1, rng));
    const auto b = fixtures::rescale(fixtures::uniform_values(16, 0, 1, rng));
    const auto maps = maps_from({a, b}, 4);
    std::vector<std::uint8_t> cells(16);
    std::bernoulli_distribution coin(0.4);
    for (auto& c : cells) c = coin(rng);
    cells[5] = 1;
    const std::vector<BinaryMask> masks{mask_from(cells, 4), mask_from(cells, 4)};
    const auto seg = segregation_loss(maps);
    CHECK(seg.per_pair[0].value >= 0.0);
    CHECK(seg.per_pair[0].value <= 0.5);
    for (const auto& c : retention_loss(maps, masks).per_concept) {
      CHECK(c.value >= 0.5);
      CHECK(c.value <= 1.0);
    }
  }
}

TEST_CASE("loss gradients w.r.t. raw map entries") {
  std::mt19937_64 rng(17);
  const Tensor x({3, 16}, fixtures::uniform_values(48, 0.05, 1, rng));
  const std::vector<BinaryMask> masks{BinaryMask::filled(4, Rect{0, 0, 1, 1}), BinaryMask::filled(4, Rect{1, 1, 3, 3}),
                                      BinaryMask::filled(4, Rect{2, 0, 3, 2})};
  const auto near_tie = [&](std::size_t i) {
    const std::size_t k = i / 16, p = i % 16;
    for (std::size_t m = 0; m < 3; ++m)
      if (m != k && std::abs(x[i] - x[m * 16 + p]) < 1e-6) return true;
    return std::abs(x[i] - 1.0) < 1e-6;
  };
  for (auto [ls, lr] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {0.7, 2.0}}) {
    const auto f = [&, ls = ls, lr = lr](Tape& t, NodeId v) {
      // Row k of the 3 x 16 input is concept k's map.
      std::vector<NodeId> slices;
      for (std::size_t k = 0; k < 3; ++k) {
        Tensor row({1, 3});
        row.at(0, k) = 1.0;
        slices.push_back(t.reshape(t.matmul(t.constant(row), v), {16}));
      }
      return record_total_loss(t, slices, masks, ls, lr).root;
    };
    CHECK(finite_diff_check(f, x, 1e-5, near_tie).max_rel_error <= 1e-4);
  }
}
