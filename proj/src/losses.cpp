#include "astar/losses.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "astar/attention.hpp"
#include "astar/masks.hpp"

namespace astar {

namespace {

void check_weights(double lambda_seg, double lambda_ret) {
  if (!(lambda_seg >= 0.0)) throw std::invalid_argument("lambda_seg must be non-negative");
  if (!(lambda_ret >= 0.0)) throw std::invalid_argument("lambda_ret must be non-negative");
}

void check_masks(std::size_t concepts, std::size_t pixels, std::span<const BinaryMask> masks) {
  if (masks.size() != concepts) {
    throw std::invalid_argument("retention: " + std::to_string(masks.size()) + " masks for " +
                                std::to_string(concepts) + " concepts");
  }
  for (const auto& m : masks)
    if (m.cells.size() != pixels) throw std::invalid_argument("retention: mask resolution differs from maps");
}

}  // namespace

SoftIou soft_iou(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("soft_iou: maps differ in size");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0) throw std::invalid_argument("soft_iou: maps must be non-negative");
    num += std::min(a[i], b[i]);
    den += a[i] + b[i];
  }
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}

LossReport segregation_loss(const AttentionMaps& maps) {
  LossReport report;
  const std::size_t n = maps.count();
  if (n < 2) {
    report.single_concept = true;
    return report;
  }
  std::vector<std::vector<double>> slices;
  for (std::size_t k = 0; k < n; ++k) slices.push_back(maps.slice(k));
  for (std::size_t m = 1; m < n; ++m)
    for (std::size_t k = 0; k < m; ++k) {
      const SoftIou s = soft_iou(slices[k], slices[m]);
      report.per_pair.push_back({k, m, s.value, s.degenerate});
      report.seg_total += s.value;
    }
  report.total = report.seg_total;
  return report;
}

LossReport retention_loss(const AttentionMaps& maps, std::span<const BinaryMask> masks) {
  LossReport report;
  const std::size_t n = maps.count();
  check_masks(n, maps.resolution * maps.resolution, masks);
  for (std::size_t k = 0; k < n; ++k) {
    if (masks[k].empty()) {
      report.per_concept.push_back({k, 0.0, true});
      continue;
    }
    const auto slice = maps.slice(k);
    const auto mask = masks[k].as_values();
    const double term = 1.0 - soft_iou(slice, mask).value;
    report.per_concept.push_back({k, term, false});
    report.ret_total += term;
  }
  report.total = report.ret_total;
  return report;
}

LossReport total_loss(const LossReport& seg, const LossReport& ret, double lambda_seg, double lambda_ret) {
  check_weights(lambda_seg, lambda_ret);
  LossReport out;
  out.seg_total = seg.seg_total;
  out.per_pair = seg.per_pair;
  out.single_concept = seg.single_concept;
  out.ret_total = ret.ret_total;
  out.per_concept = ret.per_concept;
  out.retention_absent = ret.retention_absent;
  out.total = lambda_seg * out.seg_total + lambda_ret * out.ret_total;
  return out;
}

NodeId record_soft_iou(Tape& tape, NodeId a, NodeId b) {
  const NodeId num = tape.sum(tape.minimum(a, b));
  const NodeId den = tape.sum(tape.add(a, b));
  if (tape.value(den).item() == 0.0) return tape.constant(Tensor::scalar(0.0));
  return tape.divide(num, den);
}

RecordedLoss record_total_loss(Tape& tape, std::span<const NodeId> slices, std::span<const BinaryMask> masks,
                               double lambda_seg, double lambda_ret) {
  check_weights(lambda_seg, lambda_ret);
  const std::size_t n = slices.size();
  RecordedLoss out;
  LossReport& report = out.report;

  std::vector<NodeId> seg_terms;
  if (n < 2) {
    report.single_concept = true;
  } else {
    for (std::size_t m = 1; m < n; ++m)
      for (std::size_t k = 0; k < m; ++k) {
        const NodeId s = record_soft_iou(tape, slices[k], slices[m]);
        const double v = tape.value(s).item();
        const bool degenerate = tape.primitive(s) == Primitive::Constant;
        report.per_pair.push_back({k, m, v, degenerate});
        report.seg_total += v;
        seg_terms.push_back(s);
      }
  }

  std::vector<NodeId> ret_terms;
  if (masks.empty()) {
    report.retention_absent = true;
  } else {
    check_masks(n, tape.value(slices[0]).size(), masks);
    const NodeId one = tape.constant(Tensor::scalar(1.0));
    for (std::size_t k = 0; k < n; ++k) {
      if (masks[k].empty()) {
        report.per_concept.push_back({k, 0.0, true});
        continue;
      }
      const NodeId mask = tape.constant(Tensor({masks[k].cells.size()}, masks[k].as_values()));
      const NodeId term = tape.subtract(one, record_soft_iou(tape, slices[k], mask));
      const double v = tape.value(term).item();
      report.per_concept.push_back({k, v, false});
      report.ret_total += v;
      ret_terms.push_back(term);
    }
  }
  report.total = lambda_seg * report.seg_total + lambda_ret * report.ret_total;

  // Sum terms in the same order the report does so root value == report.total exactly
  // whenever both weights are 1.
  NodeId root = tape.constant(Tensor::scalar(0.0));
  auto add_weighted = [&](const std::vector<NodeId>& terms, double w) {
    if (w == 0.0 || terms.empty()) return;
    NodeId acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    root = tape.add(root, w == 1.0 ? acc : tape.scale(acc, w));
  };
  add_weighted(seg_terms, lambda_seg);
  add_weighted(ret_terms, lambda_ret);
  out.root = root;
  return out;
}

}  // namespace astar
