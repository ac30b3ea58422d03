#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "astar/tape.hpp"

namespace astar {

struct AttentionMaps;
struct BinaryMask;

struct SoftIou {
  double value = 0.0;
  bool degenerate = false;  // both maps all zero
};

/// sum_ij min(a, b) / sum_ij (a + b), in [0, 0.5]. Two all-zero maps give 0, flagged.
SoftIou soft_iou(std::span<const double> a, std::span<const double> b);

struct PairLoss {
  std::size_t first = 0;   // lower concept index
  std::size_t second = 0;  // higher concept index
  double value = 0.0;
  bool degenerate = false;
};

struct ConceptLoss {
  std::size_t concept_index = 0;
  double value = 0.0;
  bool skipped = false;  // empty mask, term not counted
};

/// Segregation and retention terms of one loss evaluation plus their weighted total.
struct LossReport {
  double seg_total = 0.0;
  double ret_total = 0.0;
  double total = 0.0;
  std::vector<PairLoss> per_pair;
  std::vector<ConceptLoss> per_concept;
  bool single_concept = false;   // fewer than two concepts, segregation is zero
  bool retention_absent = false; // no masks supplied for this evaluation
};

/// Sum of soft IoU over all unordered concept pairs (each pair once).
LossReport segregation_loss(const AttentionMaps& maps);

/// Sum over concepts of 1 - soft_iou(map, mask); concepts with empty masks are skipped.
LossReport retention_loss(const AttentionMaps& maps, std::span<const BinaryMask> masks);

/// Weighted combination; throws std::invalid_argument on negative weights.
LossReport total_loss(const LossReport& seg, const LossReport& ret, double lambda_seg, double lambda_ret);

/// Tape versions. `slices` are the normalized per-concept nodes (each r*r).
struct RecordedLoss {
  NodeId root;
  LossReport report;
};

NodeId record_soft_iou(Tape& tape, NodeId a, NodeId b);

/// Records lambda_seg * L_seg + lambda_ret * L_ret. With `masks` empty the retention term
/// is omitted; a zero weight drops its term from the graph but the report still carries
/// the unweighted value.
RecordedLoss record_total_loss(Tape& tape, std::span<const NodeId> slices, std::span<const BinaryMask> masks,
                               double lambda_seg, double lambda_ret);

}  // namespace astar
