#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "astar/tape.hpp"
#include "astar/tensor.hpp"

namespace astar {

struct Concept {
  std::string name;
  std::vector<double> embedding;
};

/// Ordered, validated list of concepts sharing one embedding width.
class ConceptSet {
 public:
  ConceptSet() = default;
  explicit ConceptSet(std::vector<Concept> concepts);

  /// `count` orthogonal embeddings of norm `norm` in `channels` dimensions, drawn from `seed`.
  static ConceptSet orthogonal(const std::vector<std::string>& names, std::size_t channels, double norm,
                               std::uint64_t seed);

  std::size_t size() const noexcept { return concepts_.size(); }
  std::size_t channels() const noexcept { return concepts_.empty() ? 0 : concepts_.front().embedding.size(); }
  const Concept& operator[](std::size_t i) const { return concepts_[i]; }
  const std::vector<Concept>& items() const noexcept { return concepts_; }
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::vector<std::string> names() const;

  /// N x c matrix of embeddings.
  Tensor embedding_matrix() const;
  double squared_norm(std::size_t i) const;

 private:
  std::vector<Concept> concepts_;
};

/// Query/key projections W_q, W_k (both c x d).
struct ProjectionWeights {
  Tensor query;
  Tensor key;

  ProjectionWeights() = default;
  ProjectionWeights(Tensor query, Tensor key);

  std::size_t channels() const { return query.shape()[0]; }
  std::size_t width() const { return query.shape()[1]; }

  /// Tied projections W_q = W_k = sqrt(scale) * P with P a seeded matrix of orthonormal
  /// columns (width <= channels). Logits are then scale * <P^T z, P^T e> / sqrt(d).
  static ProjectionWeights tied(std::size_t channels, std::size_t width, double scale, std::uint64_t seed);
  /// Independent Gaussian projections with entries N(0, scale / channels).
  static ProjectionWeights gaussian(std::size_t channels, std::size_t width, double scale, std::uint64_t seed);
};

/// Per-concept r x r maps stored as an (r, r, N) tensor.
struct AttentionMaps {
  Tensor maps;
  std::size_t resolution = 0;
  bool normalized = false;

  std::size_t count() const { return maps.shape()[2]; }
  /// Concept n's map, flattened row-major to r*r values.
  std::vector<double> slice(std::size_t n) const;
};

/// How gradients treat the min and max of the per-slice rescale.
enum class NormalizerGradient {
  Through,  // min/max are selections; gradient reaches the attaining pixels
  Stop,     // min/max are treated as constants
};

/// Records softmax attention of an (r*r, c) latent node against the concepts. Output
/// node has shape (r*r, N); each row sums to one.
NodeId record_attention(Tape& tape, NodeId latent, const ConceptSet& concepts, const ProjectionWeights& weights);

/// Records the per-slice min-max rescale of an (r*r, N) attention node. Returns one
/// (r*r) node per concept. Constant slices become all-zero constants.
std::vector<NodeId> record_normalized_slices(Tape& tape, NodeId attention, NormalizerGradient mode);

/// Unnormalized maps of an (r, r, c) latent.
AttentionMaps compute_attention(const Tensor& latent, const ConceptSet& concepts, const ProjectionWeights& weights);

/// Per-concept min-max rescale to [0, 1]; constant slices map to zeros.
AttentionMaps normalize_maps(const AttentionMaps& maps);

}  // namespace astar
