#include "astar/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

namespace astar {

namespace {

// Columns of a seeded Gaussian matrix, orthonormalized by modified Gram-Schmidt.
std::vector<std::vector<double>> orthonormal_columns(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (cols > rows) throw std::invalid_argument("orthonormal_columns: more columns than rows");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (basis.size() < cols) {
    std::vector<double> v(rows);
    for (double& x : v) x = normal(rng);
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < rows; ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < rows; ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

bool is_constant_range(double lo, double hi) {
  return !(hi - lo > std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(hi)));
}

}  // namespace

ConceptSet::ConceptSet(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
  if (concepts_.empty()) throw std::invalid_argument("concept set must contain at least one concept");
  std::set<std::string> seen;
  const std::size_t c = concepts_.front().embedding.size();
  for (const auto& k : concepts_) {
    if (k.name.empty()) throw std::invalid_argument("concept name must not be empty");
    if (!seen.insert(k.name).second) throw std::invalid_argument("duplicate concept name '" + k.name + "'");
    if (k.embedding.size() != c || c == 0) {
      throw std::invalid_argument("concept '" + k.name + "' embedding has " + std::to_string(k.embedding.size()) +
                                  " channels, expected " + std::to_string(c));
    }
    double sq = 0.0;
    for (double v : k.embedding) {
      if (!std::isfinite(v)) throw std::invalid_argument("concept '" + k.name + "' embedding is not finite");
      sq += v * v;
    }
    if (sq == 0.0) throw std::invalid_argument("concept '" + k.name + "' embedding is zero");
  }
}

ConceptSet ConceptSet::orthogonal(const std::vector<std::string>& names, std::size_t channels, double norm,
                                  std::uint64_t seed) {
  if (names.size() > channels) {
    throw std::invalid_argument("cannot fit " + std::to_string(names.size()) + " orthogonal embeddings into " +
                                std::to_string(channels) + " channels");
  }
  if (!(norm > 0.0)) throw std::invalid_argument("embedding norm must be positive");
  const auto basis = orthonormal_columns(channels, names.size(), seed);
  std::vector<Concept> out;
  for (std::size_t n = 0; n < names.size(); ++n) {
    Concept k{names[n], basis[n]};
    for (double& v : k.embedding) v *= norm;
    out.push_back(std::move(k));
  }
  return ConceptSet(std::move(out));
}

std::optional<std::size_t> ConceptSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < concepts_.size(); ++i)
    if (concepts_[i].name == name) return i;
  return std::nullopt;
}

std::vector<std::string> ConceptSet::names() const {
  std::vector<std::string> out;
  for (const auto& k : concepts_) out.push_back(k.name);
  return out;
}

Tensor ConceptSet::embedding_matrix() const {
  const std::size_t n = size(), c = channels();
  std::vector<double> data;
  data.reserve(n * c);
  for (const auto& k : concepts_) data.insert(data.end(), k.embedding.begin(), k.embedding.end());
  return Tensor({n, c}, std::move(data));
}

double ConceptSet::squared_norm(std::size_t i) const {
  double s = 0.0;
  for (double v : concepts_.at(i).embedding) s += v * v;
  return s;
}

ProjectionWeights::ProjectionWeights(Tensor q, Tensor k) : query(std::move(q)), key(std::move(k)) {
  if (query.rank() != 2 || query.shape() != key.shape() || query.shape()[1] == 0) {
    throw std::invalid_argument("projection weights must be two c x d matrices with d > 0, got " +
                                shape_string(query.shape()) + " and " + shape_string(key.shape()));
  }
}

ProjectionWeights ProjectionWeights::tied(std::size_t channels, std::size_t width, double scale,
                                          std::uint64_t seed) {
  if (!(scale > 0.0)) throw std::invalid_argument("projection scale must be positive");
  const auto cols = orthonormal_columns(channels, width, seed);
  const double gain = std::sqrt(scale);
  Tensor w({channels, width});
  for (std::size_t j = 0; j < width; ++j)
    for (std::size_t i = 0; i < channels; ++i) w.at(i, j) = gain * cols[j][i];
  return ProjectionWeights(w, w);
}

ProjectionWeights ProjectionWeights::gaussian(std::size_t channels, std::size_t width, double scale,
                                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(scale / static_cast<double>(channels)));
  Tensor q({channels, width}), k({channels, width});
  for (double& v : q.data()) v = normal(rng);
  for (double& v : k.data()) v = normal(rng);
  return ProjectionWeights(std::move(q), std::move(k));
}

std::vector<double> AttentionMaps::slice(std::size_t n) const {
  const std::size_t pixels = resolution * resolution, count_ = count();
  std::vector<double> out(pixels);
  for (std::size_t p = 0; p < pixels; ++p) out[p] = maps[p * count_ + n];
  return out;
}

NodeId record_attention(Tape& tape, NodeId latent, const ConceptSet& concepts, const ProjectionWeights& weights) {
  const Tensor& z = tape.value(latent);
  if (z.rank() != 2 || z.shape()[1] != concepts.channels() || weights.channels() != concepts.channels()) {
    throw ShapeError("attention: latent " + shape_string(z.shape()) + " has channel count mismatched with " +
                     std::to_string(concepts.channels()) + "-channel embeddings and " +
                     shape_string(weights.query.shape()) + " projections");
  }
  // Keys do not depend on the latent, so they enter as a constant d x N matrix already
  // divided by sqrt(d).
  const Tensor keys = [&] {
    const Tensor e = concepts.embedding_matrix();
    const std::size_t n = concepts.size(), c = concepts.channels(), d = weights.width();
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor kt({d, n});
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < c; ++i) acc += e.at(t, i) * weights.key.at(i, j);
        kt.at(j, t) = acc * inv;
      }
    return kt;
  }();

  const NodeId queries = tape.matmul(latent, tape.constant(weights.query));
  const NodeId logits = tape.matmul(queries, tape.constant(keys));
  return tape.softmax(logits, 1);
}

std::vector<NodeId> record_normalized_slices(Tape& tape, NodeId attention, NormalizerGradient mode) {
  const Tensor& a = tape.value(attention);
  if (a.rank() != 2) throw ShapeError("normalize: expected (pixels, N) attention, got " + shape_string(a.shape()));
  const std::size_t pixels = a.shape()[0], n = a.shape()[1];
  std::vector<NodeId> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const NodeId col = tape.column(attention, k);
    NodeId lo = tape.reduce_min(col);
    NodeId hi = tape.reduce_max(col);
    if (is_constant_range(tape.value(lo).item(), tape.value(hi).item())) {
      out.push_back(tape.constant(Tensor({pixels}, 0.0)));
      continue;
    }
    if (mode == NormalizerGradient::Stop) {
      lo = tape.stop_gradient(lo);
      hi = tape.stop_gradient(hi);
    }
    const NodeId shifted = tape.subtract(col, tape.broadcast(lo, {pixels}));
    const NodeId range = tape.broadcast(tape.subtract(hi, lo), {pixels});
    out.push_back(tape.divide(shifted, range));
  }
  return out;
}

AttentionMaps compute_attention(const Tensor& latent, const ConceptSet& concepts, const ProjectionWeights& weights) {
  if (latent.rank() != 3 || latent.shape()[0] != latent.shape()[1]) {
    throw ShapeError("attention: latent must be r x r x c, got " + shape_string(latent.shape()));
  }
  const std::size_t r = latent.shape()[0], c = latent.shape()[2];
  Tape tape;
  const NodeId z = tape.constant(latent.reshaped({r * r, c}));
  const NodeId a = record_attention(tape, z, concepts, weights);
  return AttentionMaps{tape.value(a).reshaped({r, r, concepts.size()}), r, false};
}

AttentionMaps normalize_maps(const AttentionMaps& maps) {
  const std::size_t r = maps.resolution, n = maps.count(), pixels = r * r;
  Tensor out({r, r, n});
  for (std::size_t k = 0; k < n; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t p = 0; p < pixels; ++p) {
      lo = std::min(lo, maps.maps[p * n + k]);
      hi = std::max(hi, maps.maps[p * n + k]);
    }
    if (is_constant_range(lo, hi)) continue;
    for (std::size_t p = 0; p < pixels; ++p) out[p * n + k] = (maps.maps[p * n + k] - lo) / (hi - lo);
  }
  return AttentionMaps{std::move(out), r, true};
}

}  // namespace astar
