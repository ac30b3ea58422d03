// Shared helpers for the unit tests.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "astar/tensor.hpp"

namespace fixtures {

inline astar::Tensor uniform(astar::Shape shape, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(astar::numel(shape));
  for (double& x : v) x = u(rng);
  return astar::Tensor(std::move(shape), std::move(v));
}

inline std::vector<double> uniform_values(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Min-max rescale of a plain vector, written independently of the library.
inline std::vector<double> rescale(std::vector<double> v) {
  double lo = v[0], hi = v[0];
  for (double x : v) lo = std::min(lo, x), hi = std::max(hi, x);
  for (double& x : v) x = hi > lo ? (x - lo) / (hi - lo) : 0.0;
  return v;
}

// Direct soft IoU: sum of minima over sum of both.
inline double soft_iou_direct(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += a[i] < b[i] ? a[i] : b[i];
    den += a[i] + b[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace fixtures
