#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "astar/tape.hpp"

namespace astar {

/// Builds a scalar-valued graph on `tape` from the input node `x`.
using GraphFn = std::function<NodeId(Tape& tape, NodeId x)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Compares the tape's reverse-mode gradient of `f` at `x` with central differences.
///
/// Per coordinate the error is |analytic - numeric| / max(|analytic|, 1e-8); the result
/// carries the maximum. Coordinates for which `skip(i)` is true are evaluated but excluded
/// from the maximum (used to step around min/max ties and clamp boundaries).
GradCheckResult finite_diff_check(const GraphFn& f, const Tensor& x, double h,
                                  const std::function<bool(std::size_t)>& skip = {});

}  // namespace astar
