#include "astar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace astar {

namespace {

double evaluate(const GraphFn& f, const Tensor& x) {
  Tape tape;
  const NodeId root = f(tape, tape.variable(x));
  return tape.value(root).item();
}

}  // namespace

GradCheckResult finite_diff_check(const GraphFn& f, const Tensor& x, double h,
                                  const std::function<bool(std::size_t)>& skip) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step h must be positive");

  Tape tape;
  const NodeId input = tape.variable(x);
  const NodeId root = f(tape, input);
  const Tensor grad = tape.backward(root).wrt(input, x);

  GradCheckResult result;
  result.analytic.assign(grad.data().begin(), grad.data().end());
  result.numeric.resize(x.size());

  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe);
    probe[i] = orig - h;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    result.numeric[i] = (up - down) / (2.0 * h);

    if (skip && skip(i)) continue;
    const double a = result.analytic[i];
    const double err = std::abs(a - result.numeric[i]) / std::max(std::abs(a), 1e-8);
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace astar
