#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "astar/tensor.hpp"

namespace astar {

/// Handle to a value recorded on a Tape.
struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Primitive {
  Variable,
  Constant,
  Add,
  Subtract,
  Multiply,
  Scale,
  Divide,
  Minimum,
  Sum,
  MatMul,
  Exp,
  Softmax,
  Clamp,
  ReduceMin,
  ReduceMax,
  Broadcast,
  Column,
  Reshape,
  Custom,
};

std::string_view primitive_name(Primitive p);

/// Adjoint of a user-defined op: given the output gradient, the input values and
/// the output value, return one gradient per input (same shapes as the inputs).
using CustomAdjoint = std::function<std::vector<Tensor>(const Tensor& grad_out, std::span<const Tensor* const> inputs,
                                                        const Tensor& output)>;

/// Gradients produced by Tape::backward, indexed by node.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

  bool reached(NodeId id) const { return id.index < grads_.size() && grads_[id.index].has_value(); }
  /// Gradient w.r.t. `id`; nodes the root does not depend on get zeros of `like`'s shape.
  Tensor wrt(NodeId id, const Tensor& like) const;
  /// Gradient w.r.t. `id`; throws if the root does not depend on it.
  const Tensor& at(NodeId id) const;

 private:
  std::vector<std::optional<Tensor>> grads_;
};

/// Records primitive ops in execution order and replays them backwards.
///
/// A tape is single-threaded and append-only. Forward values are computed eagerly
/// in record(); backward() visits nodes in exact reverse recording order.
class Tape {
 public:
  struct Params {
    double scalar = 0.0;  // Scale factor, or Clamp lower bound
    double upper = 0.0;   // Clamp upper bound
    std::size_t axis = 0; // Softmax axis, Column index
    Shape shape{};        // Broadcast / Reshape target
  };

  NodeId variable(Tensor value);
  NodeId constant(Tensor value);

  /// Generic entry point. Validates shapes, computes the forward value and appends.
  NodeId record(Primitive op, std::span<const NodeId> inputs, const Params& params);
  NodeId record(Primitive op, std::span<const NodeId> inputs);

  NodeId add(NodeId a, NodeId b);
  NodeId subtract(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId divide(NodeId a, NodeId b);
  NodeId minimum(NodeId a, NodeId b);
  NodeId sum(NodeId a);
  NodeId matmul(NodeId a, NodeId b);
  NodeId exp(NodeId a);
  NodeId softmax(NodeId a, std::size_t axis);
  NodeId clamp(NodeId a, double lo, double hi);
  NodeId reduce_min(NodeId a);
  NodeId reduce_max(NodeId a);
  /// Scalar broadcast to `shape`.
  NodeId broadcast(NodeId scalar, Shape shape);
  /// Column `j` of a rank-2 node, as a rank-1 node.
  NodeId column(NodeId a, std::size_t j);
  NodeId reshape(NodeId a, Shape shape);
  /// Constant copy of `a`'s current value: no gradient flows through it.
  NodeId stop_gradient(NodeId a);

  NodeId custom(std::span<const NodeId> inputs, Tensor value, CustomAdjoint adjoint);

  const Tensor& value(NodeId id) const;
  Primitive primitive(NodeId id) const { return nodes_.at(id.index).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar root seeded with 1.0.
  Gradients backward(NodeId root) const;

 private:
  struct Node {
    Primitive op;
    std::vector<NodeId> inputs;
    Params params;
    Tensor value;
    CustomAdjoint adjoint;
  };

  NodeId append(Node node);
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
};

}  // namespace astar
