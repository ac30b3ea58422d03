#include "astar/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace astar {

namespace {

void require_same_shape(Primitive op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(primitive_name(op)) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <class F>
Tensor elementwise(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
  return Tensor(a.shape(), std::move(out));
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return Tensor(a.shape(), std::move(out));
}

// outer x len x inner decomposition of a shape around `axis`
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Indices attaining the extreme value; gradient is shared equally among them.
std::vector<std::size_t> arg_extremes(const Tensor& a, bool want_max) {
  const auto values = a.data();
  const double best = want_max ? *std::max_element(values.begin(), values.end())
                               : *std::min_element(values.begin(), values.end());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == best) idx.push_back(i);
  return idx;
}

void accumulate(std::optional<Tensor>& slot, const Tensor& g) {
  if (!slot) {
    slot = g;
    return;
  }
  auto dst = slot->data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace

std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::Variable: return "variable";
    case Primitive::Constant: return "constant";
    case Primitive::Add: return "add";
    case Primitive::Subtract: return "subtract";
    case Primitive::Multiply: return "multiply";
    case Primitive::Scale: return "scale";
    case Primitive::Divide: return "divide";
    case Primitive::Minimum: return "minimum";
    case Primitive::Sum: return "sum";
    case Primitive::MatMul: return "matmul";
    case Primitive::Exp: return "exp";
    case Primitive::Softmax: return "softmax";
    case Primitive::Clamp: return "clamp";
    case Primitive::ReduceMin: return "reduce_min";
    case Primitive::ReduceMax: return "reduce_max";
    case Primitive::Broadcast: return "broadcast";
    case Primitive::Column: return "column";
    case Primitive::Reshape: return "reshape";
    case Primitive::Custom: return "custom";
  }
  return "unknown";
}

Tensor Gradients::wrt(NodeId id, const Tensor& like) const {
  if (reached(id)) return *grads_[id.index];
  return Tensor::zeros_like(like);
}

const Tensor& Gradients::at(NodeId id) const {
  if (!reached(id)) throw std::out_of_range("gradient requested for a node the root does not depend on");
  return *grads_[id.index];
}

NodeId Tape::append(Node node) {
  if (!node.value.all_finite()) {
    throw NumericError(std::string(primitive_name(node.op)) + ": produced a non-finite value at node " +
                       std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw std::out_of_range("node id " + std::to_string(id.index) + " not on tape");
  return nodes_[id.index];
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

NodeId Tape::variable(Tensor value) { return append(Node{Primitive::Variable, {}, {}, std::move(value), {}}); }

NodeId Tape::constant(Tensor value) { return append(Node{Primitive::Constant, {}, {}, std::move(value), {}}); }

NodeId Tape::record(Primitive op, std::span<const NodeId> inputs) { return record(op, inputs, Params{}); }

NodeId Tape::record(Primitive op, std::span<const NodeId> inputs, const Params& params) {
  std::vector<const Tensor*> in;
  for (NodeId id : inputs) in.push_back(&node(id).value);

  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw std::invalid_argument(std::string(primitive_name(op)) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(in.size()));
    }
  };

  Tensor out;
  try {
  switch (op) {
    case Primitive::Variable:
    case Primitive::Constant:
    case Primitive::Custom:
      throw std::invalid_argument("record: use variable()/constant()/custom() for this primitive");
    case Primitive::Add:
      need(2);
      require_same_shape(op, *in[0], *in[1]);
      out = elementwise(*in[0], *in[1], [](double x, double y) { return x + y; });
      break;
    case Primitive::Subtract:
      need(2);
      require_same_shape(op, *in[0], *in[1]);
      out = elementwise(*in[0], *in[1], [](double x, double y) { return x - y; });
      break;
    case Primitive::Multiply:
      need(2);
      require_same_shape(op, *in[0], *in[1]);
      out = elementwise(*in[0], *in[1], [](double x, double y) { return x * y; });
      break;
    case Primitive::Divide:
      need(2);
      require_same_shape(op, *in[0], *in[1]);
      for (double d : in[1]->data())
        if (d == 0.0) throw NumericError("division by zero");
      out = elementwise(*in[0], *in[1], [](double x, double y) { return x / y; });
      break;
    case Primitive::Minimum:
      need(2);
      require_same_shape(op, *in[0], *in[1]);
      out = elementwise(*in[0], *in[1], [](double x, double y) { return std::min(x, y); });
      break;
    case Primitive::Scale: {
      need(1);
      const double f = params.scalar;
      out = unary(*in[0], [f](double x) { return f * x; });
      break;
    }
    case Primitive::Sum: {
      need(1);
      double s = 0.0;
      for (double v : in[0]->data()) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case Primitive::MatMul: {
      need(2);
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
      }
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      std::vector<double> c(m * n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = a[i * k + p];
          for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aip * b[p * n + j];
        }
      out = Tensor({m, n}, std::move(c));
      break;
    }
    case Primitive::Exp:
      need(1);
      out = unary(*in[0], [](double x) { return std::exp(x); });
      break;
    case Primitive::Softmax: {
      need(1);
      const Tensor& a = *in[0];
      if (params.axis >= a.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(params.axis) + " out of range for " +
                         shape_string(a.shape()));
      }
      const auto s = split_axis(a.shape(), params.axis);
      std::vector<double> y(a.size());
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in_ = 0; in_ < s.inner; ++in_) {
          const std::size_t base = o * s.len * s.inner + in_;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, a[base + l * s.inner]);
          double z = 0.0;
          for (std::size_t l = 0; l < s.len; ++l) {
            const double e = std::exp(a[base + l * s.inner] - mx);
            y[base + l * s.inner] = e;
            z += e;
          }
          for (std::size_t l = 0; l < s.len; ++l) y[base + l * s.inner] /= z;
        }
      out = Tensor(a.shape(), std::move(y));
      break;
    }
    case Primitive::Clamp: {
      need(1);
      const double lo = params.scalar, hi = params.upper;
      if (!(lo <= hi)) throw std::invalid_argument("clamp: lower bound exceeds upper bound");
      out = unary(*in[0], [lo, hi](double x) { return std::clamp(x, lo, hi); });
      break;
    }
    case Primitive::ReduceMin:
    case Primitive::ReduceMax: {
      need(1);
      if (in[0]->size() == 0) throw ShapeError(std::string(primitive_name(op)) + ": empty input");
      const auto v = in[0]->data();
      out = Tensor::scalar(op == Primitive::ReduceMax ? *std::max_element(v.begin(), v.end())
                                                      : *std::min_element(v.begin(), v.end()));
      break;
    }
    case Primitive::Broadcast:
      need(1);
      if (in[0]->size() != 1) throw ShapeError("broadcast: source " + shape_string(in[0]->shape()) + " is not scalar");
      out = Tensor(params.shape, (*in[0])[0]);
      break;
    case Primitive::Column: {
      need(1);
      const Tensor& a = *in[0];
      if (a.rank() != 2 || params.axis >= a.shape()[1]) {
        throw ShapeError("column: index " + std::to_string(params.axis) + " invalid for " + shape_string(a.shape()));
      }
      const std::size_t m = a.shape()[0], n = a.shape()[1];
      std::vector<double> col(m);
      for (std::size_t i = 0; i < m; ++i) col[i] = a[i * n + params.axis];
      out = Tensor({m}, std::move(col));
      break;
    }
    case Primitive::Reshape:
      need(1);
      out = in[0]->reshaped(params.shape);
      break;
  }
  } catch (const NumericError& e) {
    throw NumericError(std::string(primitive_name(op)) + ": " + e.what());
  }

  return append(Node{op, std::vector<NodeId>(inputs.begin(), inputs.end()), params, std::move(out), {}});
}

NodeId Tape::add(NodeId a, NodeId b) { return record(Primitive::Add, std::vector{a, b}); }
NodeId Tape::subtract(NodeId a, NodeId b) { return record(Primitive::Subtract, std::vector{a, b}); }
NodeId Tape::multiply(NodeId a, NodeId b) { return record(Primitive::Multiply, std::vector{a, b}); }
NodeId Tape::divide(NodeId a, NodeId b) { return record(Primitive::Divide, std::vector{a, b}); }
NodeId Tape::minimum(NodeId a, NodeId b) { return record(Primitive::Minimum, std::vector{a, b}); }
NodeId Tape::matmul(NodeId a, NodeId b) { return record(Primitive::MatMul, std::vector{a, b}); }
NodeId Tape::sum(NodeId a) { return record(Primitive::Sum, std::vector{a}); }
NodeId Tape::exp(NodeId a) { return record(Primitive::Exp, std::vector{a}); }
NodeId Tape::reduce_min(NodeId a) { return record(Primitive::ReduceMin, std::vector{a}); }
NodeId Tape::reduce_max(NodeId a) { return record(Primitive::ReduceMax, std::vector{a}); }

NodeId Tape::scale(NodeId a, double factor) {
  Params p;
  p.scalar = factor;
  return record(Primitive::Scale, std::vector{a}, p);
}

NodeId Tape::softmax(NodeId a, std::size_t axis) {
  Params p;
  p.axis = axis;
  return record(Primitive::Softmax, std::vector{a}, p);
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
  Params p;
  p.scalar = lo;
  p.upper = hi;
  return record(Primitive::Clamp, std::vector{a}, p);
}

NodeId Tape::broadcast(NodeId scalar, Shape shape) {
  Params p;
  p.shape = std::move(shape);
  return record(Primitive::Broadcast, std::vector{scalar}, p);
}

NodeId Tape::column(NodeId a, std::size_t j) {
  Params p;
  p.axis = j;
  return record(Primitive::Column, std::vector{a}, p);
}

NodeId Tape::reshape(NodeId a, Shape shape) {
  Params p;
  p.shape = std::move(shape);
  return record(Primitive::Reshape, std::vector{a}, p);
}

NodeId Tape::stop_gradient(NodeId a) { return constant(value(a)); }

NodeId Tape::custom(std::span<const NodeId> inputs, Tensor value, CustomAdjoint adjoint) {
  for (NodeId id : inputs) (void)node(id);
  return append(Node{Primitive::Custom, std::vector<NodeId>(inputs.begin(), inputs.end()), {}, std::move(value),
                     std::move(adjoint)});
}

Gradients Tape::backward(NodeId root) const {
  const Tensor& rv = node(root).value;
  if (!rv.is_scalar()) throw ShapeError("backward: root has non-scalar shape " + shape_string(rv.shape()));

  std::vector<std::optional<Tensor>> grads(root.index + 1);
  grads[root.index] = Tensor::scalar(1.0);

  for (std::size_t k = root.index + 1; k-- > 0;) {
    if (!grads[k]) continue;
    const Node& n = nodes_[k];
    const Tensor& g = *grads[k];
    auto in_value = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i].index].value; };
    auto push = [&](std::size_t i, const Tensor& t) { accumulate(grads[n.inputs[i].index], t); };

    switch (n.op) {
      case Primitive::Variable:
      case Primitive::Constant:
        break;
      case Primitive::Add:
        push(0, g);
        push(1, g);
        break;
      case Primitive::Subtract:
        push(0, g);
        push(1, unary(g, [](double x) { return -x; }));
        break;
      case Primitive::Multiply:
        push(0, elementwise(g, in_value(1), [](double x, double y) { return x * y; }));
        push(1, elementwise(g, in_value(0), [](double x, double y) { return x * y; }));
        break;
      case Primitive::Scale: {
        const double f = n.params.scalar;
        push(0, unary(g, [f](double x) { return f * x; }));
        break;
      }
      case Primitive::Divide: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        push(0, elementwise(g, b, [](double x, double y) { return x / y; }));
        std::vector<double> db(g.size());
        for (std::size_t i = 0; i < db.size(); ++i) db[i] = -g[i] * a[i] / (b[i] * b[i]);
        push(1, Tensor(b.shape(), std::move(db)));
        break;
      }
      case Primitive::Minimum: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        std::vector<double> da(g.size()), db(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] < b[i]) {
            da[i] = g[i];
          } else if (b[i] < a[i]) {
            db[i] = g[i];
          } else {
            da[i] = db[i] = 0.5 * g[i];
          }
        }
        push(0, Tensor(a.shape(), std::move(da)));
        push(1, Tensor(b.shape(), std::move(db)));
        break;
      }
      case Primitive::Sum:
        push(0, Tensor(in_value(0).shape(), g[0]));
        break;
      case Primitive::MatMul: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        const std::size_t m = a.shape()[0], kk = a.shape()[1], nn = b.shape()[1];
        std::vector<double> da(m * kk, 0.0), dbv(kk * nn, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < kk; ++p) {
            double acc = 0.0;
            const double aip = a[i * kk + p];
            for (std::size_t j = 0; j < nn; ++j) {
              acc += g[i * nn + j] * b[p * nn + j];
              dbv[p * nn + j] += aip * g[i * nn + j];
            }
            da[i * kk + p] = acc;
          }
        push(0, Tensor(a.shape(), std::move(da)));
        push(1, Tensor(b.shape(), std::move(dbv)));
        break;
      }
      case Primitive::Exp:
        push(0, elementwise(g, n.value, [](double x, double y) { return x * y; }));
        break;
      case Primitive::Softmax: {
        const Tensor& y = n.value;
        const auto s = split_axis(y.shape(), n.params.axis);
        std::vector<double> dx(y.size());
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t in_ = 0; in_ < s.inner; ++in_) {
            const std::size_t base = o * s.len * s.inner + in_;
            double dot = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t i = base + l * s.inner;
              dx[i] = y[i] * (g[i] - dot);
            }
          }
        push(0, Tensor(y.shape(), std::move(dx)));
        break;
      }
      case Primitive::Clamp: {
        const Tensor& a = in_value(0);
        const double lo = n.params.scalar, hi = n.params.upper;
        std::vector<double> dx(a.size(), 0.0);
        for (std::size_t i = 0; i < dx.size(); ++i)
          if (a[i] > lo && a[i] < hi) dx[i] = g[i];
        push(0, Tensor(a.shape(), std::move(dx)));
        break;
      }
      case Primitive::ReduceMin:
      case Primitive::ReduceMax: {
        const Tensor& a = in_value(0);
        const auto idx = arg_extremes(a, n.op == Primitive::ReduceMax);
        Tensor dx = Tensor::zeros_like(a);
        const double share = g[0] / static_cast<double>(idx.size());
        for (std::size_t i : idx) dx[i] = share;
        push(0, dx);
        break;
      }
      case Primitive::Broadcast: {
        double s = 0.0;
        for (double v : g.data()) s += v;
        push(0, Tensor(in_value(0).shape(), s));
        break;
      }
      case Primitive::Column: {
        const Tensor& a = in_value(0);
        Tensor dx = Tensor::zeros_like(a);
        const std::size_t m = a.shape()[0], cols = a.shape()[1];
        for (std::size_t i = 0; i < m; ++i) dx[i * cols + n.params.axis] = g[i];
        push(0, dx);
        break;
      }
      case Primitive::Reshape:
        push(0, g.reshaped(in_value(0).shape()));
        break;
      case Primitive::Custom: {
        std::vector<const Tensor*> ins;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) ins.push_back(&in_value(i));
        auto dins = n.adjoint(g, ins, n.value);
        if (dins.size() != ins.size()) throw std::logic_error("custom adjoint returned wrong number of gradients");
        for (std::size_t i = 0; i < dins.size(); ++i) {
          if (dins[i].shape() != ins[i]->shape()) throw ShapeError("custom adjoint: gradient shape mismatch");
          push(i, dins[i]);
        }
        break;
      }
    }
  }

  for (const auto& gr : grads)
    if (gr && !gr->all_finite()) throw NumericError("backward: non-finite gradient");
  return Gradients(std::move(grads));
}

}  // namespace astar
