#include "pamda/diffcore/graph.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "pamda/errors.hpp"

namespace pamda::diffcore {

namespace {

constexpr OpKind kPrimitives[] = {
    OpKind::Add,     OpKind::Subtract, OpKind::Multiply,    OpKind::MatMul,
    OpKind::Scale,   OpKind::Sum,      OpKind::Mean,        OpKind::Exp,
    OpKind::Log,     OpKind::Tanh,     OpKind::Softmax,     OpKind::SquaredNorm,
    OpKind::Concat,  OpKind::SliceRows, OpKind::Dot,        OpKind::Norm,
};

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ContractViolation("operands belong to different graphs");
  return a.graph();
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (!a.same_shape(b)) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + a.shape_string() +
                            " vs " + b.shape_string());
  }
}

Var unary(Var a, OpKind kind, Tensor out) {
  Graph::Node n;
  n.kind = kind;
  n.inputs = {a.id()};
  n.value = std::move(out);
  return a.graph().push(std::move(n));
}

Var binary(Var a, Var b, OpKind kind, Tensor out) {
  Graph& g = same_graph(a, b);
  Graph::Node n;
  n.kind = kind;
  n.inputs = {a.id(), b.id()};
  n.value = std::move(out);
  return g.push(std::move(n));
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out = x;
  for (double& v : out.data()) v = f(v);
  return out;
}

void accumulate(std::optional<Tensor>& slot, const Tensor& delta) {
  if (!slot) {
    slot = delta;
    return;
  }
  auto dst = slot->data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Subtract: return "subtract";
    case OpKind::Multiply: return "multiply";
    case OpKind::MatMul: return "matmul";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Tanh: return "tanh";
    case OpKind::Softmax: return "softmax";
    case OpKind::SquaredNorm: return "squared_norm";
    case OpKind::Concat: return "concat";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::Dot: return "dot";
    case OpKind::Norm: return "norm";
  }
  return "unknown";
}

std::vector<std::string_view> primitive_set() {
  std::vector<std::string_view> names;
  for (OpKind k : kPrimitives) names.push_back(op_name(k));
  return names;
}

const Tensor& Var::value() const { return graph_->node(id_).value; }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.is_parameter = true;
  return push(std::move(n));
}

std::vector<NodeId> Graph::parameter_ids() const {
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_parameter) ids.push_back(i);
  }
  return ids;
}

Var Graph::push(Node node) {
  node.needs_grad = node.is_parameter;
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) throw ContractViolation("input node id out of range");
    node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.same_shape(y)) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return binary(a, b, OpKind::Add, std::move(out));
  }
  if (y.rows() == 1 && y.cols() == x.cols()) {
    Tensor out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += y[c];
    }
    return binary(a, b, OpKind::Add, std::move(out));
  }
  require_same_shape(x, y, "add");
  return {};
}

Var subtract(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "subtract");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return binary(a, b, OpKind::Subtract, std::move(out));
}

Var multiply(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "multiply");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return binary(a, b, OpKind::Multiply, std::move(out));
}

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) {
    throw ContractViolation("matmul: inner dimensions differ " + x.shape_string() + " * " +
                            y.shape_string());
  }
  Tensor out(x.rows(), y.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xik = x(i, k);
      for (std::size_t j = 0; j < y.cols(); ++j) out(i, j) += xik * y(k, j);
    }
  }
  return binary(a, b, OpKind::MatMul, std::move(out));
}

Var scale(Var a, double factor) {
  Graph::Node n;
  n.kind = OpKind::Scale;
  n.inputs = {a.id()};
  n.value = map(a.value(), [factor](double v) { return v * factor; });
  n.scalar = factor;
  return a.graph().push(std::move(n));
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return unary(a, OpKind::Sum, Tensor::scalar(s));
}

Var mean(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return unary(a, OpKind::Mean, Tensor::scalar(s / static_cast<double>(a.value().size())));
}

Var exp(Var a) {
  return unary(a, OpKind::Exp, map(a.value(), [](double v) { return std::exp(v); }));
}

Var log(Var a) {
  return unary(a, OpKind::Log, map(a.value(), [](double v) { return std::log(v); }));
}

Var tanh(Var a) {
  return unary(a, OpKind::Tanh, map(a.value(), [](double v) { return std::tanh(v); }));
}

Var softmax_rows(Var a) {
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return unary(a, OpKind::Softmax, std::move(out));
}

Var squared_norm(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return unary(a, OpKind::SquaredNorm, Tensor::scalar(s));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no operands");
  Graph& g = parts.front().graph();
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw ContractViolation("operands belong to different graphs");
    if (p.value().cols() != cols) {
      throw ContractViolation("concat_rows: column mismatch " + p.value().shape_string());
    }
    rows += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  Graph::Node n;
  n.kind = OpKind::Concat;
  for (const Var& p : parts) {
    auto src = p.value().data();
    data.insert(data.end(), src.begin(), src.end());
    n.inputs.push_back(p.id());
  }
  n.value = Tensor(rows, cols, std::move(data));
  return g.push(std::move(n));
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (begin >= end || end > x.rows()) {
    throw ContractViolation("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                            std::to_string(end) + ") of " + x.shape_string());
  }
  auto src = x.data().subspan(begin * x.cols(), (end - begin) * x.cols());
  Graph::Node n;
  n.kind = OpKind::SliceRows;
  n.inputs = {a.id()};
  n.value = Tensor(end - begin, x.cols(), std::vector<double>(src.begin(), src.end()));
  n.begin = begin;
  n.end = end;
  return a.graph().push(std::move(n));
}

Var dot(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return binary(a, b, OpKind::Dot, Tensor::scalar(s));
}

Var norm(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return unary(a, OpKind::Norm, Tensor::scalar(std::sqrt(s)));
}

Gradients backward(const Graph& graph, Var loss) {
  if (&loss.graph() != &graph) throw ContractViolation("loss node belongs to another graph");
  const Graph::Node& root = graph.node(loss.id());
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ContractViolation("backward: loss must be scalar, got " + root.value.shape_string());
  }
  for (NodeId i = 0; i <= loss.id(); ++i) {
    if (!graph.node(i).value.all_finite()) {
      throw NumericFault("non-finite value at node " + std::to_string(i) + " (" +
                         std::string(op_name(graph.node(i).kind)) + ")");
    }
  }

  std::vector<std::optional<Tensor>> grads(loss.id() + 1);
  grads[loss.id()] = Tensor::scalar(1.0);

  for (NodeId id = loss.id() + 1; id-- > 0;) {
    const Graph::Node& n = graph.node(id);
    if (!grads[id] || !n.needs_grad || n.kind == OpKind::Leaf) continue;
    const Tensor& g = *grads[id];
    const Tensor& out = n.value;

    auto input = [&](std::size_t k) -> const Graph::Node& { return graph.node(n.inputs[k]); };
    auto wants = [&](std::size_t k) { return input(k).needs_grad; };
    auto send = [&](std::size_t k, const Tensor& delta) {
      accumulate(grads[n.inputs[k]], delta);
    };

    switch (n.kind) {
      case OpKind::Leaf:
        break;
      case OpKind::Add: {
        if (wants(0)) send(0, g);
        if (wants(1)) {
          const Tensor& b = input(1).value;
          if (b.same_shape(g)) {
            send(1, g);
          } else {
            Tensor db(1, g.cols());
            for (std::size_t r = 0; r < g.rows(); ++r) {
              for (std::size_t c = 0; c < g.cols(); ++c) db[c] += g(r, c);
            }
            send(1, db);
          }
        }
        break;
      }
      case OpKind::Subtract: {
        if (wants(0)) send(0, g);
        if (wants(1)) send(1, map(g, [](double v) { return -v; }));
        break;
      }
      case OpKind::Multiply: {
        const Tensor& x = input(0).value;
        const Tensor& y = input(1).value;
        if (wants(0)) {
          Tensor d = g;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i];
          send(0, d);
        }
        if (wants(1)) {
          Tensor d = g;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= x[i];
          send(1, d);
        }
        break;
      }
      case OpKind::MatMul: {
        const Tensor& x = input(0).value;
        const Tensor& y = input(1).value;
        if (wants(0)) {
          // dX = G * Y^T
          Tensor d(x.rows(), x.cols());
          for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t k = 0; k < x.cols(); ++k) {
              double s = 0.0;
              for (std::size_t j = 0; j < y.cols(); ++j) s += g(i, j) * y(k, j);
              d(i, k) = s;
            }
          }
          send(0, d);
        }
        if (wants(1)) {
          // dY = X^T * G
          Tensor d(y.rows(), y.cols());
          for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t k = 0; k < x.cols(); ++k) {
              const double xik = x(i, k);
              for (std::size_t j = 0; j < y.cols(); ++j) d(k, j) += xik * g(i, j);
            }
          }
          send(1, d);
        }
        break;
      }
      case OpKind::Scale: {
        const double f = n.scalar;
        send(0, map(g, [f](double v) { return v * f; }));
        break;
      }
      case OpKind::Sum: {
        const Tensor& x = input(0).value;
        send(0, Tensor(x.rows(), x.cols(), g.item()));
        break;
      }
      case OpKind::Mean: {
        const Tensor& x = input(0).value;
        send(0, Tensor(x.rows(), x.cols(), g.item() / static_cast<double>(x.size())));
        break;
      }
      case OpKind::Exp: {
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= out[i];
        send(0, d);
        break;
      }
      case OpKind::Log: {
        const Tensor& x = input(0).value;
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
        send(0, d);
        break;
      }
      case OpKind::Tanh: {
        Tensor d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - out[i] * out[i];
        send(0, d);
        break;
      }
      case OpKind::Softmax: {
        Tensor d = g;
        for (std::size_t r = 0; r < out.rows(); ++r) {
          auto y = out.row(r);
          auto gr = g.row(r);
          double inner = 0.0;
          for (std::size_t c = 0; c < y.size(); ++c) inner += gr[c] * y[c];
          auto dr = d.row(r);
          for (std::size_t c = 0; c < y.size(); ++c) dr[c] = y[c] * (gr[c] - inner);
        }
        send(0, d);
        break;
      }
      case OpKind::SquaredNorm: {
        const double s = 2.0 * g.item();
        send(0, map(input(0).value, [s](double v) { return v * s; }));
        break;
      }
      case OpKind::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& part = input(k).value;
          if (wants(k)) {
            auto src = g.data().subspan(offset, part.size());
            send(k, Tensor(part.rows(), part.cols(), std::vector<double>(src.begin(), src.end())));
          }
          offset += part.size();
        }
        break;
      }
      case OpKind::SliceRows: {
        const Tensor& x = input(0).value;
        Tensor d(x.rows(), x.cols());
        auto dst = d.data().subspan(n.begin * x.cols(), g.size());
        std::copy(g.data().begin(), g.data().end(), dst.begin());
        send(0, d);
        break;
      }
      case OpKind::Dot: {
        const double s = g.item();
        if (wants(0)) send(0, map(input(1).value, [s](double v) { return v * s; }));
        if (wants(1)) send(1, map(input(0).value, [s](double v) { return v * s; }));
        break;
      }
      case OpKind::Norm: {
        const double r = out.item();
        const double s = r > 0.0 ? g.item() / r : 0.0;
        send(0, map(input(0).value, [s](double v) { return v * s; }));
        break;
      }
    }
  }

  Gradients result;
  for (NodeId id : graph.parameter_ids()) {
    if (id > loss.id()) continue;
    const Tensor& v = graph.node(id).value;
    Tensor grad = grads[id] ? std::move(*grads[id]) : Tensor(v.rows(), v.cols());
    if (!grad.all_finite()) {
      throw NumericFault("non-finite gradient at parameter node " + std::to_string(id));
    }
    result.emplace(id, std::move(grad));
  }
  return result;
}

}  // namespace pamda::diffcore
