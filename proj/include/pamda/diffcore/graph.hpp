#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "pamda/diffcore/tensor.hpp"

namespace pamda::diffcore {

enum class OpKind {
  Leaf,
  Add,
  Subtract,
  Multiply,
  MatMul,
  Scale,
  Sum,
  Mean,
  Exp,
  Log,
  Tanh,
  Softmax,
  SquaredNorm,
  Concat,
  SliceRows,
  Dot,
  Norm,
};

std::string_view op_name(OpKind kind);

/// The closed set of differentiable primitives (leaves excluded).
std::vector<std::string_view> primitive_set();

using NodeId = std::size_t;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  NodeId id() const { return id_; }
  Graph& graph() const { return *graph_; }
  const Tensor& value() const;

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Tape of eagerly evaluated primitive applications. Node ids are assigned
/// in creation order, which is a topological order.
class Graph {
 public:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    bool is_parameter = false;
    bool needs_grad = false;
    double scalar = 0.0;         // Scale factor
    std::size_t begin = 0;       // SliceRows range
    std::size_t end = 0;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  std::vector<NodeId> parameter_ids() const;

  Var push(Node node);

 private:
  std::vector<Node> nodes_;
};

Var add(Var a, Var b);  // also accepts b as a 1 x cols row bias
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
Var matmul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
Var squared_norm(Var a);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var dot(Var a, Var b);
Var norm(Var a);

using Gradients = std::map<NodeId, Tensor>;

/// Reverse sweep from a scalar node. Returns one entry per parameter node
/// the loss depends on (zeros for parameters it does not reach).
Gradients backward(const Graph& graph, Var loss);

}  // namespace pamda::diffcore
