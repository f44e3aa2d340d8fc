#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mdchain/numeric/tensor.hpp"

namespace mdchain::ad {

using num::Tensor;

// Trainable leaf. Gradients from Graph::backward accumulate into `grad`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Graph;

// Handle to a recorded node.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

// Tape of primitive ops recorded during one forward pass. Nodes are appended
// in evaluation order, so the tape is already topologically sorted.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& output_grad(std::size_t id) const { return nodes_[id].grad; }

  // Gradient of the last backward pass with respect to node `v`.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  // Reverse sweep from a scalar node. Gradients for parameter leaves are added
  // to Parameter::grad.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(const char* op, Tensor value, std::vector<std::size_t> parents, BackwardFn fn);
  Tensor& grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

// Primitive ops. All take and return graph handles; shapes are matrices.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var gelu(Var a);  // tanh approximation
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gather_rows(Var table, std::span<const int> indices);
Var sum(Var a);
Var mean(Var a);

// Sum over rows of -logp[i, targets[i]].
Var nll_rows(Var log_probs, std::span<const int> targets);
// -sum(probs * logp): cross-entropy against fixed soft targets.
Var soft_cross_entropy(Var log_probs, const Tensor& probs);

// Multi-head scaled dot-product attention for `batch` independent sequences
// stacked along rows. q is (batch*nq) x d, k and v are (batch*nk) x d.
// With causal=true, query i only sees keys j <= i (requires nq == nk).
Var attention(Var q, Var k, Var v, std::size_t heads, std::size_t batch, bool causal);

}  // namespace mdchain::ad
