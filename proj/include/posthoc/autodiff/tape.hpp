#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "posthoc/autodiff/tensor.hpp"

namespace posthoc::ad {

enum class Op {
  kLeaf,      // parameter: receives a gradient
  kConstant,  // input data: no gradient
  kMatmul,
  kAdd,
  kRelu,
  kLogSoftmaxRows,
  kSum,
  kScale,
  kMul,
  kLog,
  kExp,
  kGatherRows,
};

const char* op_name(Op op);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape is.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> by_node) : by_node_(std::move(by_node)) {}
  // Gradient for a leaf; has the leaf's shape.
  const Tensor& operator[](Var leaf) const { return by_node_.at(leaf.id); }

 private:
  std::vector<Tensor> by_node_;
};

// Append-only record of primitive operations. Node inputs always refer to
// earlier nodes, so the insertion order is a topological order.
// Not thread-safe; use one tape per thread.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value);

  // Records `op` applied to `inputs`. `factor` is the multiplier for kScale,
  // `index` the per-row column for kGatherRows.
  Var apply(Op op, std::initializer_list<Var> inputs, double factor = 0.0, std::vector<std::size_t> index = {});

  const Tensor& value(Var v) const;
  // Replaces the value held by a leaf or constant. Call replay() afterwards to
  // refresh downstream nodes.
  void set_value(Var v, Tensor value);
  // Recomputes every recorded operation from current leaf/constant values.
  void replay();

  // Reverse sweep from a scalar output. Gradients are populated for every
  // leaf that the output depends on (zeros otherwise).
  Gradients backward(Var output) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::size_t n_inputs = 0;
    std::size_t inputs[2] = {0, 0};
    double factor = 0.0;
    std::vector<std::size_t> index;
    bool needs_grad = false;
    Tensor value;
  };

  Tensor evaluate(const Node& node) const;
  void check(Var v) const;

  std::vector<Node> nodes_;
};

// Generic entry point; same as tape.apply with inputs taken from a span.
Var forward_op(Op op, std::span<const Var> inputs);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var relu(Var a);
Var log_softmax_rows(Var a);
Var sum(Var a);
Var scale(Var a, double factor);
Var mul(Var a, Var b);
Var log(Var a);
Var exp(Var a);
Var gather_rows(Var a, std::vector<std::size_t> index);

// a - b, composed from scale and add.
Var sub(Var a, Var b);

}  // namespace posthoc::ad
