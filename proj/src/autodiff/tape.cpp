#include "posthoc/autodiff/tape.hpp"

#include <cmath>

#include "posthoc/core/error.hpp"

namespace posthoc::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kRelu: return "relu";
    case Op::kLogSoftmaxRows: return "log_softmax_rows";
    case Op::kSum: return "sum";
    case Op::kScale: return "scale";
    case Op::kMul: return "mul";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kGatherRows: return "gather_rows";
  }
  return "?";
}

namespace {

std::size_t arity(Op op) {
  switch (op) {
    case Op::kLeaf:
    case Op::kConstant: return 0;
    case Op::kMatmul:
    case Op::kAdd:
    case Op::kMul: return 2;
    default: return 1;
  }
}

void accumulate(Tensor& into, const Tensor& g) {
  if (into.shape() != g.shape()) into = Tensor(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

Tensor transpose(const Tensor& a) {
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

}  // namespace

const Tensor& Var::value() const {
  require(tape != nullptr, "Var not bound to a tape");
  return tape->value(*this);
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.needs_grad = true;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::check(Var v) const {
  require(v.tape == this, "Var belongs to a different tape");
  require(v.id < nodes_.size(), "Var id out of range");
}

Var Tape::apply(Op op, std::initializer_list<Var> inputs, double factor, std::vector<std::size_t> index) {
  require(op != Op::kLeaf && op != Op::kConstant, "use leaf()/constant() to create inputs");
  require(inputs.size() == arity(op), std::string(op_name(op)) + ": wrong number of inputs");
  Node n;
  n.op = op;
  n.n_inputs = inputs.size();
  std::size_t k = 0;
  for (Var v : inputs) {
    check(v);
    n.inputs[k++] = v.id;
    n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
  }
  n.factor = factor;
  n.index = std::move(index);
  n.value = evaluate(n);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor Tape::evaluate(const Node& n) const {
  const Tensor& a = nodes_[n.inputs[0]].value;
  switch (n.op) {
    case Op::kMatmul: return ad::matmul(a, nodes_[n.inputs[1]].value);
    case Op::kAdd: return ad::add(a, nodes_[n.inputs[1]].value);
    case Op::kMul: return ad::mul(a, nodes_[n.inputs[1]].value);
    case Op::kRelu: return ad::relu(a);
    case Op::kLogSoftmaxRows: return ad::log_softmax_rows(a);
    case Op::kSum: return Tensor::scalar(ad::sum(a));
    case Op::kScale: return ad::scale(a, n.factor);
    case Op::kLog: return ad::log(a);
    case Op::kExp: return ad::exp(a);
    case Op::kGatherRows: return ad::gather_rows(a, n.index);
    case Op::kLeaf:
    case Op::kConstant: return n.value;
  }
  throw ContractViolation("unknown op");
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

void Tape::set_value(Var v, Tensor value) {
  check(v);
  Node& n = nodes_[v.id];
  require(n.op == Op::kLeaf || n.op == Op::kConstant, "set_value on a computed node");
  require(n.value.shape() == value.shape(), "set_value: shape mismatch " + shape_string(n.value.shape()) + " vs " +
                                                shape_string(value.shape()));
  n.value = std::move(value);
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (n.op == Op::kLeaf || n.op == Op::kConstant) continue;
    n.value = evaluate(n);
  }
}

Gradients Tape::backward(Var output) const {
  check(output);
  const Tensor& out = nodes_[output.id].value;
  require(out.size() == 1, "backward: output must be scalar, got shape " + shape_string(out.shape()));

  std::vector<Tensor> g(nodes_.size());
  g[output.id] = Tensor(out.shape(), {1.0});

  for (std::size_t id = output.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || g[id].size() == 0 || n.n_inputs == 0) continue;
    const Tensor& dy = g[id];
    const std::size_t ia = n.inputs[0];
    const Node& na = nodes_[ia];
    const Tensor& a = na.value;

    switch (n.op) {
      case Op::kMatmul: {
        const Node& nb = nodes_[n.inputs[1]];
        if (na.needs_grad) accumulate(g[ia], ad::matmul(dy, transpose(nb.value)));
        if (nb.needs_grad) accumulate(g[n.inputs[1]], ad::matmul(transpose(a), dy));
        break;
      }
      case Op::kAdd: {
        const Node& nb = nodes_[n.inputs[1]];
        if (na.needs_grad) accumulate(g[ia], dy);
        if (nb.needs_grad) {
          if (nb.value.shape() == dy.shape()) {
            accumulate(g[n.inputs[1]], dy);
          } else {
            Tensor col(nb.value.shape());
            for (std::size_t r = 0; r < dy.rows(); ++r)
              for (std::size_t c = 0; c < dy.cols(); ++c) col[c] += dy(r, c);
            accumulate(g[n.inputs[1]], col);
          }
        }
        break;
      }
      case Op::kMul: {
        const Node& nb = nodes_[n.inputs[1]];
        if (na.needs_grad) accumulate(g[ia], ad::mul(dy, nb.value));
        if (nb.needs_grad) accumulate(g[n.inputs[1]], ad::mul(dy, a));
        break;
      }
      case Op::kRelu: {
        Tensor d(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] > 0.0 ? dy[i] : 0.0;
        accumulate(g[ia], d);
        break;
      }
      case Op::kLogSoftmaxRows: {
        // d/dx_j = dy_j - softmax_j * sum_k dy_k
        Tensor d(a.shape());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double s = 0.0;
          for (double v : dy.row(r)) s += v;
          for (std::size_t c = 0; c < a.cols(); ++c) d(r, c) = dy(r, c) - std::exp(n.value(r, c)) * s;
        }
        accumulate(g[ia], d);
        break;
      }
      case Op::kSum: {
        Tensor d(a.shape());
        const double s = dy.item();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = s;
        accumulate(g[ia], d);
        break;
      }
      case Op::kScale: accumulate(g[ia], ad::scale(dy, n.factor)); break;
      case Op::kLog: {
        Tensor d(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = dy[i] / a[i];
        accumulate(g[ia], d);
        break;
      }
      case Op::kExp: accumulate(g[ia], ad::mul(dy, n.value)); break;
      case Op::kGatherRows: {
        Tensor d(a.shape());
        for (std::size_t r = 0; r < a.rows(); ++r) d(r, n.index[r]) += dy[r];
        accumulate(g[ia], d);
        break;
      }
      case Op::kLeaf:
      case Op::kConstant: break;
    }
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].op == Op::kLeaf && g[id].shape() != nodes_[id].value.shape()) g[id] = Tensor(nodes_[id].value.shape());
  }
  return Gradients(std::move(g));
}

Var forward_op(Op op, std::span<const Var> inputs) {
  require(!inputs.empty(), std::string(op_name(op)) + ": no inputs");
  Tape* t = inputs[0].tape;
  require(t != nullptr, "Var not bound to a tape");
  require(op != Op::kScale && op != Op::kGatherRows, std::string(op_name(op)) + " needs an attribute; call it directly");
  if (inputs.size() == 1) return t->apply(op, {inputs[0]});
  require(inputs.size() == 2, std::string(op_name(op)) + ": too many inputs");
  return t->apply(op, {inputs[0], inputs[1]});
}

Var matmul(Var a, Var b) { return a.tape->apply(Op::kMatmul, {a, b}); }
Var add(Var a, Var b) { return a.tape->apply(Op::kAdd, {a, b}); }
Var relu(Var a) { return a.tape->apply(Op::kRelu, {a}); }
Var log_softmax_rows(Var a) { return a.tape->apply(Op::kLogSoftmaxRows, {a}); }
Var sum(Var a) { return a.tape->apply(Op::kSum, {a}); }
Var scale(Var a, double factor) { return a.tape->apply(Op::kScale, {a}, factor); }
Var mul(Var a, Var b) { return a.tape->apply(Op::kMul, {a, b}); }
Var log(Var a) { return a.tape->apply(Op::kLog, {a}); }
Var exp(Var a) { return a.tape->apply(Op::kExp, {a}); }
Var gather_rows(Var a, std::vector<std::size_t> index) {
  return a.tape->apply(Op::kGatherRows, {a}, 0.0, std::move(index));
}
Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

}  // namespace posthoc::ad
