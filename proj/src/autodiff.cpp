#include "vaelab/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "vaelab/errors.hpp"

namespace vaelab {

std::string to_string(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::neg: return "neg";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::relu: return "relu";
    case OpKind::softplus: return "softplus";
    case OpKind::square: return "square";
    case OpKind::clamp: return "clamp";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::tile_rows: return "tile_rows";
  }
  return "unknown";
}

void ParameterSet::add(Parameter p) {
  if (index_.count(p.id)) throw ContractError("duplicate parameter id '" + p.id + "'");
  index_.emplace(p.id, items_.size());
  items_.push_back(std::move(p));
}

const Parameter& ParameterSet::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ContractError("unknown parameter id '" + id + "'");
  return items_[it->second];
}

Parameter& ParameterSet::at(const std::string& id) {
  auto it = index_.find(id);
  if (it == index_.end()) throw ContractError("unknown parameter id '" + id + "'");
  return items_[it->second];
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.numel();
  return n;
}

const Tensor& Var::value() const { return tape_->node(id_).value; }

namespace {

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
  std::vector<double> out(x.numel());
  const auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(X[i]);
  return Tensor(x.shape(), std::move(out));
}

template <typename F>
Tensor zip(const Tensor& x, const Tensor& y, F f) {
  std::vector<double> out(x.numel());
  const auto X = x.data();
  const auto Y = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(X[i], Y[i]);
  return Tensor(x.shape(), std::move(out));
}

// Broadcast a reduced gradient back over the axis it was summed along.
Tensor expand_axis(const Tensor& grad, const Shape& in_shape, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in_shape[i];
  for (std::size_t i = axis + 1; i < in_shape.size(); ++i) inner *= in_shape[i];
  const std::size_t extent = in_shape[axis];
  std::vector<double> out(shape_numel(in_shape));
  const auto G = grad.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i) out[(o * extent + e) * inner + i] = G[o * inner + i];
  return Tensor(in_shape, std::move(out));
}

void accumulate(std::optional<Tensor>& slot, Tensor contribution) {
  if (!slot) {
    slot = std::move(contribution);
    return;
  }
  auto dst = slot->data();
  const auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor evaluate_op(const Node& node, const std::vector<const Tensor*>& in) {
  switch (node.op) {
    case OpKind::leaf: return node.value;
    case OpKind::matmul: return kernels::matmul(*in[0], *in[1]);
    case OpKind::add: return kernels::add(*in[0], *in[1]);
    case OpKind::sub: return kernels::sub(*in[0], *in[1]);
    case OpKind::mul: return kernels::mul(*in[0], *in[1]);
    case OpKind::neg: return map_unary(*in[0], [](double v) { return -v; });
    case OpKind::scale: return map_unary(*in[0], [s = node.a](double v) { return s * v; });
    case OpKind::add_scalar: return map_unary(*in[0], [s = node.a](double v) { return v + s; });
    case OpKind::exp: return map_unary(*in[0], [](double v) { return std::exp(v); });
    case OpKind::log:
      for (double v : in[0]->data()) {
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
      }
      return map_unary(*in[0], [](double v) { return std::log(v); });
    case OpKind::tanh: return map_unary(*in[0], [](double v) { return std::tanh(v); });
    case OpKind::sigmoid: return map_unary(*in[0], kernels::stable_sigmoid);
    case OpKind::relu: return map_unary(*in[0], [](double v) { return v > 0.0 ? v : 0.0; });
    case OpKind::softplus: return map_unary(*in[0], kernels::stable_softplus);
    case OpKind::square: return map_unary(*in[0], [](double v) { return v * v; });
    case OpKind::clamp:
      return map_unary(*in[0], [lo = node.a, hi = node.b](double v) { return std::clamp(v, lo, hi); });
    case OpKind::reduce_sum:
      return node.axis ? kernels::reduce_sum(*in[0], *node.axis) : kernels::reduce_sum(*in[0]);
    case OpKind::tile_rows: return kernels::tile_rows(*in[0], node.times);
  }
  throw ContractError("unhandled op kind");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Parameter& p) { return parameter(p.id, p.value, p.requires_grad); }

Var Tape::parameter(std::string id, Tensor value, bool requires_grad) {
  if (id.empty()) throw ContractError("parameter id must be non-empty");
  Node n;
  n.value = std::move(value);
  n.param_id = std::move(id);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind op, std::vector<NodeId> inputs, double a, double b, std::optional<std::size_t> axis,
                 std::size_t times) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.axis = axis;
  n.times = times;
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) throw ContractError("op input references a node that does not exist yet");
    in.push_back(&nodes_[id].value);
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  n.value = evaluate_op(n, in);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::vector<Tensor> Tape::adjoints(Var loss) const {
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  const Tensor& lv = nodes_.at(loss.id()).value;
  if (lv.numel() != 1) throw ContractError("backward needs a scalar loss, got shape " + to_string(lv.shape()));

  std::vector<std::optional<Tensor>> adj(nodes_.size());
  adj[loss.id()] = Tensor::full(lv.shape(), 1.0);

  for (NodeId id = loss.id() + 1; id-- > 0;) {
    if (!adj[id] || !nodes_[id].needs_grad) continue;
    const Node& n = nodes_[id];
    const Tensor& g = *adj[id];
    const Tensor& y = n.value;
    auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
    auto push = [&](std::size_t k, Tensor t) {
      if (nodes_[n.inputs[k]].needs_grad) accumulate(adj[n.inputs[k]], std::move(t));
    };
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };

    switch (n.op) {
      case OpKind::leaf: break;
      case OpKind::matmul:
        if (wants(0)) push(0, kernels::matmul(g, kernels::transpose(in(1))));
        if (wants(1)) push(1, kernels::matmul(kernels::transpose(in(0)), g));
        break;
      case OpKind::add:
        push(0, kernels::reduce_to(g, in(0).shape()));
        push(1, kernels::reduce_to(g, in(1).shape()));
        break;
      case OpKind::sub:
        push(0, kernels::reduce_to(g, in(0).shape()));
        if (wants(1)) push(1, kernels::reduce_to(map_unary(g, [](double v) { return -v; }), in(1).shape()));
        break;
      case OpKind::mul:
        if (wants(0)) push(0, kernels::reduce_to(kernels::mul(g, in(1)), in(0).shape()));
        if (wants(1)) push(1, kernels::reduce_to(kernels::mul(g, in(0)), in(1).shape()));
        break;
      case OpKind::neg: push(0, map_unary(g, [](double v) { return -v; })); break;
      case OpKind::scale: push(0, map_unary(g, [s = n.a](double v) { return s * v; })); break;
      case OpKind::add_scalar: push(0, g); break;
      case OpKind::exp: push(0, zip(g, y, [](double gv, double yv) { return gv * yv; })); break;
      case OpKind::log: push(0, zip(g, in(0), [](double gv, double xv) { return gv / xv; })); break;
      case OpKind::tanh: push(0, zip(g, y, [](double gv, double yv) { return gv * (1.0 - yv * yv); })); break;
      case OpKind::sigmoid: push(0, zip(g, y, [](double gv, double yv) { return gv * yv * (1.0 - yv); })); break;
      case OpKind::relu: push(0, zip(g, in(0), [](double gv, double xv) { return xv > 0.0 ? gv : 0.0; })); break;
      case OpKind::softplus:
        push(0, zip(g, in(0), [](double gv, double xv) { return gv * kernels::stable_sigmoid(xv); }));
        break;
      case OpKind::square: push(0, zip(g, in(0), [](double gv, double xv) { return 2.0 * xv * gv; })); break;
      case OpKind::clamp:
        push(0, zip(g, in(0), [lo = n.a, hi = n.b](double gv, double xv) { return (xv >= lo && xv <= hi) ? gv : 0.0; }));
        break;
      case OpKind::reduce_sum:
        if (n.axis) {
          push(0, expand_axis(g, in(0).shape(), *n.axis));
        } else {
          push(0, Tensor::full(in(0).shape(), g.item()));
        }
        break;
      case OpKind::tile_rows: {
        const Tensor& x = in(0);
        std::vector<double> acc(x.numel(), 0.0);
        const auto G = g.data();
        for (std::size_t t = 0; t < n.times; ++t)
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += G[t * acc.size() + i];
        push(0, Tensor(x.shape(), std::move(acc)));
        break;
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(nodes_.size());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    out.push_back(adj[id] ? std::move(*adj[id]) : Tensor::zeros(nodes_[id].value.shape()));
  }
  return out;
}

GradientMap Tape::backward(Var loss) const {
  auto adj = adjoints(loss);
  GradientMap grads;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.op != OpKind::leaf || n.param_id.empty() || !n.needs_grad) continue;
    auto it = grads.find(n.param_id);
    if (it == grads.end()) {
      grads.emplace(n.param_id, std::move(adj[id]));
    } else {
      if (it->second.shape() != adj[id].shape()) {
        throw ShapeError("parameter '" + n.param_id + "' registered with two shapes");
      }
      auto dst = it->second.data();
      const auto src = adj[id].data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return grads;
}

GradientMap Tape::backward(Var loss, const ParameterSet& params) const {
  GradientMap grads = backward(loss);
  for (const auto& p : params) {
    if (p.requires_grad && !grads.count(p.id)) grads.emplace(p.id, Tensor::zeros(p.value.shape()));
  }
  return grads;
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  for (const Node& n : nodes_) {
    std::vector<const Tensor*> in;
    for (NodeId id : n.inputs) in.push_back(&values[id]);
    values.push_back(evaluate_op(n, in));
  }
  return values;
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  return a.tape();
}

Var unary(OpKind op, Var x, double a = 0.0, double b = 0.0) { return x.tape().record(op, {x.id()}, a, b); }

}  // namespace

Var matmul(Var a, Var b) { return same_tape(a, b).record(OpKind::matmul, {a.id(), b.id()}); }
Var add(Var a, Var b) { return same_tape(a, b).record(OpKind::add, {a.id(), b.id()}); }
Var sub(Var a, Var b) { return same_tape(a, b).record(OpKind::sub, {a.id(), b.id()}); }
Var mul(Var a, Var b) { return same_tape(a, b).record(OpKind::mul, {a.id(), b.id()}); }
Var neg(Var x) { return unary(OpKind::neg, x); }
Var scale(Var x, double factor) { return unary(OpKind::scale, x, factor); }
Var add_scalar(Var x, double offset) { return unary(OpKind::add_scalar, x, offset); }
Var exp(Var x) { return unary(OpKind::exp, x); }
Var log(Var x) { return unary(OpKind::log, x); }
Var tanh(Var x) { return unary(OpKind::tanh, x); }
Var sigmoid(Var x) { return unary(OpKind::sigmoid, x); }
Var relu(Var x) { return unary(OpKind::relu, x); }
Var softplus(Var x) { return unary(OpKind::softplus, x); }
Var square(Var x) { return unary(OpKind::square, x); }

Var clamp(Var x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp bounds reversed");
  return unary(OpKind::clamp, x, lo, hi);
}

Var reduce_sum(Var x) { return x.tape().record(OpKind::reduce_sum, {x.id()}); }

Var reduce_sum(Var x, std::size_t axis) {
  return x.tape().record(OpKind::reduce_sum, {x.id()}, 0.0, 0.0, axis);
}

Var tile_rows(Var x, std::size_t times) {
  if (times == 0) throw ContractError("tile_rows needs at least one copy");
  return x.tape().record(OpKind::tile_rows, {x.id()}, 0.0, 0.0, std::nullopt, times);
}

}  // namespace vaelab
