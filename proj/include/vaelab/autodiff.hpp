#pragma once

// Define-by-run reverse-mode differentiation. A Tape is rebuilt for every
// minibatch: each operation evaluates eagerly and appends a node whose inputs
// are strictly earlier nodes, so the node sequence is already topologically
// ordered and backward() is a single reverse sweep.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vaelab/tensor.hpp"

namespace vaelab {

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  add,
  sub,
  mul,
  neg,
  scale,       // a * x
  add_scalar,  // x + a
  exp,
  log,
  tanh,
  sigmoid,
  relu,
  softplus,
  square,
  clamp,  // clamp(x, a, b); gradient passes only inside [a, b]
  reduce_sum,
  tile_rows,
};

std::string to_string(OpKind op);

/// A trainable leaf. Ids are unique within a ParameterSet.
struct Parameter {
  std::string id;
  Tensor value;
  bool requires_grad = true;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Ordered collection of parameters with unique ids.
class ParameterSet {
 public:
  void add(Parameter p);
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const Parameter& at(const std::string& id) const;
  Parameter& at(const std::string& id);
  const Tensor& value(const std::string& id) const { return at(id).value; }

  std::size_t size() const noexcept { return items_.size(); }
  /// Total number of scalar entries across all parameters.
  std::size_t scalar_count() const noexcept;

  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }
  auto begin() noexcept { return items_.begin(); }
  auto end() noexcept { return items_.end(); }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) { return a.items_ == b.items_; }

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

using GradientMap = std::map<std::string, Tensor>;
using NodeId = std::size_t;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

struct Node {
  OpKind op = OpKind::leaf;
  std::vector<NodeId> inputs;
  double a = 0.0;
  double b = 0.0;
  std::optional<std::size_t> axis;
  std::size_t times = 1;
  Tensor value;
  std::string param_id;  // non-empty for parameter leaves
  bool needs_grad = false;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(const Parameter& p);
  Var parameter(std::string id, Tensor value, bool requires_grad = true);

  /// Append an operation node; the value is computed immediately.
  Var record(OpKind op, std::vector<NodeId> inputs, double a = 0.0, double b = 0.0,
             std::optional<std::size_t> axis = std::nullopt, std::size_t times = 1);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adjoint d(loss)/d(node) for every node; nodes outside the loss's cone get zeros.
  std::vector<Tensor> adjoints(Var loss) const;

  /// d(loss)/d(parameter) for every requires_grad parameter leaf on the tape.
  /// A parameter registered more than once accumulates.
  GradientMap backward(Var loss) const;

  /// Same, and additionally guarantees a (zero) entry for every requires_grad
  /// parameter in `params` even when it never entered the tape.
  GradientMap backward(Var loss, const ParameterSet& params) const;

  /// Recompute every node from the recorded leaves and ops.
  std::vector<Tensor> replay() const;

 private:
  std::vector<Node> nodes_;
};

/// Forward kernel for one node given its input values.
Tensor evaluate_op(const Node& node, const std::vector<const Tensor*>& inputs);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var x);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var softplus(Var x);
Var square(Var x);
Var clamp(Var x, double lo, double hi);
Var reduce_sum(Var x);
Var reduce_sum(Var x, std::size_t axis);
Var tile_rows(Var x, std::size_t times);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var x) { return neg(x); }
inline Var operator*(double s, Var x) { return scale(x, s); }
inline Var operator*(Var x, double s) { return scale(x, s); }
inline Var operator+(Var x, double s) { return add_scalar(x, s); }
inline Var operator+(double s, Var x) { return add_scalar(x, s); }
inline Var operator-(Var x, double s) { return add_scalar(x, -s); }
inline Var operator-(double s, Var x) { return add_scalar(neg(x), s); }

}  // namespace vaelab
