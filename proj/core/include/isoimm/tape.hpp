#pragma once

#include "isoimm/activation.hpp"
#include "isoimm/tensor.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace isoimm {

using NodeId = std::size_t;

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class OpKind {
  Input,
  Constant,
  MatMul,    // a * b
  MatMulNT,  // a * b^T
  Add,
  Sub,
  Mul,     // elementwise
  AddRow,  // matrix + broadcast row vector
  Activation,
  Scale,
  Sum,
  Mean,
  Square,
  Sqrt,
  RowNorm,  // sqrt(sum_j a_ij^2 + eps) per row
  GatherRows,
  RowScale,  // row r of a multiplied by w[r]
};

std::string op_name(OpKind kind);

using Bindings = std::map<NodeId, Tensor>;
using Gradients = std::map<NodeId, Tensor>;

/// Reverse-mode tape over dense tensors.
///
/// Ops are recorded first and evaluated by forward(); inputs reference earlier
/// nodes only, so the node list is already in topological order. A tape is
/// single-owner and is rebuilt for every mini-batch.
class Tape {
 public:
  /// Differentiable leaf. The value may be supplied now or bound in forward().
  NodeId input(Tensor value = {}, std::string name = {});
  /// Leaf excluded from the gradient map.
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId add_row(NodeId a, NodeId row);
  /// sigma^(order)(a); order 0 or 1. The backward pass of order 1 uses sigma''.
  NodeId activation(NodeId a, ActivationKind kind, int order = 0);
  NodeId scale(NodeId a, double factor);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId square(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId row_norm(NodeId a, double eps = 1e-12);
  NodeId gather_rows(NodeId a, std::vector<std::size_t> rows);
  NodeId row_scale(NodeId a, NodeId w);

  /// Evaluate every node. Bindings override input values.
  void forward(const Bindings& bindings = {});
  /// d(output)/d(input) for every Input node.
  Gradients backward(NodeId output) const;

  const Tensor& value(NodeId id) const;
  bool evaluated() const { return evaluated_; }
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::vector<NodeId> inputs() const;

 private:
  struct Node {
    OpKind kind = OpKind::Constant;
    NodeId a = 0;
    NodeId b = 0;
    Tensor value;
    std::string name;
    double scalar = 0.0;
    ActivationKind activation = ActivationKind::Identity;
    int order = 0;
    std::vector<std::size_t> rows;
  };

  NodeId push(Node node);
  void check_ref(NodeId ref) const;
  void evaluate(NodeId id);
  std::string describe(NodeId id) const;

  std::vector<Node> nodes_;
  bool evaluated_ = false;
};

/// Forward-evaluate the tape and return the value of `output`.
Tensor tape_eval(Tape& tape, const Bindings& bindings, NodeId output);

/// Builds a scalar function of one input leaf onto a fresh tape.
using ScalarTapeFn = std::function<NodeId(Tape&, NodeId)>;

/// Max over coordinates of |analytic - central difference| / (|central difference| + 1e-12).
double gradient_check(const ScalarTapeFn& f, const Tensor& point, double step = 1e-5);

}  // namespace isoimm
