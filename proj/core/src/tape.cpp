#include "isoimm/tape.hpp"

#include <cmath>
#include <sstream>

namespace isoimm {

std::string op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddRow: return "add_row";
    case OpKind::Activation: return "activation";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::RowNorm: return "row_norm";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::RowScale: return "row_scale";
  }
  return "unknown";
}

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return nodes_.size() - 1;
}

void Tape::check_ref(NodeId ref) const {
  if (ref >= nodes_.size()) throw TapeError("reference to node " + std::to_string(ref) + " which does not exist yet");
}

NodeId Tape::input(Tensor value, std::string name) {
  Node n;
  n.kind = OpKind::Input;
  n.value = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

#define ISOIMM_UNARY(fn, KIND) \
  NodeId Tape::fn(NodeId a) {  \
    check_ref(a);              \
    Node n;                    \
    n.kind = OpKind::KIND;     \
    n.a = a;                   \
    return push(std::move(n)); \
  }

#define ISOIMM_BINARY(fn, KIND)         \
  NodeId Tape::fn(NodeId a, NodeId b) { \
    check_ref(a);                       \
    check_ref(b);                       \
    Node n;                             \
    n.kind = OpKind::KIND;              \
    n.a = a;                            \
    n.b = b;                            \
    return push(std::move(n));          \
  }

ISOIMM_BINARY(matmul, MatMul)
ISOIMM_BINARY(matmul_nt, MatMulNT)
ISOIMM_BINARY(add, Add)
ISOIMM_BINARY(sub, Sub)
ISOIMM_BINARY(mul, Mul)
ISOIMM_BINARY(add_row, AddRow)
ISOIMM_BINARY(row_scale, RowScale)
ISOIMM_UNARY(sum, Sum)
ISOIMM_UNARY(mean, Mean)
ISOIMM_UNARY(square, Square)
ISOIMM_UNARY(sqrt, Sqrt)

#undef ISOIMM_UNARY
#undef ISOIMM_BINARY

NodeId Tape::activation(NodeId a, ActivationKind kind, int order) {
  check_ref(a);
  if (order < 0 || order > 1) throw TapeError("activation node order must be 0 or 1");
  Node n;
  n.kind = OpKind::Activation;
  n.a = a;
  n.activation = kind;
  n.order = order;
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
  check_ref(a);
  Node n;
  n.kind = OpKind::Scale;
  n.a = a;
  n.scalar = factor;
  return push(std::move(n));
}

NodeId Tape::row_norm(NodeId a, double eps) {
  check_ref(a);
  Node n;
  n.kind = OpKind::RowNorm;
  n.a = a;
  n.scalar = eps;
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId a, std::vector<std::size_t> rows) {
  check_ref(a);
  if (rows.empty()) throw TapeError("gather_rows needs at least one row");
  Node n;
  n.kind = OpKind::GatherRows;
  n.a = a;
  n.rows = std::move(rows);
  return push(std::move(n));
}

std::vector<NodeId> Tape::inputs() const {
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Input) ids.push_back(i);
  }
  return ids;
}

std::string Tape::describe(NodeId id) const {
  std::ostringstream os;
  os << "node " << id << " (" << op_name(nodes_[id].kind);
  if (!nodes_[id].name.empty()) os << " '" << nodes_[id].name << "'";
  os << ")";
  return os.str();
}

const Tensor& Tape::value(NodeId id) const {
  check_ref(id);
  if (!evaluated_) throw TapeError("value of " + describe(id) + " requested before forward()");
  return nodes_[id].value;
}

void Tape::forward(const Bindings& bindings) {
  for (const auto& [id, value] : bindings) {
    check_ref(id);
    if (nodes_[id].kind != OpKind::Input) throw TapeError("binding targets non-input " + describe(id));
    nodes_[id].value = value;
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) evaluate(id);
  evaluated_ = true;
}

void Tape::evaluate(NodeId id) {
  Node& n = nodes_[id];
  auto shape_fail = [&](const std::string& what) { throw ShapeError(describe(id) + ": " + what); };
  auto operand = [&](NodeId ref) -> const Tensor& { return nodes_[ref].value; };

  switch (n.kind) {
    case OpKind::Input:
    case OpKind::Constant:
      if (n.value.empty()) shape_fail("leaf has no value bound");
      break;
    case OpKind::MatMul: {
      const Tensor& a = operand(n.a);
      const Tensor& b = operand(n.b);
      if (a.cols() != b.rows()) {
        shape_fail("inner dimensions differ: " + a.shape_string() + " * " + b.shape_string());
      }
      std::vector<std::size_t> shape = b.rank() == 2 ? std::vector<std::size_t>{a.rows(), b.cols()}
                                                     : std::vector<std::size_t>{a.rows()};
      n.value.reshape(shape);
      n.value.matrix().noalias() = a.matrix() * b.matrix();
      break;
    }
    case OpKind::MatMulNT: {
      const Tensor& a = operand(n.a);
      const Tensor& b = operand(n.b);
      if (a.cols() != b.cols()) {
        shape_fail("inner dimensions differ: " + a.shape_string() + " * " + b.shape_string() + "^T");
      }
      n.value.reshape({a.rows(), b.rows()});
      n.value.matrix().noalias() = a.matrix() * b.matrix().transpose();
      break;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& a = operand(n.a);
      const Tensor& b = operand(n.b);
      if (!a.same_shape(b)) shape_fail("operand shapes differ: " + a.shape_string() + " vs " + b.shape_string());
      n.value.reshape(a.shape());
      if (n.kind == OpKind::Add) {
        n.value.matrix() = a.matrix() + b.matrix();
      } else if (n.kind == OpKind::Sub) {
        n.value.matrix() = a.matrix() - b.matrix();
      } else {
        n.value.matrix() = a.matrix().cwiseProduct(b.matrix());
      }
      break;
    }
    case OpKind::AddRow: {
      const Tensor& a = operand(n.a);
      const Tensor& row = operand(n.b);
      if (row.size() != a.cols()) {
        shape_fail("row of length " + std::to_string(row.size()) + " added to " + a.shape_string());
      }
      n.value.reshape(a.shape());
      Eigen::Map<const Eigen::RowVectorXd> r(row.data().data(), static_cast<Eigen::Index>(row.size()));
      n.value.matrix() = a.matrix().rowwise() + r;
      break;
    }
    case OpKind::Activation: {
      const Tensor& a = operand(n.a);
      n.value.reshape(a.shape());
      activate_n(n.activation, a.data().data(), n.value.data().data(), a.size(), n.order);
      break;
    }
    case OpKind::Scale: {
      const Tensor& a = operand(n.a);
      n.value.reshape(a.shape());
      n.value.matrix() = n.scalar * a.matrix();
      break;
    }
    case OpKind::Sum:
      n.value = Tensor::scalar(operand(n.a).matrix().sum());
      break;
    case OpKind::Mean:
      n.value = Tensor::scalar(operand(n.a).matrix().mean());
      break;
    case OpKind::Square: {
      const Tensor& a = operand(n.a);
      n.value.reshape(a.shape());
      n.value.matrix() = a.matrix().cwiseProduct(a.matrix());
      break;
    }
    case OpKind::Sqrt: {
      const Tensor& a = operand(n.a);
      n.value.reshape(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] > 0.0 ? std::sqrt(a[i]) : 0.0;
      break;
    }
    case OpKind::RowNorm: {
      const Tensor& a = operand(n.a);
      n.value.reshape({a.rows()});
      n.value.matrix() = (a.matrix().rowwise().squaredNorm().array() + n.scalar).sqrt().matrix();
      break;
    }
    case OpKind::GatherRows: {
      const Tensor& a = operand(n.a);
      for (auto r : n.rows) {
        if (r >= a.rows()) shape_fail("row index " + std::to_string(r) + " out of range for " + a.shape_string());
      }
      std::vector<std::size_t> shape = a.rank() == 2 ? std::vector<std::size_t>{n.rows.size(), a.cols()}
                                                     : std::vector<std::size_t>{n.rows.size()};
      n.value.reshape(shape);
      auto src = a.matrix();
      auto dst = n.value.matrix();
      for (std::size_t i = 0; i < n.rows.size(); ++i) {
        dst.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(n.rows[i]));
      }
      break;
    }
    case OpKind::RowScale: {
      const Tensor& a = operand(n.a);
      const Tensor& w = operand(n.b);
      if (w.size() != a.rows()) {
        shape_fail("row weights of length " + std::to_string(w.size()) + " for " + a.shape_string());
      }
      n.value.reshape(a.shape());
      Eigen::Map<const Eigen::VectorXd> wv(w.data().data(), static_cast<Eigen::Index>(w.size()));
      n.value.matrix() = wv.asDiagonal() * a.matrix();
      break;
    }
  }
  if (!n.value.all_finite()) throw NumericError(describe(id) + " produced a non-finite value");
}

namespace {

template <typename Expr>
void accumulate(Tensor& slot, const Tensor& shape_of, const Expr& contribution) {
  if (slot.empty()) {
    slot.reshape(shape_of.shape());
    slot.matrix().noalias() = contribution;
  } else {
    slot.matrix().noalias() += contribution;
  }
}

}  // namespace

Gradients Tape::backward(NodeId output) const {
  check_ref(output);
  if (!evaluated_) throw TapeError("backward() called before forward()");
  if (nodes_[output].value.size() != 1) {
    throw TapeError("backward() needs a scalar output; " + describe(output) + " has shape " +
                    nodes_[output].value.shape_string());
  }

  std::vector<Tensor> adj(output + 1);
  adj[output] = Tensor(nodes_[output].value.shape());
  adj[output][0] = 1.0;

  for (NodeId id = output + 1; id-- > 0;) {
    if (adj[id].empty()) continue;
    const Node& n = nodes_[id];
    const ConstMatrixMap g = std::as_const(adj[id]).matrix();
    switch (n.kind) {
      case OpKind::Input:
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& b = nodes_[n.b].value;
        accumulate(adj[n.a], a, g * b.matrix().transpose());
        accumulate(adj[n.b], b, a.matrix().transpose() * g);
        break;
      }
      case OpKind::MatMulNT: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& b = nodes_[n.b].value;
        accumulate(adj[n.a], a, g * b.matrix());
        accumulate(adj[n.b], b, g.transpose() * a.matrix());
        break;
      }
      case OpKind::Add:
        accumulate(adj[n.a], nodes_[n.a].value, g);
        accumulate(adj[n.b], nodes_[n.b].value, g);
        break;
      case OpKind::Sub:
        accumulate(adj[n.a], nodes_[n.a].value, g);
        accumulate(adj[n.b], nodes_[n.b].value, -g);
        break;
      case OpKind::Mul: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& b = nodes_[n.b].value;
        accumulate(adj[n.a], a, g.cwiseProduct(b.matrix()));
        accumulate(adj[n.b], b, g.cwiseProduct(a.matrix()));
        break;
      }
      case OpKind::AddRow: {
        const Tensor& row = nodes_[n.b].value;
        accumulate(adj[n.a], nodes_[n.a].value, g);
        Matrix colsum = g.colwise().sum();
        accumulate(adj[n.b], row,
                   ConstMatrixMap(colsum.data(), static_cast<Eigen::Index>(row.rows()), static_cast<Eigen::Index>(row.cols())));
        break;
      }
      case OpKind::Activation: {
        const Tensor& a = nodes_[n.a].value;
        Matrix local(g.rows(), g.cols());
        activate_n(n.activation, a.data().data(), local.data(), a.size(), n.order + 1);
        accumulate(adj[n.a], a, local.cwiseProduct(g));
        break;
      }
      case OpKind::Scale:
        accumulate(adj[n.a], nodes_[n.a].value, n.scalar * g);
        break;
      case OpKind::Sum: {
        const Tensor& a = nodes_[n.a].value;
        accumulate(adj[n.a], a, Matrix::Constant(static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()), g(0, 0)));
        break;
      }
      case OpKind::Mean: {
        const Tensor& a = nodes_[n.a].value;
        double share = g(0, 0) / static_cast<double>(a.size());
        accumulate(adj[n.a], a, Matrix::Constant(static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()), share));
        break;
      }
      case OpKind::Square: {
        const Tensor& a = nodes_[n.a].value;
        accumulate(adj[n.a], a, 2.0 * g.cwiseProduct(a.matrix()));
        break;
      }
      case OpKind::Sqrt: {
        const Tensor& a = nodes_[n.a].value;
        Matrix local(g.rows(), g.cols());
        for (std::size_t i = 0; i < a.size(); ++i) {
          local.data()[i] = a[i] > 0.0 ? g.data()[i] * 0.5 / n.value[i] : 0.0;
        }
        accumulate(adj[n.a], a, local);
        break;
      }
      case OpKind::RowNorm: {
        const Tensor& a = nodes_[n.a].value;
        Eigen::VectorXd w(static_cast<Eigen::Index>(a.rows()));
        for (std::size_t r = 0; r < a.rows(); ++r) w(static_cast<Eigen::Index>(r)) = g.data()[r] / n.value[r];
        accumulate(adj[n.a], a, w.asDiagonal() * a.matrix());
        break;
      }
      case OpKind::GatherRows: {
        const Tensor& a = nodes_[n.a].value;
        Matrix local = Matrix::Zero(static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
        for (std::size_t i = 0; i < n.rows.size(); ++i) {
          local.row(static_cast<Eigen::Index>(n.rows[i])) += g.row(static_cast<Eigen::Index>(i));
        }
        accumulate(adj[n.a], a, local);
        break;
      }
      case OpKind::RowScale: {
        const Tensor& a = nodes_[n.a].value;
        const Tensor& w = nodes_[n.b].value;
        Eigen::Map<const Eigen::VectorXd> wv(w.data().data(), static_cast<Eigen::Index>(w.size()));
        accumulate(adj[n.a], a, wv.asDiagonal() * g);
        Eigen::VectorXd dw = g.cwiseProduct(a.matrix()).rowwise().sum();
        accumulate(adj[n.b], w, ConstMatrixMap(dw.data(), static_cast<Eigen::Index>(w.rows()), static_cast<Eigen::Index>(w.cols())));
        break;
      }
    }
  }

  Gradients grads;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind != OpKind::Input) continue;
    if (id < adj.size() && !adj[id].empty()) {
      grads.emplace(id, std::move(adj[id]));
    } else {
      grads.emplace(id, Tensor(nodes_[id].value.shape()));
    }
  }
  return grads;
}

Tensor tape_eval(Tape& tape, const Bindings& bindings, NodeId output) {
  tape.forward(bindings);
  return tape.value(output);
}

double gradient_check(const ScalarTapeFn& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("gradient_check step must be positive");

  Tape tape;
  NodeId x = tape.input(point, "x");
  NodeId y = f(tape, x);
  tape.forward();
  Tensor analytic = tape.backward(y).at(x);

  auto eval_at = [&](const Tensor& p) {
    double v = tape_eval(tape, {{x, p}}, y).item();
    if (!std::isfinite(v)) throw NumericError("gradient_check: function is not finite near the point");
    return v;
  };

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    double up = eval_at(probe);
    probe[i] = point[i] - step;
    double down = eval_at(probe);
    probe[i] = point[i];
    double numeric = (up - down) / (2.0 * step);
    double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  tape.forward({{x, point}});
  return worst;
}

}  // namespace isoimm
