#include "isoimm/mlp.hpp"

#include "isoimm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace isoimm {

void MlpSpec::validate() const {
  if (layer_dims.size() < 2) throw std::invalid_argument("MLP needs at least one layer (two dims)");
  for (auto d : layer_dims) {
    if (d == 0) throw std::invalid_argument("MLP layer dims must be >= 1");
  }
}

void MlpParams::validate() const {
  spec.validate();
  if (layers.size() != spec.num_layers()) throw ShapeError("MLP has wrong number of layers for its spec");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.weight.rows() != spec.layer_dims[l + 1] || L.weight.cols() != spec.layer_dims[l] ||
        L.bias.size() != spec.layer_dims[l + 1]) {
      throw ShapeError("MLP layer " + std::to_string(l) + " shape does not match spec");
    }
    if (!L.weight.all_finite() || !L.bias.all_finite()) {
      throw NumericError("MLP layer " + std::to_string(l) + " has non-finite entries");
    }
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers) n += L.weight.size() + L.bias.size();
  return n;
}

MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, "mlp_init");
  MlpParams p{spec, {}};
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    std::size_t in = spec.layer_dims[l];
    std::size_t out = spec.layer_dims[l + 1];
    double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer{Tensor({out, in}), Tensor({out})};
    for (auto& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace {

Eigen::Map<const Eigen::RowVectorXd> bias_row(const DenseLayer& L) {
  return {L.bias.data().data(), static_cast<Eigen::Index>(L.bias.size())};
}

void apply_activation(Matrix& a, ActivationKind kind, int order) {
  activate_n(kind, a.data(), a.data(), static_cast<std::size_t>(a.size()), order);
}

}  // namespace

Matrix mlp_forward(const MlpParams& p, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != p.spec.input_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(p.spec.input_dim()));
  }
  Matrix h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    Matrix a = h * L.weight.matrix().transpose();
    a.rowwise() += bias_row(L);
    if (l + 1 < p.layers.size()) apply_activation(a, p.spec.activation, 0);
    h = std::move(a);
  }
  return h;
}

Vector mlp_forward(const MlpParams& p, const Vector& x) {
  Matrix row = x.transpose();
  return mlp_forward(p, row).row(0).transpose();
}

Matrix mlp_jacobian(const MlpParams& p, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != p.spec.input_dim()) {
    throw ShapeError("mlp_jacobian: point has dim " + std::to_string(z.size()) + ", network expects " +
                     std::to_string(p.spec.input_dim()));
  }
  Vector h = z;
  Matrix jac = Matrix::Identity(z.size(), z.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    Vector a = L.weight.matrix() * h + bias_row(L).transpose();
    jac = L.weight.matrix() * jac;
    if (l + 1 < p.layers.size()) {
      Vector d(a.size());
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        d(i) = activate(p.spec.activation, a(i), 1);
        a(i) = activate(p.spec.activation, a(i), 0);
      }
      jac = d.asDiagonal() * jac;
    }
    h = std::move(a);
  }
  return jac;
}

MlpNodes place_mlp(Tape& tape, const MlpParams& p, bool trainable) {
  MlpNodes net{p.spec, {}, {}};
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    if (trainable) {
      net.weights.push_back(tape.input(L.weight, "W" + std::to_string(l)));
      net.biases.push_back(tape.input(L.bias, "b" + std::to_string(l)));
    } else {
      net.weights.push_back(tape.constant(L.weight));
      net.biases.push_back(tape.constant(L.bias));
    }
  }
  return net;
}

NodeId mlp_forward_node(Tape& tape, const MlpNodes& net, NodeId x) {
  NodeId h = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    NodeId a = tape.add_row(tape.matmul_nt(h, net.weights[l]), net.biases[l]);
    h = (l + 1 < net.weights.size()) ? tape.activation(a, net.spec.activation, 0) : a;
  }
  return h;
}

namespace {

// Forward pass once, then push every tangent stream through the same pre-activations:
// u_{l+1} = sigma'(a_{l+1}) * (u_l W_{l+1}^T).
std::vector<NodeId> propagate_tangents(Tape& tape, const MlpNodes& net, NodeId z, std::vector<NodeId> tangents) {
  NodeId h = z;
  const std::size_t L = net.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    for (auto& u : tangents) u = tape.matmul_nt(u, net.weights[l]);
    if (l + 1 == L) break;
    NodeId a = tape.add_row(tape.matmul_nt(h, net.weights[l]), net.biases[l]);
    NodeId slope = tape.activation(a, net.spec.activation, 1);
    for (auto& u : tangents) u = tape.mul(slope, u);
    h = tape.activation(a, net.spec.activation, 0);
  }
  return tangents;
}

}  // namespace

NodeId mlp_jvp_node(Tape& tape, const MlpNodes& net, NodeId z, NodeId v) {
  return propagate_tangents(tape, net, z, {v}).front();
}

std::vector<NodeId> mlp_jacobian_columns_node(Tape& tape, const MlpNodes& net, NodeId z, std::size_t batch) {
  const std::size_t dim = net.spec.input_dim();
  std::vector<NodeId> basis;
  for (std::size_t i = 0; i < dim; ++i) {
    Tensor e({batch, dim});
    for (std::size_t b = 0; b < batch; ++b) e.at(b, i) = 1.0;
    basis.push_back(tape.constant(std::move(e)));
  }
  return propagate_tangents(tape, net, z, std::move(basis));
}

std::vector<Tensor> collect_gradients(const MlpNodes& net, const Gradients& grads) {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    out.push_back(grads.at(net.weights[l]));
    out.push_back(grads.at(net.biases[l]));
  }
  return out;
}

}  // namespace isoimm
