#pragma once

#include "isoimm/activation.hpp"
#include "isoimm/tape.hpp"
#include "isoimm/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace isoimm {

/// Layer widths [d0, ..., dL] and the hidden activation. The output layer is affine.
struct MlpSpec {
  std::vector<std::size_t> layer_dims;
  ActivationKind activation = ActivationKind::Tanh;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpParams {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  void validate() const;
  std::size_t parameter_count() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Glorot-uniform weights, zero biases. Deterministic in (spec, seed).
MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed);

/// Row-batched evaluation: x is B x d0, result is B x dL.
Matrix mlp_forward(const MlpParams& p, const Matrix& x);
Vector mlp_forward(const MlpParams& p, const Vector& x);

/// Exact Jacobian dL x d0 at a single point.
Matrix mlp_jacobian(const MlpParams& p, const Vector& z);

/// Parameters of one network placed on a tape, either as differentiable inputs
/// or as constants.
struct MlpNodes {
  MlpSpec spec;
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
};

MlpNodes place_mlp(Tape& tape, const MlpParams& p, bool trainable);

/// Forward pass on the tape for a row batch.
NodeId mlp_forward_node(Tape& tape, const MlpNodes& net, NodeId x);

/// J(z_b) * v_b for every row b of the batches z and v (both B x d0); result B x dL.
///
/// Built from activation-derivative nodes, so the result is differentiable with
/// respect to the network parameters.
NodeId mlp_jvp_node(Tape& tape, const MlpNodes& net, NodeId z, NodeId v);

/// Columns of the Jacobian at every row of z (B x d0): element i is the B x dL
/// node whose row b is J(z_b) e_i. One forward pass is shared by all columns.
std::vector<NodeId> mlp_jacobian_columns_node(Tape& tape, const MlpNodes& net, NodeId z, std::size_t batch);

/// Pull gradients of a placed network back into parameter layout.
std::vector<Tensor> collect_gradients(const MlpNodes& net, const Gradients& grads);

}  // namespace isoimm
