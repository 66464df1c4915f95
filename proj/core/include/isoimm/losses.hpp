#pragma once

#include "isoimm/geometry.hpp"
#include "isoimm/tape.hpp"

#include <utility>
#include <vector>

namespace isoimm {

struct LossWeights {
  double alpha = 1.0;    // reconstruction
  double beta = 0.1;     // tangent-space approximation
  double gamma = 0.1;    // soft dual bond
  double epsilon = 1.0;  // isometry

  void validate() const;
};

struct LossReport {
  double l_re = 0.0;
  double l_tm = 0.0;
  double l_is = 0.0;
  double l_du = 0.0;
  double l_immersion = 0.0;
  double l_isometry = 0.0;
};

using PairList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Mean over batch and coordinates of (x - x_rec)^2.
NodeId loss_re(Tape& tape, NodeId x, NodeId x_rec);

/// Mean smoothed distance between decoded rows p and q over all pairs.
NodeId loss_tm(Tape& tape, NodeId decoded, const PairList& pairs);

/// Constant side of the isometry loss: for every pair, the neighborhood whose
/// center metric applies, the latent displacement z_p - z_q, and the smoothed
/// decoded distance |f_d(z_p) - f_d(z_q)| computed with the decoder frozen.
struct IsometryPairs {
  std::vector<std::size_t> center;
  Matrix displacement;  // P x m
  Vector decoded_distance;

  std::size_t size() const { return center.size(); }
};

/// Collects pairs from every neighborhood. `points[i]` and `decoded[i]` hold the
/// latent and decoded points of neighborhood i, center first.
IsometryPairs isometry_pairs(const std::vector<NeighborhoodSample>& neighborhoods, const std::vector<Matrix>& points,
                             const std::vector<Matrix>& decoded);

/// Mean over pairs of (sqrt(d^T J^T J d + 1e-12) - decoded distance)^2, with J the
/// Jacobian at the pair's center supplied as tape columns (one node per latent
/// coordinate, rows indexed by center).
NodeId loss_is(Tape& tape, const std::vector<NodeId>& jacobian_columns, const IsometryPairs& pairs);

/// Mean over rows of the smoothed norm of out_d - out_phi.
NodeId loss_dual(Tape& tape, NodeId out_d, NodeId out_phi);

/// alpha * l_re + beta * l_tm + gamma * l_du
NodeId loss_immersion(Tape& tape, NodeId l_re, NodeId l_tm, NodeId l_du, const LossWeights& w);

/// epsilon * l_is + gamma * l_du
NodeId loss_isometry(Tape& tape, NodeId l_is, NodeId l_du, const LossWeights& w);

/// Smoothed Euclidean norm used by every unsquared distance in the losses.
inline constexpr double kNormSmoothing = 1e-12;

}  // namespace isoimm
