#include "isoimm/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace isoimm {

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("loss weight ") + name + " must be >= 0");
  };
  check(alpha, "alpha");
  check(beta, "beta");
  check(gamma, "gamma");
  check(epsilon, "epsilon");
}

NodeId loss_re(Tape& tape, NodeId x, NodeId x_rec) { return tape.mean(tape.square(tape.sub(x, x_rec))); }

NodeId loss_tm(Tape& tape, NodeId decoded, const PairList& pairs) {
  if (pairs.empty()) throw std::invalid_argument("loss_tm: empty pair set");
  std::vector<std::size_t> ps, qs;
  ps.reserve(pairs.size());
  qs.reserve(pairs.size());
  for (auto [p, q] : pairs) {
    ps.push_back(p);
    qs.push_back(q);
  }
  NodeId diff = tape.sub(tape.gather_rows(decoded, std::move(ps)), tape.gather_rows(decoded, std::move(qs)));
  return tape.mean(tape.row_norm(diff, kNormSmoothing));
}

IsometryPairs isometry_pairs(const std::vector<NeighborhoodSample>& neighborhoods, const std::vector<Matrix>& points,
                             const std::vector<Matrix>& decoded) {
  if (points.size() != neighborhoods.size() || decoded.size() != neighborhoods.size()) {
    throw ShapeError("isometry_pairs: one point set and one decoded set per neighborhood required");
  }
  std::size_t total = 0;
  for (const auto& nb : neighborhoods) total += nb.pairs.size();
  if (total == 0) throw std::invalid_argument("isometry_pairs: empty pair set");

  const Eigen::Index m = points.front().cols();
  IsometryPairs out;
  out.center.reserve(total);
  out.displacement.resize(static_cast<Eigen::Index>(total), m);
  out.decoded_distance.resize(static_cast<Eigen::Index>(total));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < neighborhoods.size(); ++i) {
    const Matrix& z = points[i];
    const Matrix& d = decoded[i];
    if (z.rows() != d.rows()) throw ShapeError("isometry_pairs: latent and decoded point counts differ");
    for (auto [p, q] : neighborhoods[i].pairs) {
      auto P = static_cast<Eigen::Index>(p), Q = static_cast<Eigen::Index>(q);
      out.center.push_back(i);
      out.displacement.row(row) = z.row(P) - z.row(Q);
      out.decoded_distance(row) = std::sqrt((d.row(P) - d.row(Q)).squaredNorm() + kNormSmoothing);
      ++row;
    }
  }
  return out;
}

NodeId loss_is(Tape& tape, const std::vector<NodeId>& jacobian_columns, const IsometryPairs& pairs) {
  if (pairs.size() == 0) throw std::invalid_argument("loss_is: empty pair set");
  if (static_cast<std::size_t>(pairs.displacement.cols()) != jacobian_columns.size()) {
    throw ShapeError("loss_is: displacement dim differs from number of Jacobian columns");
  }
  const Eigen::Index P = static_cast<Eigen::Index>(pairs.size());
  // J d = sum_i d_i (J e_i), each column evaluated at the pair's center.
  NodeId jd = 0;
  for (std::size_t i = 0; i < jacobian_columns.size(); ++i) {
    Tensor coeff({pairs.size()});
    coeff.matrix() = pairs.displacement.col(static_cast<Eigen::Index>(i));
    NodeId term = tape.row_scale(tape.gather_rows(jacobian_columns[i], pairs.center), tape.constant(std::move(coeff)));
    jd = i == 0 ? term : tape.add(jd, term);
  }
  Tensor target({pairs.size()});
  target.matrix() = pairs.decoded_distance.head(P);
  NodeId gap = tape.sub(tape.row_norm(jd, kNormSmoothing), tape.constant(std::move(target)));
  return tape.mean(tape.square(gap));
}

NodeId loss_dual(Tape& tape, NodeId out_d, NodeId out_phi) {
  return tape.mean(tape.row_norm(tape.sub(out_d, out_phi), kNormSmoothing));
}

NodeId loss_immersion(Tape& tape, NodeId l_re, NodeId l_tm, NodeId l_du, const LossWeights& w) {
  return tape.add(tape.add(tape.scale(l_re, w.alpha), tape.scale(l_tm, w.beta)), tape.scale(l_du, w.gamma));
}

NodeId loss_isometry(Tape& tape, NodeId l_is, NodeId l_du, const LossWeights& w) {
  return tape.add(tape.scale(l_is, w.epsilon), tape.scale(l_du, w.gamma));
}

}  // namespace isoimm
