#pragma once

#include "isoimm/mlp.hpp"
#include "isoimm/rng.hpp"
#include "isoimm/tensor.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace isoimm {

/// Latent codes of a subset of a point cloud. Row b of `codes` belongs to cloud
/// point `source[b]`.
struct LatentBatch {
  Matrix codes;
  std::vector<std::size_t> source;

  std::size_t size() const { return static_cast<std::size_t>(codes.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(codes.cols()); }
  void validate() const;
};

/// A center point plus k sampled neighbors. Local index 0 is the center and
/// local index i >= 1 is members[i - 1]; `pairs` index into that local list.
struct NeighborhoodSample {
  std::size_t center_row = 0;           // row of the center in its batch
  std::vector<std::size_t> member_rows;  // batch rows, empty for ball samples
  Matrix points;                         // (k + 1) x m latent points, center first
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  std::size_t k() const { return static_cast<std::size_t>(points.rows()) - 1; }
};

/// All unordered pairs over {0, ..., n - 1}.
std::vector<std::pair<std::size_t, std::size_t>> all_pairs(std::size_t n);

/// The k nearest other rows to `center_row` by Euclidean distance; ties go to the lower row index.
NeighborhoodSample knn_neighborhood(const LatentBatch& latents, std::size_t center_row, std::size_t k);

/// knn_neighborhood for every row of the batch, sharing the distance computation.
std::vector<NeighborhoodSample> knn_neighborhoods(const Matrix& codes, std::size_t k);

/// k points drawn uniformly from the latent ball of `radius` around the center.
NeighborhoodSample ball_neighborhood(const LatentBatch& latents, std::size_t center_row, std::size_t k, double radius,
                                     Rng& rng);

/// Symmetric m x m metric at a latent center.
struct MetricTensor {
  Vector center;
  Matrix g;
};

MetricTensor pullback_metric(const MlpParams& phi, const Vector& z);

/// sqrt((p - q)^T g (p - q) + 1e-12).
double metric_distance(const MetricTensor& g, const Vector& p, const Vector& q);

struct LegitimacyReport {
  bool symmetric = false;
  double min_eig = 0.0;
  bool legal = false;
};

LegitimacyReport check_metric_legitimacy(const MetricTensor& g, double tol);

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.
struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // column i pairs with values(i)
  int sweeps = 0;
};

SymmetricEigen jacobi_eigen(const Matrix& a, double off_tol = 1e-12, int max_sweeps = 100);

/// |f_d(nb) - f_d(center) - J(center)(nb - center)|.
double taylor_remainder(const MlpParams& dec, const Vector& center, const Vector& nb);

/// CSV rows: index, latent coords, row-major g entries, min_eig.
std::string metric_field_csv(const LatentBatch& latents, const std::vector<MetricTensor>& field);

}  // namespace isoimm
