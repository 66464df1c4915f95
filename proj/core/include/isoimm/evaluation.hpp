#pragma once

#include "isoimm/datasets.hpp"
#include "isoimm/geometry.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace isoimm {

/// Mean over KNN-neighborhood pairs (in latent space) of
/// (metric distance at the center - ambient distance)^2. With no metric field
/// the identity metric is used.
double distortion_score(const PointCloud& ambient, const LatentBatch& latents,
                        const std::vector<MetricTensor>* metric_field, std::size_t k);

/// Whether ambient and latent distances order (i, j) against (i, k) the same way.
bool triplet_agrees(const Matrix& ambient, const Matrix& latent, std::size_t i, std::size_t j, std::size_t k);

double triplet_accuracy(const PointCloud& ambient, const LatentBatch& latents, std::size_t n_triplets,
                        std::uint64_t seed);

/// Ranks starting at 1, ties share their average rank.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Spearman correlation of two equally long samples. Returns 0 (and sets
/// `degenerate`) when either side has zero rank variance.
double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate = nullptr);

double spearman_corr(const PointCloud& ambient, const LatentBatch& latents, std::size_t n_pairs, std::uint64_t seed);

/// Mean over points of |kNN_ambient ∩ kNN_latent| / k.
double knn_preservation(const PointCloud& ambient, const LatentBatch& latents, std::size_t k);

struct PcaResult {
  Vector mean;
  Matrix components;  // s x m, columns in decreasing variance order
  Vector variances;   // all s eigenvalues of the covariance, decreasing
};

PcaResult pca(const PointCloud& cloud, std::size_t m);

/// Projection on the top-m principal directions; each direction's
/// largest-magnitude entry is made positive.
LatentBatch pca_embed(const PointCloud& cloud, std::size_t m);

struct EvalReport {
  double distortion = 0.0;
  double triplet = 0.0;
  double spearman = 0.0;
  double knn_preservation = 0.0;
  std::size_t k = 8;
  std::size_t n_triplets = 10000;
  std::size_t n_pairs = 10000;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::size_t k = 8;
  std::size_t n_triplets = 10000;
  std::size_t n_pairs = 10000;
  std::uint64_t seed = 0;
};

EvalReport evaluate_embedding(const PointCloud& ambient, const LatentBatch& latents,
                              const std::vector<MetricTensor>* metric_field, const EvalOptions& opts);

}  // namespace isoimm
