#include "isoimm/evaluation.hpp"

#include "isoimm/losses.hpp"
#include "isoimm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace isoimm {

namespace {

void check_rows(const PointCloud& ambient, const LatentBatch& latents) {
  latents.validate();
  if (latents.size() != ambient.size()) {
    throw ShapeError("embedding has " + std::to_string(latents.size()) + " rows but the cloud has " +
                     std::to_string(ambient.size()));
  }
  for (auto s : latents.source) {
    if (s >= ambient.size()) throw std::out_of_range("latent source index outside the cloud");
  }
}

Eigen::RowVectorXd ambient_row(const PointCloud& ambient, const LatentBatch& latents, std::size_t r) {
  return ambient.points.row(static_cast<Eigen::Index>(latents.source[r]));
}

double dist(const Matrix& x, std::size_t i, std::size_t j) {
  return (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
}

/// Ambient rows reordered to match latent rows.
Matrix aligned_ambient(const PointCloud& ambient, const LatentBatch& latents) {
  Matrix a(static_cast<Eigen::Index>(latents.size()), ambient.points.cols());
  for (std::size_t r = 0; r < latents.size(); ++r) a.row(static_cast<Eigen::Index>(r)) = ambient_row(ambient, latents, r);
  return a;
}

std::vector<std::size_t> nearest(const Matrix& x, std::size_t i, std::size_t k,
                                 std::vector<std::pair<double, std::size_t>>& scratch) {
  scratch.clear();
  for (std::size_t j = 0; j < static_cast<std::size_t>(x.rows()); ++j) {
    if (j != i) scratch.emplace_back((x.row(static_cast<Eigen::Index>(j)) - x.row(static_cast<Eigen::Index>(i))).squaredNorm(), j);
  }
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < k; ++t) out.push_back(scratch[t].second);
  std::sort(out.begin(), out.end());
  return out;
}

int sign(double v) { return (v > 0) - (v < 0); }

}  // namespace

double distortion_score(const PointCloud& ambient, const LatentBatch& latents,
                        const std::vector<MetricTensor>* metric_field, std::size_t k) {
  check_rows(ambient, latents);
  if (metric_field && metric_field->size() != latents.size()) {
    throw ShapeError("metric field size differs from the number of latent rows");
  }
  const Matrix amb = aligned_ambient(ambient, latents);
  const auto neighborhoods = knn_neighborhoods(latents.codes, k);
  const MetricTensor identity{Vector::Zero(latents.codes.cols()),
                              Matrix::Identity(latents.codes.cols(), latents.codes.cols())};
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& nb : neighborhoods) {
    const MetricTensor& g = metric_field ? (*metric_field)[nb.center_row] : identity;
    auto row = [&](std::size_t local) { return local == 0 ? nb.center_row : nb.member_rows[local - 1]; };
    for (auto [p, q] : nb.pairs) {
      double md = metric_distance(g, nb.points.row(static_cast<Eigen::Index>(p)).transpose(),
                                  nb.points.row(static_cast<Eigen::Index>(q)).transpose());
      double ad = std::sqrt((amb.row(static_cast<Eigen::Index>(row(p))) - amb.row(static_cast<Eigen::Index>(row(q)))).squaredNorm() +
                            kNormSmoothing);
      total += (md - ad) * (md - ad);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

bool triplet_agrees(const Matrix& ambient, const Matrix& latent, std::size_t i, std::size_t j, std::size_t k) {
  return sign(dist(ambient, i, j) - dist(ambient, i, k)) == sign(dist(latent, i, j) - dist(latent, i, k));
}

double triplet_accuracy(const PointCloud& ambient, const LatentBatch& latents, std::size_t n_triplets,
                        std::uint64_t seed) {
  check_rows(ambient, latents);
  const std::size_t n = latents.size();
  if (n < 3) throw std::invalid_argument("triplet_accuracy needs at least 3 points");
  if (n_triplets == 0) throw std::invalid_argument("triplet_accuracy needs n_triplets >= 1");
  const Matrix amb = aligned_ambient(ambient, latents);
  Rng rng(seed, "triplets");
  std::size_t agree = 0;
  for (std::size_t t = 0; t < n_triplets; ++t) {
    std::size_t i = rng.below(n), j, k;
    do j = rng.below(n); while (j == i);
    do k = rng.below(n); while (k == i || k == j);
    if (triplet_agrees(amb, latents.codes, i, j, k)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(n_triplets);
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("spearman needs two nonempty samples of equal size");
  auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  Eigen::Map<Eigen::VectorXd> x(ra.data(), static_cast<Eigen::Index>(ra.size()));
  Eigen::Map<Eigen::VectorXd> y(rb.data(), static_cast<Eigen::Index>(rb.size()));
  Eigen::VectorXd xc = x.array() - x.mean();
  Eigen::VectorXd yc = y.array() - y.mean();
  double denom = std::sqrt(xc.squaredNorm() * yc.squaredNorm());
  if (degenerate) *degenerate = denom == 0.0;
  if (denom == 0.0) return 0.0;
  return std::clamp(xc.dot(yc) / denom, -1.0, 1.0);
}

double spearman_corr(const PointCloud& ambient, const LatentBatch& latents, std::size_t n_pairs, std::uint64_t seed) {
  check_rows(ambient, latents);
  const std::size_t n = latents.size();
  if (n < 2) throw std::invalid_argument("spearman_corr needs at least 2 points");
  if (n_pairs == 0) throw std::invalid_argument("spearman_corr needs n_pairs >= 1");
  const Matrix amb = aligned_ambient(ambient, latents);
  Rng rng(seed, "pairs");
  std::vector<double> da, dl;
  da.reserve(n_pairs);
  dl.reserve(n_pairs);
  for (std::size_t t = 0; t < n_pairs; ++t) {
    std::size_t i = rng.below(n), j;
    do j = rng.below(n); while (j == i);
    da.push_back(dist(amb, i, j));
    dl.push_back(dist(latents.codes, i, j));
  }
  bool degenerate = false;
  double rho = spearman_rank_correlation(da, dl, &degenerate);
  if (degenerate) std::cerr << "warning: spearman_corr: zero rank variance, reporting 0\n";
  return rho;
}

double knn_preservation(const PointCloud& ambient, const LatentBatch& latents, std::size_t k) {
  check_rows(ambient, latents);
  const std::size_t n = latents.size();
  if (k < 1 || k >= n) throw std::invalid_argument("knn_preservation needs 1 <= k < N");
  const Matrix amb = aligned_ambient(ambient, latents);
  std::vector<std::pair<double, std::size_t>> scratch;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto a = nearest(amb, i, k, scratch);
    auto l = nearest(latents.codes, i, k, scratch);
    std::vector<std::size_t> common;
    std::set_intersection(a.begin(), a.end(), l.begin(), l.end(), std::back_inserter(common));
    total += static_cast<double>(common.size()) / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

PcaResult pca(const PointCloud& cloud, std::size_t m) {
  cloud.validate();
  if (m < 1 || m > cloud.dim()) throw std::invalid_argument("PCA dimension must satisfy 1 <= m <= s");
  PcaResult r;
  r.mean = cloud.points.colwise().mean().transpose();
  Matrix centered = cloud.points.rowwise() - r.mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(cloud.size());
  SymmetricEigen eig = jacobi_eigen(cov);
  const auto s = static_cast<Eigen::Index>(cloud.dim());
  r.variances.resize(s);
  for (Eigen::Index i = 0; i < s; ++i) r.variances(i) = eig.values(s - 1 - i);
  r.components.resize(s, static_cast<Eigen::Index>(m));
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(m); ++c) {
    Vector dir = eig.vectors.col(s - 1 - c);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < s; ++i) {
      if (std::abs(dir(i)) > std::abs(dir(arg))) arg = i;
    }
    if (dir(arg) < 0) dir = -dir;
    r.components.col(c) = dir;
  }
  return r;
}

LatentBatch pca_embed(const PointCloud& cloud, std::size_t m) {
  PcaResult r = pca(cloud, m);
  LatentBatch out;
  out.codes = (cloud.points.rowwise() - r.mean.transpose()) * r.components;
  out.source.resize(cloud.size());
  std::iota(out.source.begin(), out.source.end(), 0);
  return out;
}

EvalReport evaluate_embedding(const PointCloud& ambient, const LatentBatch& latents,
                              const std::vector<MetricTensor>* metric_field, const EvalOptions& opts) {
  EvalReport r;
  r.k = opts.k;
  r.n_triplets = opts.n_triplets;
  r.n_pairs = opts.n_pairs;
  r.seed = opts.seed;
  r.distortion = distortion_score(ambient, latents, metric_field, opts.k);
  r.triplet = triplet_accuracy(ambient, latents, opts.n_triplets, opts.seed);
  r.spearman = spearman_corr(ambient, latents, opts.n_pairs, opts.seed);
  r.knn_preservation = knn_preservation(ambient, latents, opts.k);
  return r;
}

}  // namespace isoimm
