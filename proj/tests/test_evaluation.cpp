#include "doctest.h"

#include "isoimm/evaluation.hpp"
#include "isoimm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace isoimm;

namespace {

LatentBatch as_latents(const Matrix& codes) {
  LatentBatch lb{codes, {}};
  lb.source.resize(static_cast<std::size_t>(codes.rows()));
  std::iota(lb.source.begin(), lb.source.end(), 0);
  return lb;
}

PointCloud cloud_of(const Matrix& m) { return {m, "test"}; }

Matrix random_points(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix rotate2(const Matrix& z, double angle, double tx, double ty) {
  Matrix r{{std::cos(angle), -std::sin(angle)}, {std::sin(angle), std::cos(angle)}};
  Matrix out = z * r.transpose();
  out.col(0).array() += tx;
  out.col(1).array() += ty;
  return out;
}

// Brute-force kNN preservation with the same lowest-index tie rule.
double brute_knn(const Matrix& a, const Matrix& b, std::size_t k) {
  const auto n = static_cast<std::size_t>(a.rows());
  auto nearest = [&](const Matrix& x, std::size_t i) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) idx.push_back(j);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t p, std::size_t q) {
      return (x.row(p) - x.row(i)).squaredNorm() < (x.row(q) - x.row(i)).squaredNorm();
    });
    return std::set<std::size_t>(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto sa = nearest(a, i), sb = nearest(b, i);
    std::size_t common = 0;
    for (std::size_t j : sa) common += sb.count(j);
    total += static_cast<double>(common) / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("distortion_score") {
  Rng rng(1, "dist");
  SUBCASE("identity embedding with the identity metric") {
    Matrix x = random_points(rng, 30, 2);
    CHECK(distortion_score(cloud_of(x), as_latents(x), nullptr, 8) <= 1e-12);
  }
  SUBCASE("doubled 1-D line, one pair") {
    CHECK(distortion_score(cloud_of(Matrix{{0.0}, {1.0}}), as_latents(Matrix{{0.0}, {2.0}}), nullptr, 1) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("a metric field that undoes the stretch gives zero") {
    Matrix x = random_points(rng, 20, 2);
    std::vector<MetricTensor> field;
    for (Eigen::Index i = 0; i < 20; ++i) field.push_back({Vector(x.row(i).transpose() * 3.0), Matrix::Identity(2, 2) / 9.0});
    double stretched = distortion_score(cloud_of(x), as_latents(3.0 * x), nullptr, 5);
    double corrected = distortion_score(cloud_of(x), as_latents(3.0 * x), &field, 5);
    CHECK(stretched > 0.1);
    CHECK(corrected <= 1e-12);
  }
  SUBCASE("errors") {
    Matrix x = random_points(rng, 5, 2);
    CHECK_THROWS_AS(distortion_score(cloud_of(x), as_latents(x.topRows(4)), nullptr, 2), ShapeError);
  }
}

TEST_CASE("triplet_accuracy") {
  Rng rng(2, "trip");
  Matrix x = random_points(rng, 200, 3);
  CHECK(triplet_accuracy(cloud_of(x), as_latents(x), 10000, 1) == 1.0);

  double null = triplet_accuracy(cloud_of(x), as_latents(random_points(rng, 200, 2)), 10000, 1);
  CHECK(std::abs(null - 0.5) <= 0.05);

  Matrix amb{{0.0}, {1.0}, {2.0}};
  Matrix lat{{0.0}, {2.0}, {1.0}};
  CHECK_FALSE(triplet_agrees(amb, lat, 0, 1, 2));
  CHECK(triplet_agrees(amb, amb, 0, 1, 2));

  Matrix z = random_points(rng, 200, 2);
  double before = triplet_accuracy(cloud_of(x), as_latents(z), 5000, 3);
  CHECK(triplet_accuracy(cloud_of(x), as_latents(rotate2(z, 0.7, 3.0, -1.0)), 5000, 3) == doctest::Approx(before));
  CHECK(triplet_accuracy(cloud_of(x), as_latents(z), 5000, 3) == before);
}

TEST_CASE("spearman") {
  SUBCASE("rank formula examples") {
    CHECK(spearman_rank_correlation({1, 2, 3, 4}, {2, 1, 3, 4}) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(spearman_rank_correlation({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(average_ranks({10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
    bool degenerate = false;
    CHECK(spearman_rank_correlation({1, 1, 1}, {1, 2, 3}, &degenerate) == 0.0);
    CHECK(degenerate);
  }
  SUBCASE("monotone invariance") {
    Rng rng(3, "sp");
    std::vector<double> a, b;
    for (int i = 0; i < 50; ++i) {
      a.push_back(rng.uniform(0.1, 3));
      b.push_back(a.back() + rng.normal());
    }
    double base = spearman_rank_correlation(a, b);
    std::vector<double> ta, tb;
    for (double v : a) ta.push_back(std::exp(v));
    for (double v : b) tb.push_back(v * v * v + 2 * v);
    CHECK(spearman_rank_correlation(ta, tb) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("positive scaling of the embedding") {
    Rng rng(4, "sp");
    Matrix x = random_points(rng, 100, 3);
    CHECK(spearman_corr(cloud_of(x), as_latents(2.5 * x), 2000, 7) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("knn_preservation") {
  Rng rng(5, "knn");
  Matrix x = random_points(rng, 40, 2);
  CHECK(knn_preservation(cloud_of(x), as_latents(x), 5) == 1.0);
  CHECK(knn_preservation(cloud_of(x), as_latents(random_points(rng, 40, 2)), 39) == 1.0);

  Matrix line{{0.0}, {1.0}, {2.0}, {3.0}};
  Matrix swapped{{0.0}, {2.0}, {1.0}, {3.0}};
  CHECK(knn_preservation(cloud_of(line), as_latents(swapped), 2) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(knn_preservation(cloud_of(line), as_latents(swapped), 2) == brute_knn(line, swapped, 2));

  Matrix z = random_points(rng, 40, 2);
  double base = knn_preservation(cloud_of(x), as_latents(z), 6);
  CHECK(base == doctest::Approx(brute_knn(x, z, 6)));
  CHECK(knn_preservation(cloud_of(x), as_latents(rotate2(z, -1.1, 0.5, 4.0)), 6) == base);
  CHECK_THROWS(knn_preservation(cloud_of(x), as_latents(x), 40));
}

TEST_CASE("pca") {
  Rng rng(6, "pca");
  SUBCASE("data in a plane is reconstructed exactly") {
    Matrix basis{{1, 2, 0}, {0, 1, -1}};
    Matrix coeffs = random_points(rng, 50, 2);
    Matrix x = coeffs * basis;
    x.rowwise() += Eigen::RowVector3d(1, -2, 3);
    PointCloud c = cloud_of(x);
    PcaResult p = pca(c, 2);
    LatentBatch z = pca_embed(c, 2);
    Matrix rec = z.codes * p.components.transpose();
    rec.rowwise() += p.mean.transpose();
    CHECK((rec - x).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("isotropic data keeps about m/s of the variance") {
    PcaResult p = pca(cloud_of(random_points(rng, 20000, 3)), 2);
    CHECK(p.variances.head(2).sum() / p.variances.sum() == doctest::Approx(2.0 / 3.0).epsilon(0.02));
  }
  SUBCASE("points on y = x") {
    Matrix x(20, 2);
    for (Eigen::Index i = 0; i < 20; ++i) x.row(i).setConstant(static_cast<double>(i) * 0.3 - 2.0);
    PcaResult p = pca(cloud_of(x), 1);
    CHECK(p.components(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(p.components(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("sign convention") {
    Matrix x = random_points(rng, 60, 3);
    PcaResult p = pca(cloud_of(x), 3);
    for (Eigen::Index c = 0; c < 3; ++c) {
      Eigen::Index arg;
      p.components.col(c).cwiseAbs().maxCoeff(&arg);
      CHECK(p.components(arg, c) > 0.0);
    }
    CHECK_THROWS(pca(cloud_of(x), 4));
  }
}

TEST_CASE("evaluate_embedding report ranges") {
  Rng rng(7, "report");
  Matrix x = random_points(rng, 80, 3);
  EvalOptions opts;
  opts.n_triplets = 2000;
  opts.n_pairs = 2000;
  EvalReport r = evaluate_embedding(cloud_of(x), pca_embed(cloud_of(x), 2), nullptr, opts);
  CHECK(r.distortion >= 0.0);
  CHECK(r.triplet >= 0.0);
  CHECK(r.triplet <= 1.0);
  CHECK(r.spearman >= -1.0);
  CHECK(r.spearman <= 1.0);
  CHECK(r.knn_preservation >= 0.0);
  CHECK(r.knn_preservation <= 1.0);
  CHECK(r.k == 8);
}
