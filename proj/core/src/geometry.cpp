#include "isoimm/geometry.hpp"

#include "isoimm/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace isoimm {

void LatentBatch::validate() const {
  if (static_cast<std::size_t>(codes.rows()) != source.size()) {
    throw ShapeError("latent batch has " + std::to_string(codes.rows()) + " rows but " +
                     std::to_string(source.size()) + " source indices");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> all_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) pairs.emplace_back(p, q);
  }
  return pairs;
}

namespace {

NeighborhoodSample nearest_of(const Matrix& codes, std::size_t center, std::size_t k,
                              std::vector<std::pair<double, std::size_t>>& scratch) {
  const auto n = static_cast<std::size_t>(codes.rows());
  scratch.clear();
  for (std::size_t j = 0; j < n; ++j) {
    if (j == center) continue;
    double d2 = (codes.row(static_cast<Eigen::Index>(j)) - codes.row(static_cast<Eigen::Index>(center))).squaredNorm();
    scratch.emplace_back(d2, j);
  }
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());

  NeighborhoodSample nb;
  nb.center_row = center;
  nb.points.resize(static_cast<Eigen::Index>(k + 1), codes.cols());
  nb.points.row(0) = codes.row(static_cast<Eigen::Index>(center));
  for (std::size_t i = 0; i < k; ++i) {
    nb.member_rows.push_back(scratch[i].second);
    nb.points.row(static_cast<Eigen::Index>(i + 1)) = codes.row(static_cast<Eigen::Index>(scratch[i].second));
  }
  nb.pairs = all_pairs(k + 1);
  return nb;
}

void check_k(std::size_t k, std::size_t batch) {
  if (k < 1 || k >= batch) {
    throw std::invalid_argument("neighborhood size k = " + std::to_string(k) + " must satisfy 1 <= k < batch size " +
                                std::to_string(batch));
  }
}

}  // namespace

NeighborhoodSample knn_neighborhood(const LatentBatch& latents, std::size_t center_row, std::size_t k) {
  latents.validate();
  check_k(k, latents.size());
  if (center_row >= latents.size()) throw std::out_of_range("center row out of range");
  std::vector<std::pair<double, std::size_t>> scratch;
  return nearest_of(latents.codes, center_row, k, scratch);
}

std::vector<NeighborhoodSample> knn_neighborhoods(const Matrix& codes, std::size_t k) {
  const auto n = static_cast<std::size_t>(codes.rows());
  check_k(k, n);
  std::vector<NeighborhoodSample> out;
  out.reserve(n);
  std::vector<std::pair<double, std::size_t>> scratch;
  scratch.reserve(n);
  for (std::size_t c = 0; c < n; ++c) out.push_back(nearest_of(codes, c, k, scratch));
  return out;
}

NeighborhoodSample ball_neighborhood(const LatentBatch& latents, std::size_t center_row, std::size_t k, double radius,
                                     Rng& rng) {
  latents.validate();
  if (k < 1) throw std::invalid_argument("ball neighborhood needs k >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("ball radius must be positive");
  if (center_row >= latents.size()) throw std::out_of_range("center row out of range");

  const auto m = latents.codes.cols();
  NeighborhoodSample nb;
  nb.center_row = center_row;
  nb.points.resize(static_cast<Eigen::Index>(k + 1), m);
  nb.points.row(0) = latents.codes.row(static_cast<Eigen::Index>(center_row));
  for (std::size_t i = 1; i <= k; ++i) {
    Eigen::RowVectorXd dir(m);
    double norm = 0.0;
    while (norm < 1e-12) {
      for (Eigen::Index c = 0; c < m; ++c) dir(c) = rng.normal();
      norm = dir.norm();
    }
    double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(m));
    nb.points.row(static_cast<Eigen::Index>(i)) = nb.points.row(0) + (r / norm) * dir;
  }
  nb.pairs = all_pairs(k + 1);
  return nb;
}

MetricTensor pullback_metric(const MlpParams& phi, const Vector& z) {
  Matrix jac = mlp_jacobian(phi, z);
  if (!jac.allFinite()) throw NumericError("pullback_metric: non-finite Jacobian");
  Matrix g = jac.transpose() * jac;
  Matrix sym = 0.5 * (g + g.transpose());
  return {z, sym};
}

double metric_distance(const MetricTensor& g, const Vector& p, const Vector& q) {
  if (p.size() != g.g.rows() || q.size() != g.g.rows()) throw ShapeError("metric_distance: dimension mismatch");
  Vector d = p - q;
  double quad = d.dot(g.g * d);
  return std::sqrt(std::max(quad, 0.0) + 1e-12);
}

SymmetricEigen jacobi_eigen(const Matrix& input, double off_tol, int max_sweeps) {
  const auto n = input.rows();
  if (input.cols() != n) throw ShapeError("jacobi_eigen needs a square matrix");
  Matrix a = 0.5 * (input + input.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(1.0, a.norm());

  auto off_mass = [&]() {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep < max_sweeps && off_mass() >= off_tol * scale; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        // Rotation angle zeroing a(p, q).
        double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  out.sweeps = sweep;
  return out;
}

LegitimacyReport check_metric_legitimacy(const MetricTensor& g, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("legitimacy tolerance must be positive");
  LegitimacyReport r;
  r.symmetric = (g.g - g.g.transpose()).cwiseAbs().maxCoeff() <= 1e-12;
  r.min_eig = jacobi_eigen(g.g).values(0);
  r.legal = r.symmetric && r.min_eig > tol;
  return r;
}

double taylor_remainder(const MlpParams& dec, const Vector& center, const Vector& nb) {
  if (center.size() != nb.size()) throw ShapeError("taylor_remainder: dimension mismatch");
  Vector linear = mlp_forward(dec, center) + mlp_jacobian(dec, center) * (nb - center);
  return (mlp_forward(dec, nb) - linear).norm();
}

std::string metric_field_csv(const LatentBatch& latents, const std::vector<MetricTensor>& field) {
  latents.validate();
  if (field.size() != latents.size()) throw ShapeError("metric field size differs from latent batch");
  const auto m = latents.codes.cols();
  std::ostringstream os;
  os << "index";
  for (Eigen::Index c = 0; c < m; ++c) os << ",z" << c;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) os << ",g" << i << j;
  os << ",min_eig\n";
  for (std::size_t r = 0; r < latents.size(); ++r) {
    os << latents.source[r];
    for (Eigen::Index c = 0; c < m; ++c) os << ',' << format_double(latents.codes(static_cast<Eigen::Index>(r), c));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) os << ',' << format_double(field[r].g(i, j));
    os << ',' << format_double(jacobi_eigen(field[r].g).values(0)) << '\n';
  }
  return os.str();
}

}  // namespace isoimm
