#include "isoimm/datasets.hpp"

#include "isoimm/io.hpp"
#include "isoimm/rng.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <vector>

namespace isoimm {

void PointCloud::validate() const {
  if (points.rows() < 1 || points.cols() < 1) throw std::invalid_argument("point cloud must have N >= 1 and s >= 1");
  if (!points.allFinite()) throw std::invalid_argument("point cloud contains non-finite values");
}

PointCloud gen_swiss_roll(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_swiss_roll needs n >= 1");
  Rng rng(seed, "swiss_roll");
  PointCloud cloud{Matrix(static_cast<Eigen::Index>(n), 3), "swiss_roll(n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")"};
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    double t = rng.uniform(1.5 * std::numbers::pi, 4.5 * std::numbers::pi);
    double y = rng.uniform(0.0, 21.0);
    cloud.points.row(i) << t * std::cos(t), y, t * std::sin(t);
  }
  return cloud;
}

PointCloud gen_sphere(std::size_t n, double radius, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_sphere needs n >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("gen_sphere needs radius > 0");
  Rng rng(seed, "sphere");
  PointCloud cloud{Matrix(static_cast<Eigen::Index>(n), 3), "sphere(n=" + std::to_string(n) + ",radius=" + format_double(radius) +
                                                               ",seed=" + std::to_string(seed) + ")"};
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    Eigen::RowVector3d g;
    do {
      g << rng.normal(), rng.normal(), rng.normal();
    } while (g.norm() < 1e-12);
    cloud.points.row(i) = radius * g / g.norm();
  }
  return cloud;
}

PointCloud parse_xyz(const std::string& text, const std::string& provenance) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t count = 0;
    std::size_t i = 0;
    while (i < line.size()) {
      char c = line[i];
      if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
        ++i;
        continue;
      }
      std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != ',' && line[i] != '\r') ++i;
      std::string_view token(line.data() + start, i - start);
      double v = 0.0;
      auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(v)) {
        throw ParseError(provenance + ": line " + std::to_string(line_no) + ", column " + std::to_string(start + 1) +
                             ": cannot parse '" + std::string(token) + "' as a real number",
                         line_no, start + 1);
      }
      values.push_back(v);
      ++count;
    }
    if (count == 0) continue;
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw ParseError(provenance + ": line " + std::to_string(line_no) + " has " + std::to_string(count) +
                           " values, expected " + std::to_string(cols),
                       line_no, 0);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(provenance + ": no points found", 0, 0);
  PointCloud cloud{Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                   provenance};
  return cloud;
}

PointCloud load_xyz(const std::filesystem::path& path) { return parse_xyz(read_text_file(path), path.string()); }

std::string to_xyz(const PointCloud& cloud) {
  std::string out;
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    for (Eigen::Index j = 0; j < cloud.points.cols(); ++j) {
      if (j) out += ' ';
      out += format_double(cloud.points(i, j));
    }
    out += '\n';
  }
  return out;
}

void save_xyz(const std::filesystem::path& path, const PointCloud& cloud) { write_text_file(path, to_xyz(cloud)); }

Matrix NormalizeTransform::apply(const Matrix& x) const {
  return (x.rowwise() - center.transpose()) / scale;
}

Matrix NormalizeTransform::invert(const Matrix& y) const {
  return (y * scale).rowwise() + center.transpose();
}

std::pair<PointCloud, NormalizeTransform> normalize(const PointCloud& cloud) {
  cloud.validate();
  NormalizeTransform tf;
  tf.center = cloud.points.colwise().mean().transpose();
  Matrix centered = cloud.points.rowwise() - tf.center.transpose();
  tf.scale = centered.cwiseAbs().maxCoeff();
  if (!(tf.scale > 0.0)) throw std::invalid_argument("cannot normalize a cloud whose points are all identical");
  PointCloud out{centered / tf.scale, cloud.provenance};
  return {out, tf};
}

std::pair<PointCloud, PointCloud> split(const PointCloud& cloud, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout fraction must lie in [0, 1)");
  }
  const std::size_t n = cloud.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, "split");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  auto n_hold = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(n)));
  const std::size_t n_train = n - n_hold;

  auto take = [&](std::size_t from, std::size_t count, const std::string& tag) {
    PointCloud part{Matrix(static_cast<Eigen::Index>(count), cloud.points.cols()), cloud.provenance + tag};
    for (std::size_t i = 0; i < count; ++i) {
      part.points.row(static_cast<Eigen::Index>(i)) = cloud.points.row(static_cast<Eigen::Index>(order[from + i]));
    }
    return part;
  };
  return {take(0, n_train, "[train]"), take(n_train, n_hold, "[holdout]")};
}

}  // namespace isoimm
