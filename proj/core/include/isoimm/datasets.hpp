#pragma once

#include "isoimm/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

namespace isoimm {

/// N samples in R^s, one per row.
struct PointCloud {
  Matrix points;
  std::string provenance;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }
  void validate() const;
};

/// (t cos t, y, t sin t) with t ~ U[1.5 pi, 4.5 pi], y ~ U[0, 21].
PointCloud gen_swiss_roll(std::size_t n, std::uint64_t seed);

/// Uniform on the sphere of the given radius (normalized Gaussian draws).
PointCloud gen_sphere(std::size_t n, double radius, std::uint64_t seed);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// One point per nonempty line; values separated by whitespace and/or commas.
PointCloud parse_xyz(const std::string& text, const std::string& provenance = "text");
PointCloud load_xyz(const std::filesystem::path& path);

/// Space-separated rows with round-trip precision.
std::string to_xyz(const PointCloud& cloud);
void save_xyz(const std::filesystem::path& path, const PointCloud& cloud);

/// x_normalized = (x - center) / scale
struct NormalizeTransform {
  Vector center;
  double scale = 1.0;

  Matrix apply(const Matrix& x) const;
  Matrix invert(const Matrix& y) const;
};

/// Centers on the mean and divides by the largest absolute coordinate (one
/// scalar for all axes, so distance ratios are preserved).
std::pair<PointCloud, NormalizeTransform> normalize(const PointCloud& cloud);

/// Seeded shuffle then partition into (train, holdout).
std::pair<PointCloud, PointCloud> split(const PointCloud& cloud, double holdout_fraction, std::uint64_t seed);

}  // namespace isoimm
