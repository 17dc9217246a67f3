#pragma once

// r-uniformly discrete point sets: centers whose open r-balls are pairwise disjoint.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gwb/grid.hpp"

namespace gwb {

using LatticeLabel = std::array<long, kMaxDim>;

inline double min_pairwise_distance(std::span<const Point> points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::min(best, distance_squared(points[i], points[j]));
  }
  return std::sqrt(best);
}

/// True iff every pair of points is at distance >= 2r. Exact comparison.
inline bool verify_uniform_discreteness(std::span<const Point> points, double r) {
  if (!(r > 0.0)) throw Error("discreteness radius must be positive");
  if (points.size() < 2) return true;
  return min_pairwise_distance(points) >= 2.0 * r;
}

/// Half the minimal pairwise distance.
inline double max_discreteness_radius(std::span<const Point> points) {
  if (points.size() < 2) throw Error("discreteness radius needs at least 2 points");
  return min_pairwise_distance(points) / 2.0;
}

class UniformlyDiscreteSet {
 public:
  UniformlyDiscreteSet() = default;

  UniformlyDiscreteSet(int dim, std::vector<Point> centers, double radius, std::vector<LatticeLabel> labels = {})
      : dim_(dim), centers_(std::move(centers)), radius_(radius), labels_(std::move(labels)) {
    if (!labels_.empty() && labels_.size() != centers_.size()) throw Error("label count does not match center count");
    if (!verify_uniform_discreteness(centers_, radius_)) throw Error("centers are not uniformly discrete at the given radius");
  }

  /// Radius taken as half the minimal distance (or `fallback` for a single center).
  static UniformlyDiscreteSet with_max_radius(int dim, std::vector<Point> centers, std::vector<LatticeLabel> labels = {},
                                              double fallback = 0.5) {
    const double r = centers.size() >= 2 ? max_discreteness_radius(centers) : fallback;
    if (!(r > 0.0)) throw Error("duplicate centers");
    return UniformlyDiscreteSet(dim, std::move(centers), r, std::move(labels));
  }

  /// Skips the O(n^2) check; for sets whose radius is known analytically (scaled lattices).
  static UniformlyDiscreteSet trusted(int dim, std::vector<Point> centers, double radius,
                                      std::vector<LatticeLabel> labels = {}) {
    UniformlyDiscreteSet out;
    out.dim_ = dim;
    out.centers_ = std::move(centers);
    out.radius_ = radius;
    out.labels_ = std::move(labels);
    return out;
  }

  int dim() const { return dim_; }
  std::size_t size() const { return centers_.size(); }
  double radius() const { return radius_; }
  const Point& operator[](std::size_t i) const { return centers_[i]; }
  std::span<const Point> centers() const { return centers_; }
  bool has_labels() const { return !labels_.empty(); }
  std::span<const LatticeLabel> labels() const { return labels_; }

 private:
  int dim_ = 1;
  std::vector<Point> centers_;
  double radius_ = 0.0;
  std::vector<LatticeLabel> labels_;
};

/// Axis-aligned region [lower, upper]^d in lattice (pre-image) coordinates.
struct LatticeBox {
  double lower = 0.0;
  double upper = 0.0;
};

/// Integer points of Z^d inside the box, axis 0 fastest.
inline std::vector<LatticeLabel> lattice_points(int dim, const LatticeBox& box) {
  const long lo = static_cast<long>(std::ceil(box.lower));
  const long hi = static_cast<long>(std::floor(box.upper));
  std::vector<LatticeLabel> out;
  if (hi < lo) return out;
  const long n = hi - lo + 1;
  long total = 1;
  for (int k = 0; k < dim; ++k) total *= n;
  out.reserve(static_cast<std::size_t>(total));
  for (long flat = 0; flat < total; ++flat) {
    LatticeLabel label{};
    long rest = flat;
    for (int k = 0; k < dim; ++k) {
      label[k] = lo + rest % n;
      rest /= n;
    }
    out.push_back(label);
  }
  return out;
}

inline Point to_point(const LatticeLabel& n) {
  Point p{};
  for (int k = 0; k < kMaxDim; ++k) p[k] = static_cast<double>(n[k]);
  return p;
}

/// Image h(Z^d inside box) labelled by the pre-image n.
template <class Map>
UniformlyDiscreteSet deformed_lattice(Map&& h_map, int dim, const LatticeBox& box) {
  auto labels = lattice_points(dim, box);
  std::vector<Point> centers;
  centers.reserve(labels.size());
  for (const auto& n : labels) {
    Point y = h_map(to_point(n));
    for (int k = 0; k < dim; ++k) {
      if (!std::isfinite(y[k])) throw Error("lattice map evaluation failed");
    }
    centers.push_back(y);
  }
  return UniformlyDiscreteSet::with_max_radius(dim, std::move(centers), std::move(labels));
}

/// Z^d inside box scaled by `spacing`; radius spacing/2.
inline UniformlyDiscreteSet integer_lattice(int dim, const LatticeBox& box, double spacing = 1.0) {
  auto labels = lattice_points(dim, box);
  std::vector<Point> centers;
  centers.reserve(labels.size());
  for (const auto& n : labels) centers.push_back(spacing * to_point(n));
  return UniformlyDiscreteSet::trusted(dim, std::move(centers), spacing / 2.0, std::move(labels));
}

// CSV: x1..xd[,n1..nd]

inline void write_centers_csv(const UniformlyDiscreteSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  const int d = set.dim();
  for (int k = 0; k < d; ++k) out << (k ? "," : "") << 'x' << k + 1;
  if (set.has_labels()) {
    for (int k = 0; k < d; ++k) out << ",n" << k + 1;
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (int k = 0; k < d; ++k) out << (k ? "," : "") << set[i][k];
    if (set.has_labels()) {
      for (int k = 0; k < d; ++k) out << ',' << set.labels()[i][k];
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

inline UniformlyDiscreteSet read_centers_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  int d = 0;
  bool labelled = false;
  {
    std::istringstream hdr(line);
    std::string col;
    while (std::getline(hdr, col, ',')) {
      if (!col.empty() && col[0] == 'x') ++d;
      if (!col.empty() && col[0] == 'n') labelled = true;
    }
  }
  if (d < 1 || d > kMaxDim) throw Error("bad centers header");
  std::vector<Point> centers;
  std::vector<LatticeLabel> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Point p{};
    for (int k = 0; k < d; ++k) {
      std::getline(row, cell, ',');
      p[k] = std::stod(cell);
    }
    centers.push_back(p);
    if (labelled) {
      LatticeLabel n{};
      for (int k = 0; k < d; ++k) {
        std::getline(row, cell, ',');
        n[k] = std::stol(cell);
      }
      labels.push_back(n);
    }
  }
  return UniformlyDiscreteSet::with_max_radius(d, std::move(centers), std::move(labels));
}

}  // namespace gwb
