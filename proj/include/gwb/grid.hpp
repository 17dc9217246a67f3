#pragma once

// Uniform box discretization of R^d with the midpoint-rule L2 structure.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gwb {

using Complex = std::complex<double>;

inline constexpr int kMaxDim = 3;

// Coordinates beyond the grid dimension are kept at zero, so Euclidean
// distances can always be taken over all kMaxDim components.
using Point = std::array<double, kMaxDim>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double distance_squared(const Point& a, const Point& b) {
  double acc = 0.0;
  for (int k = 0; k < kMaxDim; ++k) {
    const double t = a[k] - b[k];
    acc += t * t;
  }
  return acc;
}

inline double distance(const Point& a, const Point& b) { return std::sqrt(distance_squared(a, b)); }

inline double euclidean_norm(const Point& a) { return distance(a, Point{}); }

inline Point operator+(Point a, const Point& b) {
  for (int k = 0; k < kMaxDim; ++k) a[k] += b[k];
  return a;
}

inline Point operator-(Point a, const Point& b) {
  for (int k = 0; k < kMaxDim; ++k) a[k] -= b[k];
  return a;
}

inline Point operator*(double s, Point a) {
  for (auto& v : a) v *= s;
  return a;
}

enum class Boundary { dirichlet, periodic };

inline std::string to_string(Boundary bc) { return bc == Boundary::dirichlet ? "dirichlet" : "periodic"; }

inline Boundary boundary_from_string(const std::string& s) {
  if (s == "dirichlet") return Boundary::dirichlet;
  if (s == "periodic") return Boundary::periodic;
  throw Error("unknown boundary condition '" + s + "'");
}

/// Box [-L, L)^d sampled at x_i = -L + i*h, i = 0..N-1 with N = floor(2L/h).
///
/// Every point carries the quadrature weight h^d. Dirichlet grids treat the
/// ghost values at i = -1 and i = N as zero; periodic grids wrap with period 2L.
class Grid {
 public:
  Grid(int dim, double half_width, double spacing, Boundary bc = Boundary::dirichlet)
      : dim_(dim), half_width_(half_width), spacing_(spacing), bc_(bc) {
    if (dim < 1 || dim > kMaxDim) throw Error("grid dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    if (!(spacing > 0.0) || !(half_width > 0.0)) throw Error("grid requires h > 0 and L > 0");
    // The small relative slack keeps 2L/h = 640 from flooring to 639.
    n_axis_ = static_cast<std::size_t>(std::floor(2.0 * half_width / spacing * (1.0 + 1e-12)));
    if (n_axis_ < 3) throw Error("grid needs at least 3 points per axis");
    size_ = 1;
    for (int k = 0; k < dim_; ++k) size_ *= n_axis_;
    points_.resize(size_);
    for (std::size_t flat = 0; flat < size_; ++flat) {
      Point p{};
      std::size_t rest = flat;
      for (int k = 0; k < dim_; ++k) {
        p[k] = coordinate(rest % n_axis_);
        rest /= n_axis_;
      }
      points_[flat] = p;
    }
  }

  int dim() const { return dim_; }
  double half_width() const { return half_width_; }
  double spacing() const { return spacing_; }
  Boundary boundary() const { return bc_; }
  std::size_t points_per_axis() const { return n_axis_; }
  std::size_t size() const { return size_; }
  double weight() const { return std::pow(spacing_, dim_); }

  double coordinate(std::size_t axis_index) const {
    return -half_width_ + static_cast<double>(axis_index) * spacing_;
  }
  double lower() const { return coordinate(0); }
  double upper() const { return coordinate(n_axis_ - 1); }

  const Point& point(std::size_t flat) const { return points_[flat]; }
  std::span<const Point> points() const { return points_; }

  // Axis 0 varies fastest.
  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int k = 0; k < axis; ++k) s *= n_axis_;
    return s;
  }
  std::size_t axis_index(std::size_t flat, int axis) const { return (flat / stride(axis)) % n_axis_; }

  /// Flat index of the grid point nearest to p (clamped to the box).
  std::size_t nearest_index(const Point& p) const {
    std::size_t flat = 0;
    for (int k = 0; k < dim_; ++k) {
      double t = std::round((p[k] + half_width_) / spacing_);
      t = std::clamp(t, 0.0, static_cast<double>(n_axis_ - 1));
      flat += static_cast<std::size_t>(t) * stride(k);
    }
    return flat;
  }

  /// Index of the origin if it is a grid point.
  std::optional<std::size_t> origin_index() const {
    const double t = half_width_ / spacing_;
    if (std::abs(t - std::round(t)) > 1e-9 || std::round(t) >= static_cast<double>(n_axis_)) return std::nullopt;
    return nearest_index(Point{});
  }

  /// Largest distance between two grid points.
  double diameter() const { return std::sqrt(static_cast<double>(dim_)) * (upper() - lower()); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dim_ == b.dim_ && a.half_width_ == b.half_width_ && a.spacing_ == b.spacing_ && a.bc_ == b.bc_;
  }

 private:
  int dim_;
  double half_width_;
  double spacing_;
  Boundary bc_;
  std::size_t n_axis_ = 0;
  std::size_t size_ = 0;
  std::vector<Point> points_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(int dim, double half_width, double spacing, Boundary bc = Boundary::dirichlet) {
  return std::make_shared<const Grid>(dim, half_width, spacing, bc);
}

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (&a != &b && !(a == b)) throw Error("grid mismatch");
}

/// Complex-valued function sampled on a Grid.
class GridFunction {
 public:
  explicit GridFunction(GridPtr grid) : grid_(std::move(grid)), values_(grid_->size(), Complex{}) {}

  GridFunction(GridPtr grid, std::vector<Complex> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_->size()) throw Error("value count does not match grid size");
  }

  template <class F>
  static GridFunction sample(GridPtr grid, F&& f) {
    GridFunction out(grid);
    for (std::size_t i = 0; i < grid->size(); ++i) out.values_[i] = Complex(f(grid->point(i)));
    return out;
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  std::span<const Complex> values() const { return values_; }
  std::span<Complex> values() { return values_; }
  Complex operator[](std::size_t i) const { return values_[i]; }
  Complex& operator[](std::size_t i) { return values_[i]; }

  double norm_squared() const {
    double acc = 0.0;
    for (const auto& v : values_) acc += std::norm(v);
    return acc * grid_->weight();
  }
  double norm() const { return std::sqrt(norm_squared()); }

  GridFunction& operator+=(const GridFunction& o) {
    require_same_grid(*grid_, *o.grid_);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    require_same_grid(*grid_, *o.grid_);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  GridFunction& operator*=(Complex s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(Complex s, GridFunction a) { return a *= s; }

  bool is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](const Complex& v) { return v == Complex{}; });
  }

  friend bool operator==(const GridFunction& a, const GridFunction& b) {
    return (a.grid_ == b.grid_ || *a.grid_ == *b.grid_) && a.values_ == b.values_;
  }

 private:
  GridPtr grid_;
  std::vector<Complex> values_;
};

/// h^d * sum conj(f) g. Antilinear in the first slot.
inline Complex inner_product(const GridFunction& f, const GridFunction& g) {
  require_same_grid(f.grid(), g.grid());
  Complex acc{};
  const auto fv = f.values();
  const auto gv = g.values();
  for (std::size_t i = 0; i < fv.size(); ++i) acc += std::conj(fv[i]) * gv[i];
  return acc * f.grid().weight();
}

inline double norm(const GridFunction& f) { return f.norm(); }

inline bool in_ball(const Point& x, const Point& center, double radius) {
  return distance_squared(x, center) < radius * radius;
}

/// f on the open ball {|x - center| < radius}, zero elsewhere.
inline GridFunction restrict_to_ball(const GridFunction& f, const Point& center, double radius) {
  if (radius < 0.0) throw Error("restriction radius must be nonnegative");
  GridFunction out(f.grid_ptr());
  const Grid& g = f.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (in_ball(g.point(i), center, radius)) out[i] = f[i];
  }
  return out;
}

/// Indicator of the open ball scaled to unit L2 norm. Throws if the ball holds no grid point.
inline GridFunction normalized_ball_indicator(GridPtr grid, const Point& center, double radius) {
  auto out = GridFunction::sample(grid, [&](const Point& x) { return in_ball(x, center, radius) ? 1.0 : 0.0; });
  const double n = out.norm();
  if (n == 0.0) throw Error("ball unresolved by grid");
  out *= 1.0 / n;
  return out;
}

/// Grid delta at the point nearest to center, unit L2 norm.
inline GridFunction normalized_delta(GridPtr grid, const Point& center) {
  GridFunction out(grid);
  out[grid->nearest_index(center)] = 1.0 / std::sqrt(grid->weight());
  return out;
}

/// Pointwise multiplication by a fixed grid function.
class MultiplicationOperator {
 public:
  explicit MultiplicationOperator(GridFunction multiplier) : multiplier_(std::move(multiplier)) {}

  const Grid& grid() const { return multiplier_.grid(); }
  const GridFunction& multiplier() const { return multiplier_; }

  GridFunction apply(const GridFunction& phi) const {
    require_same_grid(grid(), phi.grid());
    GridFunction out(phi.grid_ptr());
    for (std::size_t i = 0; i < phi.size(); ++i) out[i] = multiplier_[i] * phi[i];
    return out;
  }

 private:
  GridFunction multiplier_;
};

inline MultiplicationOperator multiplication_operator(GridFunction f) { return MultiplicationOperator(std::move(f)); }

// ---------------------------------------------------------------------------
// Box-truncation guard

/// Mass outside [-L + margin, L - margin]^d must stay below tolerance.
struct TruncationGuard {
  double margin = -1.0;  // negative: use 2h
  double tolerance = 1e-6;

  double effective_margin(const Grid& g) const { return margin < 0.0 ? 2.0 * g.spacing() : margin; }
};

inline bool outside_inner_box(const Grid& g, const Point& x, double margin) {
  const double lim = g.half_width() - margin;
  for (int k = 0; k < g.dim(); ++k) {
    if (x[k] < -lim || x[k] > lim) return true;
  }
  return false;
}

/// ||f||^2 restricted to the complement of [-L + margin, L - margin]^d.
inline double escaped_mass(const GridFunction& f, double margin) {
  const Grid& g = f.grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (outside_inner_box(g, g.point(i), margin)) acc += std::norm(f[i]);
  }
  return acc * g.weight();
}

inline double escaped_mass(const GridFunction& f, const TruncationGuard& guard) {
  return escaped_mass(f, guard.effective_margin(f.grid()));
}

inline void require_contained(const GridFunction& f, const TruncationGuard& guard, double weight_factor = 1.0) {
  const double m = escaped_mass(f, guard);
  if (weight_factor * m > guard.tolerance) {
    std::ostringstream os;
    os << "escaped mass " << m << " (weighted " << weight_factor * m << ") exceeds tolerance " << guard.tolerance;
    throw Error(os.str());
  }
}

// ---------------------------------------------------------------------------
// Serialization: <stem>.json header {d, L, h, bc} + <stem>.csv rows (index, re, im)

inline nlohmann::json grid_header(const Grid& g) {
  return {{"d", g.dim()}, {"L", g.half_width()}, {"h", g.spacing()}, {"bc", to_string(g.boundary())}};
}

inline GridPtr grid_from_header(const nlohmann::json& j) {
  return make_grid(j.at("d").get<int>(), j.at("L").get<double>(), j.at("h").get<double>(),
                   boundary_from_string(j.at("bc").get<std::string>()));
}

inline void write_grid_function(const GridFunction& f, const std::filesystem::path& stem) {
  {
    std::ofstream js(stem.string() + ".json");
    js << grid_header(f.grid()).dump(2) << '\n';
  }
  std::ofstream csv(stem.string() + ".csv");
  csv << "index,re,im\n" << std::setprecision(17);
  for (std::size_t i = 0; i < f.size(); ++i) csv << i << ',' << f[i].real() << ',' << f[i].imag() << '\n';
  if (!csv) throw Error("failed writing " + stem.string() + ".csv");
}

inline GridFunction read_grid_function(const std::filesystem::path& stem) {
  std::ifstream js(stem.string() + ".json");
  if (!js) throw Error("cannot open " + stem.string() + ".json");
  auto grid = grid_from_header(nlohmann::json::parse(js));
  std::ifstream csv(stem.string() + ".csv");
  if (!csv) throw Error("cannot open " + stem.string() + ".csv");
  GridFunction f(grid);
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string idx, re, im;
    std::getline(row, idx, ',');
    std::getline(row, re, ',');
    std::getline(row, im, ',');
    const auto i = std::stoull(idx);
    if (i >= f.size()) throw Error("grid function index out of range");
    f[i] = Complex(std::stod(re), std::stod(im));
  }
  return f;
}

}  // namespace gwb
