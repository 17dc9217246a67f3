#pragma once

// Kronig-Penney Schroedinger operators on the grid, their Gubanov deformations,
// spectral islands, spectral projections and Wannier-basis extraction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gwb/discrete_sets.hpp"
#include "gwb/grid.hpp"
#include "gwb/linalg.hpp"
#include "gwb/localization.hpp"
#include "gwb/roe_ops.hpp"

namespace gwb {

// Where the cells R(n) = n + [-a/2, a/2]^d sit relative to the potential:
// wells_on_cells has V = 0 on the cells and v0 between them (bound states
// centered on Z^d); barriers_on_cells has V = v0 on the cells.
enum class PotentialConvention { wells_on_cells, barriers_on_cells };

struct KronigPenneyParams {
  double v0 = 0.0;
  double a = 0.5;
  PotentialConvention convention = PotentialConvention::wells_on_cells;
};

inline bool in_lattice_cell(const Point& x, int dim, double a) {
  for (int k = 0; k < dim; ++k) {
    if (std::abs(x[k] - std::round(x[k])) > a / 2.0) return false;
  }
  return true;
}

inline double kronig_penney_potential(const Point& x, int dim, const KronigPenneyParams& p) {
  const bool cell = in_lattice_cell(x, dim, p.a);
  if (p.convention == PotentialConvention::wells_on_cells) return cell ? 0.0 : p.v0;
  return cell ? p.v0 : 0.0;
}

using SparseMatrix = Eigen::SparseMatrix<double>;

/// -Delta (2d+1-point stencil) plus a diagonal potential.
class Hamiltonian {
 public:
  Hamiltonian(GridPtr grid, std::vector<double> potential) : grid_(std::move(grid)), potential_(std::move(potential)) {
    const Grid& g = *grid_;
    if (potential_.size() != g.size()) throw Error("potential size does not match grid");
    const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
    const long n = static_cast<long>(g.points_per_axis());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(g.size() * (2 * g.dim() + 1));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      trip.emplace_back(row, row, 2.0 * g.dim() * inv_h2 + potential_[i]);
      for (int k = 0; k < g.dim(); ++k) {
        const long t = static_cast<long>(g.axis_index(i, k));
        for (long step : {-1L, 1L}) {
          long u = t + step;
          if (g.boundary() == Boundary::periodic) {
            u = (u + n) % n;
          } else if (u < 0 || u >= n) {
            continue;
          }
          const auto j = static_cast<long>(i) + (u - t) * static_cast<long>(g.stride(k));
          trip.emplace_back(row, static_cast<Eigen::Index>(j), -inv_h2);
        }
      }
    }
    matrix_.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
    matrix_.setFromTriplets(trip.begin(), trip.end());
    fingerprint_ = std::hash<std::string>{}(signature());
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const SparseMatrix& matrix() const { return matrix_; }
  std::span<const double> potential() const { return potential_; }
  std::size_t fingerprint() const { return fingerprint_; }

  GridFunction apply(const GridFunction& phi) const {
    require_same_grid(*grid_, phi.grid());
    GridFunction out(grid_);
    for (Eigen::Index c = 0; c < matrix_.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(matrix_, c); it; ++it) {
        out[static_cast<std::size_t>(it.row())] += it.value() * phi[static_cast<std::size_t>(it.col())];
      }
    }
    return out;
  }

  /// max |H_ij - H_ji|
  double asymmetry() const {
    const SparseMatrix t = matrix_.transpose();
    const SparseMatrix d = matrix_ - t;
    double m = 0.0;
    for (Eigen::Index c = 0; c < d.outerSize(); ++c) {
      for (SparseMatrix::InnerIterator it(d, c); it; ++it) m = std::max(m, std::abs(it.value()));
    }
    return m;
  }

 private:
  std::string signature() const {
    std::ostringstream os;
    os << std::setprecision(17) << grid_->dim() << ':' << grid_->half_width() << ':' << grid_->spacing() << ':'
       << static_cast<int>(grid_->boundary());
    for (double v : potential_) os << ',' << v;
    return os.str();
  }

  GridPtr grid_;
  std::vector<double> potential_;
  SparseMatrix matrix_;
  std::size_t fingerprint_ = 0;
};

template <class Potential>
Hamiltonian build_hamiltonian(const GridPtr& grid, Potential&& potential) {
  std::vector<double> v(grid->size());
  for (std::size_t i = 0; i < grid->size(); ++i) v[i] = potential(grid->point(i));
  return Hamiltonian(grid, std::move(v));
}

inline Hamiltonian build_uniform_potential(const GridPtr& grid, double c) {
  return build_hamiltonian(grid, [c](const Point&) { return c; });
}

inline void check_kronig_penney_params(const Grid& grid, const KronigPenneyParams& p) {
  if (!(p.a > 0.0 && p.a < 1.0)) throw Error("well width a must lie in (0, 1)");
  if (grid.spacing() > p.a / 8.0) throw Error("unresolved wells: grid spacing must be <= a/8");
}

inline Hamiltonian build_kronig_penney(const GridPtr& grid, const KronigPenneyParams& p) {
  check_kronig_penney_params(*grid, p);
  const int d = grid->dim();
  return build_hamiltonian(grid, [&](const Point& x) { return kronig_penney_potential(x, d, p); });
}

inline Hamiltonian build_kronig_penney(const GridPtr& grid, double v0, double a) {
  return build_kronig_penney(grid, KronigPenneyParams{v0, a});
}

// ---------------------------------------------------------------------------
// Spectra and islands

struct Spectrum {
  std::vector<double> eigenvalues;  // ascending
  std::vector<GridFunction> eigenvectors;
  bool complete = false;  // every eigenvalue of H computed
  std::size_t fingerprint = 0;
};

inline constexpr std::size_t kDenseEigenLimit = 6000;

/// Lowest `count` eigenpairs (all when count == 0) by a dense symmetric solve.
inline Spectrum compute_spectrum(const Hamiltonian& h, std::size_t count = 0) {
  const std::size_t n = h.grid().size();
  if (n > kDenseEigenLimit) throw Error("grid too large for the dense eigensolver");
  Eigen::MatrixXd dense(h.matrix());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
  if (es.info() != Eigen::Success) throw Error("eigensolver failed");
  const std::size_t keep = count == 0 ? n : std::min(count, n);
  Spectrum sp;
  sp.complete = keep == n;
  sp.fingerprint = h.fingerprint();
  const double scale = 1.0 / std::sqrt(h.grid().weight());
  for (std::size_t k = 0; k < keep; ++k) {
    sp.eigenvalues.push_back(es.eigenvalues()(static_cast<Eigen::Index>(k)));
    GridFunction v(h.grid_ptr());
    const auto col = es.eigenvectors().col(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) v[i] = col(static_cast<Eigen::Index>(i)) * scale;
    sp.eigenvectors.push_back(std::move(v));
  }
  return sp;
}

struct SpectralIsland {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double margin_below = 0.0;  // +inf for the bottom of the spectrum
  double margin_above = 0.0;  // +inf when the spectrum is complete and this is its top
  std::size_t first = 0;
  std::size_t count = 0;
  std::size_t fingerprint = 0;

  double gap() const { return std::min(margin_below, margin_above); }
};

/// Maximal runs of consecutive eigenvalues whose neighbors lie more than gap_tol away.
/// Runs above the energy cap (default: the 40th eigenvalue) or cut by an incomplete
/// spectrum are not reported.
inline std::vector<SpectralIsland> find_spectral_islands(const Spectrum& sp, double gap_tol,
                                                         std::optional<double> energy_cap = std::nullopt) {
  if (!(gap_tol > 0.0)) throw Error("gap tolerance must be positive");
  std::vector<SpectralIsland> out;
  const auto& ev = sp.eigenvalues;
  if (ev.empty()) return out;
  const double cap = energy_cap.value_or(ev[std::min<std::size_t>(39, ev.size() - 1)]);
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t start = 0;
  for (std::size_t k = 1; k <= ev.size(); ++k) {
    if (k < ev.size() && ev[k] - ev[k - 1] <= gap_tol) continue;
    SpectralIsland isl;
    isl.first = start;
    isl.count = k - start;
    isl.lambda_min = ev[start];
    isl.lambda_max = ev[k - 1];
    isl.margin_below = start == 0 ? inf : ev[start] - ev[start - 1];
    isl.fingerprint = sp.fingerprint;
    bool known_top = true;
    if (k < ev.size()) {
      isl.margin_above = ev[k] - ev[k - 1];
    } else if (sp.complete) {
      isl.margin_above = inf;
    } else {
      known_top = false;
    }
    if (known_top && isl.lambda_max <= cap) out.push_back(isl);
    start = k;
  }
  return out;
}

inline std::vector<SpectralIsland> find_spectral_islands(const Hamiltonian& h, double gap_tol,
                                                         std::optional<double> energy_cap = std::nullopt,
                                                         std::size_t count = 0) {
  return find_spectral_islands(compute_spectrum(h, count), gap_tol, energy_cap);
}

/// Sum of |v><v| over the island's eigenvectors.
inline RankOneSumOperator spectral_projection(const Spectrum& sp, const SpectralIsland& island) {
  if (island.fingerprint != sp.fingerprint) throw Error("stale island: spectrum changed");
  if (island.first + island.count > sp.eigenvectors.size()) throw Error("island outside computed spectrum");
  std::vector<GridFunction> vs(sp.eigenvectors.begin() + static_cast<std::ptrdiff_t>(island.first),
                               sp.eigenvectors.begin() + static_cast<std::ptrdiff_t>(island.first + island.count));
  return RankOneSumOperator(vs.front().grid_ptr(), vs, vs);
}

inline RankOneSumOperator spectral_projection(const Hamiltonian& h, const Spectrum& sp, const SpectralIsland& island) {
  if (island.fingerprint != h.fingerprint() || sp.fingerprint != h.fingerprint()) {
    throw Error("stale island: Hamiltonian changed");
  }
  return spectral_projection(sp, island);
}

// ---------------------------------------------------------------------------
// Wannier extraction by projected position operators

namespace detail {

/// W^* diag(x_axis) W for l2-weighted columns.
inline Matrix projected_position(const Matrix& w_cols, const Grid& g, int axis) {
  Matrix xw = w_cols;
  for (Eigen::Index i = 0; i < xw.rows(); ++i) xw.row(i) *= g.point(static_cast<std::size_t>(i))[axis];
  return g.weight() * (w_cols.adjoint() * xw);
}

/// Diagonalize position axis by axis, refining inside near-degenerate clusters.
inline Matrix diagonalize_positions(const Matrix& basis, const Grid& g, int axis, double cluster_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(projected_position(basis, g, axis));
  Matrix rotated = basis * es.eigenvectors();
  if (axis + 1 >= g.dim()) return rotated;
  const auto& ev = es.eigenvalues();
  Matrix out(rotated.rows(), rotated.cols());
  Eigen::Index start = 0;
  for (Eigen::Index k = 1; k <= ev.size(); ++k) {
    if (k < ev.size() && ev(k) - ev(k - 1) <= cluster_tol) continue;
    const Eigen::Index len = k - start;
    out.middleCols(start, len) = diagonalize_positions(rotated.middleCols(start, len), g, axis + 1, cluster_tol);
    start = k;
  }
  return out;
}

}  // namespace detail

/// Orthonormal basis of Ran P from eigenvectors of P x_1 P (then P x_2 P inside
/// near-degenerate x_1 clusters). Centers are position expectations.
inline WannierFamily extract_gwb(const RankOneSumOperator& p, std::optional<double> cluster_tol = std::nullopt) {
  if (p.size() == 0) throw Error("projection has rank 0");
  const Grid& g = p.grid();
  const double w = g.weight();
  const Matrix a = as_columns(p.lefts());
  const Matrix b = as_columns(p.rights());

  // Orthonormal basis Q of span(lefts), then the eigenvalue-1 subspace of Q^* P Q.
  Eigen::SelfAdjointEigenSolver<Matrix> ga(gram(a, a, w));
  const double top = ga.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < ga.eigenvalues().size(); ++k) {
    if (ga.eigenvalues()(k) > 1e-10 * top) keep.push_back(k);
  }
  Matrix q(a.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    q.col(static_cast<Eigen::Index>(c)) = a * ga.eigenvectors().col(keep[c]) / std::sqrt(ga.eigenvalues()(keep[c]));
  }
  const Matrix pq = gram(q, a, w) * gram(b, q, w);
  Eigen::SelfAdjointEigenSolver<Matrix> ep(0.5 * (pq + pq.adjoint()));
  std::vector<Eigen::Index> range;
  for (Eigen::Index k = 0; k < ep.eigenvalues().size(); ++k) {
    if (ep.eigenvalues()(k) > 0.5) range.push_back(k);
  }
  if (range.empty()) throw Error("projection has rank 0");
  Matrix basis(q.rows(), static_cast<Eigen::Index>(range.size()));
  for (std::size_t c = 0; c < range.size(); ++c) basis.col(static_cast<Eigen::Index>(c)) = q * ep.eigenvectors().col(range[c]);

  const double tol = cluster_tol.value_or(1e-6 * 2.0 * g.half_width());
  Matrix members = detail::diagonalize_positions(basis, g, 0, tol);

  std::vector<Point> centers;
  for (Eigen::Index c = 0; c < members.cols(); ++c) {
    Eigen::Index imax = 0;
    members.col(c).cwiseAbs().maxCoeff(&imax);
    const Complex ph = members(imax, c) / std::abs(members(imax, c));
    members.col(c) *= std::conj(ph);
    Point x{};
    for (int k = 0; k < g.dim(); ++k) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < members.rows(); ++i) acc += std::norm(members(i, c)) * g.point(static_cast<std::size_t>(i))[k];
      x[k] = acc * w;
    }
    centers.push_back(x);
  }
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      if (distance(centers[i], centers[j]) < 2.0 * g.spacing()) throw Error("degenerate centers");
    }
  }
  auto set = UniformlyDiscreteSet::with_max_radius(g.dim(), std::move(centers), {}, g.half_width());
  return WannierFamily(std::move(set), from_columns(p.grid_ptr(), members));
}

/// ||P - sum |psi><psi|||
inline double span_residual(const RankOneSumOperator& p, const WannierFamily& family) {
  return operator_norm(p - projection(family));
}

// ---------------------------------------------------------------------------
// Gubanov deformations f = id + g

using Jacobian = std::array<std::array<double, kMaxDim>, kMaxDim>;

struct Deformation {
  std::string kind = "zero";
  double strength = 0.0;
  double xi = 0.0;  // analytic sup of |first|, |second|, |third| partials of g
  std::function<Point(const Point&)> g;
  std::function<Jacobian(const Point&)> dg;
  std::function<double(const Point&)> derivative_sup;  // pointwise version of xi
};

inline Deformation zero_deformation() {
  Deformation d;
  d.g = [](const Point&) { return Point{}; };
  d.dg = [](const Point&) { return Jacobian{}; };
  d.derivative_sup = [](const Point&) { return 0.0; };
  return d;
}

/// g(x) = eps x.
inline Deformation linear_deformation(int dim, double eps) {
  Deformation d;
  d.kind = "linear";
  d.strength = eps;
  d.xi = std::abs(eps);
  d.g = [dim, eps](const Point& x) {
    Point y{};
    for (int k = 0; k < dim; ++k) y[k] = eps * x[k];
    return y;
  };
  d.dg = [dim, eps](const Point&) {
    Jacobian j{};
    for (int k = 0; k < dim; ++k) j[k][k] = eps;
    return j;
  };
  d.derivative_sup = [eps](const Point&) { return std::abs(eps); };
  return d;
}

/// d = 1: g(x) = eps sin x.  d = 2: g(x) = eps (sin x2, sin x1).
inline Deformation sine_deformation(int dim, double eps) {
  if (dim != 1 && dim != 2) throw Error("sine deformation defined for d = 1, 2");
  Deformation d;
  d.kind = "sine";
  d.strength = eps;
  d.xi = std::abs(eps);
  if (dim == 1) {
    d.g = [eps](const Point& x) { return Point{eps * std::sin(x[0]), 0.0, 0.0}; };
    d.dg = [eps](const Point& x) {
      Jacobian j{};
      j[0][0] = eps * std::cos(x[0]);
      return j;
    };
    d.derivative_sup = [eps](const Point& x) { return std::abs(eps) * std::max(std::abs(std::cos(x[0])), std::abs(std::sin(x[0]))); };
  } else {
    d.g = [eps](const Point& x) { return Point{eps * std::sin(x[1]), eps * std::sin(x[0]), 0.0}; };
    d.dg = [eps](const Point& x) {
      Jacobian j{};
      j[0][1] = eps * std::cos(x[1]);
      j[1][0] = eps * std::cos(x[0]);
      return j;
    };
    d.derivative_sup = [eps](const Point& x) {
      return std::abs(eps) * std::max({std::abs(std::cos(x[0])), std::abs(std::sin(x[0])), std::abs(std::cos(x[1])),
                                       std::abs(std::sin(x[1]))});
    };
  }
  return d;
}

inline Deformation make_deformation(const std::string& kind, int dim, double strength) {
  if (kind == "zero") return zero_deformation();
  if (kind == "linear") return linear_deformation(dim, strength);
  if (kind == "sine") return sine_deformation(dim, strength);
  throw Error("unknown deformation kind '" + kind + "'");
}

class GubanovMap {
 public:
  GubanovMap(Deformation def, GridPtr grid) : def_(std::move(def)), grid_(std::move(grid)) {
    double sampled = 0.0;
    for (const auto& x : grid_->points()) sampled = std::max(sampled, def_.derivative_sup(x));
    xi_ = std::max(def_.xi, sampled);
    if (!(xi_ < 0.5)) throw Error("deformation too strong: xi must be < 1/2");
    inverse_cache_.reserve(grid_->size());
    for (const auto& x : grid_->points()) {
      const Point y = solve_inverse(x);
      if (distance(forward(y), x) > 1e-10) throw Error("inverse map did not converge");
      inverse_cache_.push_back(y);
    }
  }

  int dim() const { return grid_->dim(); }
  double xi() const { return xi_; }
  const Deformation& deformation() const { return def_; }
  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }

  Point forward(const Point& x) const { return x + def_.g(x); }

  Point inverse(const Point& y) const { return solve_inverse(y); }
  const Point& inverse_at(std::size_t flat) const { return inverse_cache_[flat]; }

  double jacobian_determinant(const Point& x) const {
    const Jacobian j = def_.dg(x);
    const int d = dim();
    if (d == 1) return std::abs(1.0 + j[0][0]);
    if (d == 2) return std::abs((1.0 + j[0][0]) * (1.0 + j[1][1]) - j[0][1] * j[1][0]);
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m(r, c) += j[r][c];
    }
    return std::abs(m.determinant());
  }

 private:
  // Damped Newton for f(y) = x from y = x; |Dg| <= 2 xi < 1 makes f - x a contraction perturbation.
  Point solve_inverse(const Point& x) const {
    const int d = dim();
    Point y = x;
    auto residual = [&](const Point& p) { return forward(p) - x; };
    Point r = residual(y);
    double rn = euclidean_norm(r);
    for (int it = 0; it < 100 && rn > 1e-14 * std::max(1.0, euclidean_norm(x)); ++it) {
      const Jacobian j = def_.dg(y);
      Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
      Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
      for (int a = 0; a < d; ++a) {
        rhs(a) = r[a];
        for (int b = 0; b < d; ++b) m(a, b) += j[a][b];
      }
      Eigen::Vector3d step = Eigen::Vector3d::Zero();
      step.head(d) = m.topLeftCorner(d, d).fullPivLu().solve(rhs.head(d));
      double damping = 1.0;
      Point next = y;
      double next_norm = rn;
      for (int tries = 0; tries < 30; ++tries) {
        next = y;
        for (int a = 0; a < d; ++a) next[a] -= damping * step(a);
        next_norm = euclidean_norm(residual(next));
        if (next_norm < rn) break;
        damping *= 0.5;
      }
      if (!(next_norm < rn)) break;
      y = next;
      r = residual(y);
      rn = next_norm;
    }
    return y;
  }

  Deformation def_;
  GridPtr grid_;
  double xi_ = 0.0;
  std::vector<Point> inverse_cache_;
};

inline GubanovMap build_gubanov(Deformation def, const GridPtr& grid) { return GubanovMap(std::move(def), grid); }

/// Potential evaluated at f(x) = x + g(x).
inline Hamiltonian build_deformed_hamiltonian(const GubanovMap& map, const GridPtr& grid, const KronigPenneyParams& p) {
  require_same_grid(map.grid(), *grid);
  check_kronig_penney_params(*grid, p);
  const int d = grid->dim();
  return build_hamiltonian(grid, [&](const Point& x) { return kronig_penney_potential(map.forward(x), d, p); });
}

// ---------------------------------------------------------------------------
// The unitary (Y phi)(x) = J(x)^{1/2} phi(f(x)) and its inverse

namespace detail {

inline std::array<double, 4> cubic_weights(double t) {
  // Lagrange basis on nodes -1, 0, 1, 2 evaluated at t in [0, 1).
  return {-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
          -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0};
}

/// Tensor-product cubic interpolation; Dirichlet ghosts read zero, periodic wraps.
inline Complex interpolate(const GridFunction& phi, const Point& x) {
  const Grid& g = phi.grid();
  const long n = static_cast<long>(g.points_per_axis());
  const bool periodic = g.boundary() == Boundary::periodic;
  std::array<long, kMaxDim> base{};
  std::array<std::array<double, 4>, kMaxDim> wts{};
  for (int k = 0; k < g.dim(); ++k) {
    const double u = (x[k] - g.lower()) / g.spacing();
    const double fl = std::floor(u);
    base[k] = static_cast<long>(fl);
    wts[k] = cubic_weights(u - fl);
  }
  Complex acc{};
  const int corners = 1 << (2 * g.dim());
  for (int c = 0; c < corners; ++c) {
    double wt = 1.0;
    std::size_t flat = 0;
    bool inside = true;
    for (int k = 0; k < g.dim(); ++k) {
      const int o = (c >> (2 * k)) & 3;
      long idx = base[k] - 1 + o;
      if (periodic) {
        idx = ((idx % n) + n) % n;
      } else if (idx < 0 || idx >= n) {
        inside = false;
        break;
      }
      wt *= wts[k][static_cast<std::size_t>(o)];
      flat += static_cast<std::size_t>(idx) * g.stride(k);
    }
    if (inside) acc += wt * phi[flat];
  }
  return acc;
}

inline bool outside_grid(const Grid& g, const Point& x) {
  for (int k = 0; k < g.dim(); ++k) {
    if (x[k] < g.lower() || x[k] > g.upper()) return true;
  }
  return false;
}

}  // namespace detail

enum class YDirection { forward, inverse };

inline GridFunction apply_Y(const GubanovMap& map, const GridFunction& phi, YDirection direction,
                            const TruncationGuard& guard = {}) {
  require_same_grid(map.grid(), phi.grid());
  const Grid& g = phi.grid();
  if (g.boundary() == Boundary::dirichlet) {
    double displacement = 0.0;
    bool exits = false;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Point y = direction == YDirection::forward ? map.forward(g.point(i)) : map.inverse_at(i);
      displacement = std::max(displacement, distance(y, g.point(i)));
      exits = exits || detail::outside_grid(g, y);
    }
    if (exits && escaped_mass(phi, displacement + 2.0 * g.spacing()) > guard.tolerance) {
      throw Error("mapped point exits box while the function has mass near the boundary");
    }
  }
  GridFunction out(phi.grid_ptr());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point& x = g.point(i);
    if (direction == YDirection::forward) {
      out[i] = std::sqrt(map.jacobian_determinant(x)) * detail::interpolate(phi, map.forward(x));
    } else {
      const Point& y = map.inverse_at(i);
      out[i] = detail::interpolate(phi, y) / std::sqrt(map.jacobian_determinant(y));
    }
  }
  return out;
}

/// Normalized Gaussian packet exp(-|x-c|^2 / (2 w^2) + i k.x).
inline GridFunction wave_packet(const GridPtr& grid, const Point& center, double width, const Point& momentum) {
  auto f = GridFunction::sample(grid, [&](const Point& x) {
    double phase = 0.0;
    for (int k = 0; k < grid->dim(); ++k) phase += momentum[k] * x[k];
    return std::exp(-distance_squared(x, center) / (2.0 * width * width)) * std::polar(1.0, phase);
  });
  f *= 1.0 / f.norm();
  return f;
}

/// phi_gamma = Y psi_n at gamma = h(n), re-orthonormalized (Loewdin) to remove the
/// interpolation-level loss of orthonormality, then certified at beta = alpha (1 - 2 xi).
/// Throws if the certified constant exceeds the input constant by more than `rel_tol`.
inline WannierFamily deform_gwb(const GubanovMap& map, const WannierFamily& family, const TruncationGuard& guard = {},
                                double rel_tol = 1e-2) {
  const auto& rec = family.exponential_record();
  if (!rec) throw Error("input family carries no exponential certificate");
  std::vector<GridFunction> moved;
  moved.reserve(family.size());
  for (const auto& m : family.members()) moved.push_back(apply_Y(map, m, YDirection::forward, guard));
  std::vector<Point> centers;
  for (const auto& c : family.centers().centers()) centers.push_back(map.inverse(c));
  std::vector<LatticeLabel> labels(family.centers().labels().begin(), family.centers().labels().end());
  auto set = UniformlyDiscreteSet::with_max_radius(family.dim(), std::move(centers), std::move(labels),
                                                   family.centers().radius());
  WannierFamily out(std::move(set), lowdin_orthonormalize(moved), family.s_limit());
  const double beta = rec->alpha * (1.0 - 2.0 * map.xi());
  const double m_out = certify_exponential(out, beta, guard);
  if (m_out > rec->bound * (1.0 + rel_tol)) {
    std::ostringstream os;
    os << "deformed family certification failed: M(beta=" << beta << ") = " << m_out << " > " << rec->bound
       << " * (1 + " << rel_tol << ")";
    throw Error(os.str());
  }
  return out;
}

}  // namespace gwb
