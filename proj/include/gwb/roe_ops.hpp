#pragma once

// Finite-rank operator algebra sum_k |a_k><b_k| on grid functions, the
// intertwiner V = sum |phi_g><psi_g| between two Wannier families, its ball
// truncations V^R, and empirical probes for finite propagation and local
// compactness.
//
// Norms are reduced to #pairs-sized dense problems; nothing here builds a
// grid-sized matrix except materialize(), which exists for small oracle checks.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gwb/grid.hpp"
#include "gwb/linalg.hpp"
#include "gwb/localization.hpp"
#include "gwb/series_bounds.hpp"

namespace gwb {

template <class T>
concept GridOperator = requires(const T& t, const GridFunction& f) {
  { t.apply(f) } -> std::same_as<GridFunction>;
  { t.grid() } -> std::convertible_to<const Grid&>;
};

class RankOneSumOperator {
 public:
  explicit RankOneSumOperator(GridPtr grid) : grid_(std::move(grid)) {}

  RankOneSumOperator(GridPtr grid, std::vector<GridFunction> left, std::vector<GridFunction> right,
                     std::vector<Point> anchors = {})
      : grid_(std::move(grid)), left_(std::move(left)), right_(std::move(right)), anchors_(std::move(anchors)) {
    if (left_.size() != right_.size()) throw Error("left and right lists differ in length");
    if (!anchors_.empty() && anchors_.size() != left_.size()) throw Error("anchor count does not match pair count");
    for (const auto& f : left_) require_same_grid(*grid_, f.grid());
    for (const auto& f : right_) require_same_grid(*grid_, f.grid());
  }

  const Grid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return left_.size(); }
  std::span<const GridFunction> lefts() const { return left_; }
  std::span<const GridFunction> rights() const { return right_; }
  const GridFunction& left(std::size_t k) const { return left_[k]; }
  const GridFunction& right(std::size_t k) const { return right_[k]; }
  bool has_anchors() const { return !anchors_.empty(); }
  std::span<const Point> anchors() const { return anchors_; }

  /// sum_k a_k <b_k, phi>.
  GridFunction apply(const GridFunction& phi) const {
    require_same_grid(*grid_, phi.grid());
    GridFunction out(grid_);
    for (std::size_t k = 0; k < size(); ++k) {
      const Complex c = inner_product(right_[k], phi);
      if (c == Complex{}) continue;
      const auto a = left_[k].values();
      auto o = out.values();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += c * a[i];
    }
    return out;
  }

  RankOneSumOperator adjoint() const { return RankOneSumOperator(grid_, right_, left_, anchors_); }

  RankOneSumOperator operator-() const {
    auto out = *this;
    for (auto& a : out.left_) a *= -1.0;
    return out;
  }

  /// Concatenated pair lists (anchors dropped unless both carry them).
  friend RankOneSumOperator operator+(const RankOneSumOperator& t, const RankOneSumOperator& s) {
    require_same_grid(t.grid(), s.grid());
    auto left = t.left_;
    auto right = t.right_;
    left.insert(left.end(), s.left_.begin(), s.left_.end());
    right.insert(right.end(), s.right_.begin(), s.right_.end());
    std::vector<Point> anchors;
    if (t.has_anchors() && s.has_anchors()) {
      anchors = t.anchors_;
      anchors.insert(anchors.end(), s.anchors_.begin(), s.anchors_.end());
    }
    return RankOneSumOperator(t.grid_, std::move(left), std::move(right), std::move(anchors));
  }
  friend RankOneSumOperator operator-(const RankOneSumOperator& t, const RankOneSumOperator& s) { return t + (-s); }

  /// Pairs sharing an identical left member merged into one (rights summed).
  RankOneSumOperator coalesced() const {
    std::vector<GridFunction> left, right;
    for (std::size_t k = 0; k < size(); ++k) {
      std::size_t j = 0;
      for (; j < left.size(); ++j) {
        if (left[j].values().size() == left_[k].values().size() &&
            std::equal(left[j].values().begin(), left[j].values().end(), left_[k].values().begin())) {
          break;
        }
      }
      if (j == left.size()) {
        left.push_back(left_[k]);
        right.push_back(right_[k]);
      } else {
        right[j] += right_[k];
      }
    }
    // A member that appears negated on a second pair is folded the same way.
    for (std::size_t j = 0; j < left.size(); ++j) {
      for (std::size_t i = j + 1; i < left.size();) {
        const auto a = left[j].values();
        const auto b = left[i].values();
        bool negated = true;
        for (std::size_t p = 0; p < a.size() && negated; ++p) negated = (a[p] == -b[p]);
        if (negated) {
          right[j] -= right[i];
          left.erase(left.begin() + static_cast<std::ptrdiff_t>(i));
          right.erase(right.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
          ++i;
        }
      }
    }
    return RankOneSumOperator(grid_, std::move(left), std::move(right));
  }

 private:
  GridPtr grid_;
  std::vector<GridFunction> left_;
  std::vector<GridFunction> right_;
  std::vector<Point> anchors_;
};

/// T S as a pair list: (a^T_g, sum_h conj(<b^T_g, a^S_h>) b^S_h).
inline RankOneSumOperator compose(const RankOneSumOperator& t, const RankOneSumOperator& s) {
  require_same_grid(t.grid(), s.grid());
  if (t.size() == 0 || s.size() == 0) return RankOneSumOperator(t.grid_ptr());
  const double w = t.grid().weight();
  const Matrix g = gram(as_columns(t.rights()), as_columns(s.lefts()), w);
  const Matrix rights = as_columns(s.rights()) * g.adjoint();
  std::vector<GridFunction> left(t.lefts().begin(), t.lefts().end());
  std::vector<Point> anchors(t.anchors().begin(), t.anchors().end());
  return RankOneSumOperator(t.grid_ptr(), std::move(left), from_columns(t.grid_ptr(), rights), std::move(anchors));
}

/// Operator norm on L2 of the grid.
inline double operator_norm(const RankOneSumOperator& t) {
  if (t.size() == 0) return 0.0;
  const auto c = t.coalesced();
  if (c.size() == 0) return 0.0;
  const double w = t.grid().weight();
  return norm_of_outer_product(as_columns(c.lefts()), as_columns(c.rights())) * w;
}

/// Dense matrix M with (T phi)(x_i) = sum_j M_ij phi(x_j).
inline Matrix materialize(const RankOneSumOperator& t) {
  const auto n = static_cast<Eigen::Index>(t.grid().size());
  if (t.size() == 0) return Matrix::Zero(n, n);
  return t.grid().weight() * (as_columns(t.lefts()) * as_columns(t.rights()).adjoint());
}

template <GridOperator T>
Matrix materialize(const T& op) {
  const std::size_t n = op.grid().size();
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  GridPtr grid = std::make_shared<const Grid>(op.grid());
  for (std::size_t j = 0; j < n; ++j) {
    GridFunction e(grid);
    e[j] = 1.0;
    const auto col = op.apply(e);
    for (std::size_t i = 0; i < n; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Projections and the intertwiner

inline RankOneSumOperator projection(const WannierFamily& family) {
  std::vector<GridFunction> members(family.members().begin(), family.members().end());
  std::vector<Point> anchors(family.centers().centers().begin(), family.centers().centers().end());
  return RankOneSumOperator(family.grid_ptr(), members, members, std::move(anchors));
}

/// V = sum_g |phi_g><psi_g|, pairs matched by center.
inline RankOneSumOperator build_intertwiner(const WannierFamily& psi_family, const WannierFamily& phi_family,
                                            double center_tol = 1e-9) {
  require_same_grid(psi_family.grid(), phi_family.grid());
  if (psi_family.size() != phi_family.size()) throw Error("center mismatch: families differ in size");
  std::vector<GridFunction> left, right;
  std::vector<Point> anchors;
  std::vector<bool> used(phi_family.size(), false);
  for (std::size_t i = 0; i < psi_family.size(); ++i) {
    std::size_t match = phi_family.size();
    for (std::size_t j = 0; j < phi_family.size(); ++j) {
      if (!used[j] && distance(psi_family.center(i), phi_family.center(j)) <= center_tol) {
        match = j;
        break;
      }
    }
    if (match == phi_family.size()) throw Error("center mismatch: no partner for a psi center");
    used[match] = true;
    left.push_back(phi_family.member(match));
    right.push_back(psi_family.member(i));
    anchors.push_back(psi_family.center(i));
  }
  return RankOneSumOperator(psi_family.grid_ptr(), std::move(left), std::move(right), std::move(anchors));
}

struct MvnResiduals {
  double vstar_v = 0.0;  // ||V^* V - P_psi||
  double v_vstar = 0.0;  // ||V V^* - P_phi||
};

inline MvnResiduals mvn_residuals(const RankOneSumOperator& v, const WannierFamily& psi, const WannierFamily& phi) {
  const auto vs = v.adjoint();
  return {operator_norm(compose(vs, v) - projection(psi)), operator_norm(compose(v, vs) - projection(phi))};
}

/// V^R: right members restricted to the open balls B_R(anchor).
inline RankOneSumOperator truncate_intertwiner(const RankOneSumOperator& v, double R) {
  if (R < 0.0) throw Error("truncation radius must be nonnegative");
  if (!v.has_anchors()) throw Error("truncation needs anchored pairs");
  std::vector<GridFunction> right;
  right.reserve(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) right.push_back(restrict_to_ball(v.right(k), v.anchors()[k], R));
  std::vector<GridFunction> left(v.lefts().begin(), v.lefts().end());
  std::vector<Point> anchors(v.anchors().begin(), v.anchors().end());
  return RankOneSumOperator(v.grid_ptr(), std::move(left), std::move(right), std::move(anchors));
}

inline double left_orthonormality_residual(const RankOneSumOperator& t) { return orthonormality_residual(t.lefts()); }

namespace detail {
inline double difference_norm_unchecked(const RankOneSumOperator& v, const RankOneSumOperator& v_r) {
  std::vector<GridFunction> delta;
  delta.reserve(v.size());
  bool all_zero = true;
  for (std::size_t k = 0; k < v.size(); ++k) {
    delta.push_back(v.right(k) - v_r.right(k));
    all_zero = all_zero && delta.back().is_zero();
  }
  if (all_zero) return 0.0;
  const Matrix d = as_columns(delta);
  return std::sqrt(std::max(0.0, largest_eigenvalue(gram(d, d, v.grid().weight()))));
}
}  // namespace detail

/// ||V - V^R|| as sqrt of the largest eigenvalue of <dpsi_g, dpsi_h>, valid when the
/// left members are orthonormal.
inline double norm_of_difference(const RankOneSumOperator& v, const RankOneSumOperator& v_r, double ortho_tol = 1e-8) {
  require_same_grid(v.grid(), v_r.grid());
  if (v.size() != v_r.size()) throw Error("operators come from different builds");
  if (left_orthonormality_residual(v) > ortho_tol) throw Error("left family not orthonormal; Gram identity fails");
  return detail::difference_norm_unchecked(v, v_r);
}

/// M(s) C (1 + R)^{d - 2s}: the bound on ||V - V^R||^2 for an s-localized right family.
inline double truncation_norm_bound(double moment_bound, int d, double s, double r, double R,
                                    std::optional<double> eps = std::nullopt) {
  const double e = eps.value_or(default_lemma_eps(r, R));
  return moment_bound * lemma_constant(d, s, e, r, R) * std::pow(1.0 + R, d - 2.0 * s);
}

struct DecayFit {
  double s = 0.0;
  double target = 0.0;  // (d - 2s)/2
  double slope = 0.0;
  bool pass = false;
  std::vector<double> radii;  // after underflow removal
  std::vector<double> norms;
};

inline constexpr double kNormUnderflow = 1e-10;

/// Slope of log ||V - V^R|| against log(1 + R); pass iff slope <= (d - 2s)/2 + slack.
inline DecayFit decay_fit_from_norms(int d, double s, std::span<const double> radii, std::span<const double> norms,
                                     double slack = 0.15) {
  DecayFit fit;
  fit.s = s;
  fit.target = (d - 2.0 * s) / 2.0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(norms[i] >= kNormUnderflow)) continue;
    fit.radii.push_back(radii[i]);
    fit.norms.push_back(norms[i]);
    lx.push_back(std::log1p(radii[i]));
    ly.push_back(std::log(norms[i]));
  }
  if (lx.size() < 4) throw Error("underflow: fewer than 4 truncation radii above the norm floor");
  fit.slope = fit_slope(lx, ly);
  fit.pass = fit.slope <= fit.target + slack;
  return fit;
}

inline std::vector<double> truncation_norms(const RankOneSumOperator& v, std::span<const double> radii,
                                            double ortho_tol = 1e-8) {
  if (radii.size() < 4) throw Error("decay fit needs at least 4 truncation radii");
  if (!std::is_sorted(radii.begin(), radii.end())) throw Error("truncation radii must be increasing");
  if (left_orthonormality_residual(v) > ortho_tol) throw Error("left family not orthonormal; Gram identity fails");
  std::vector<double> norms;
  for (double R : radii) norms.push_back(detail::difference_norm_unchecked(v, truncate_intertwiner(v, R)));
  return norms;
}

inline DecayFit decay_fit(const RankOneSumOperator& v, std::span<const double> radii, double s) {
  const auto norms = truncation_norms(v, radii);
  return decay_fit_from_norms(v.grid().dim(), s, radii, norms);
}

// ---------------------------------------------------------------------------
// Convolution and composition

/// (K phi)(x) = h^d sum_y k(x - y) phi(y), kernel centered at the grid origin.
class ConvolutionOperator {
 public:
  explicit ConvolutionOperator(const GridFunction& kernel) : grid_(kernel.grid_ptr()) {
    const Grid& g = *grid_;
    const auto origin = g.origin_index();
    if (!origin) throw Error("convolution kernel grid must contain the origin");
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (kernel[i] == Complex{}) continue;
      Offset o;
      for (int k = 0; k < g.dim(); ++k) {
        o.shift[k] = static_cast<long>(g.axis_index(i, k)) - static_cast<long>(g.axis_index(*origin, k));
      }
      o.value = kernel[i];
      support_radius_ = std::max(support_radius_, euclidean_norm(g.point(i)));
      offsets_.push_back(o);
    }
    if (support_radius_ >= 2.0 * g.half_width() / 4.0) throw Error("convolution kernel support too large");
  }

  const Grid& grid() const { return *grid_; }
  double support_radius() const { return support_radius_; }

  GridFunction apply(const GridFunction& phi) const {
    require_same_grid(*grid_, phi.grid());
    const Grid& g = *grid_;
    const long n = static_cast<long>(g.points_per_axis());
    const bool periodic = g.boundary() == Boundary::periodic;
    const double w = g.weight();
    GridFunction out(phi.grid_ptr());
    for (std::size_t i = 0; i < g.size(); ++i) {
      Complex acc{};
      for (const auto& o : offsets_) {
        std::size_t j = 0;
        bool inside = true;
        for (int k = 0; k < g.dim() && inside; ++k) {
          long t = static_cast<long>(g.axis_index(i, k)) - o.shift[k];
          if (periodic) {
            t = ((t % n) + n) % n;
          } else if (t < 0 || t >= n) {
            inside = false;
          }
          j += static_cast<std::size_t>(t) * g.stride(k);
        }
        if (inside) acc += o.value * phi[j];
      }
      out[i] = w * acc;
    }
    return out;
  }

 private:
  struct Offset {
    std::array<long, kMaxDim> shift{};
    Complex value;
  };
  GridPtr grid_;
  std::vector<Offset> offsets_;
  double support_radius_ = 0.0;
};

inline ConvolutionOperator convolution_operator(const GridFunction& kernel) { return ConvolutionOperator(kernel); }

template <GridOperator T, GridOperator S>
class ComposedOperator {
 public:
  ComposedOperator(T outer, S inner) : outer_(std::move(outer)), inner_(std::move(inner)) {
    require_same_grid(outer_.grid(), inner_.grid());
  }
  const Grid& grid() const { return outer_.grid(); }
  GridFunction apply(const GridFunction& phi) const { return outer_.apply(inner_.apply(phi)); }

 private:
  T outer_;
  S inner_;
};

template <GridOperator T, GridOperator S>
ComposedOperator<T, S> compose(const T& t, const S& s) {
  return ComposedOperator<T, S>(t, s);
}

// ---------------------------------------------------------------------------
// Probes

struct PropagationProbeResult {
  double separation = 0.0;
  double residual = 0.0;
  std::size_t probes = 0;
  bool pass = false;
};

inline GridFunction random_unit_vector(const GridPtr& grid, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  GridFunction u(grid);
  for (auto& v : u.values()) v = Complex(n01(rng), n01(rng));
  u *= 1.0 / u.norm();
  return u;
}

template <class Pred>
GridFunction indicator(const GridPtr& grid, Pred&& inside) {
  return GridFunction::sample(grid, [&](const Point& x) { return inside(x) ? 1.0 : 0.0; });
}

/// max ||f T (g u)|| over multiplier pairs whose supports are more than `separation`
/// apart: axis-aligned half-space slabs at every grid line, then random ball pairs.
/// A pass cannot prove finite propagation, only fail to falsify it.
template <GridOperator T>
PropagationProbeResult probe_propagation(const T& op, double separation, int trials, std::uint64_t seed = 0,
                                         double tolerance = 1e-12) {
  if (!(separation > 0.0)) throw Error("probe separation must be positive");
  const GridPtr grid = std::make_shared<const Grid>(op.grid());
  const Grid& g = *grid;
  if (separation >= g.diameter()) throw Error("box too small to place separated supports");
  std::mt19937_64 rng(seed);
  PropagationProbeResult res;
  res.separation = separation;

  auto probe = [&](const GridFunction& f, const GridFunction& gm) {
    if (f.is_zero() || gm.is_zero()) return;
    const auto u = random_unit_vector(grid, rng);
    GridFunction gu(grid);
    for (std::size_t i = 0; i < g.size(); ++i) gu[i] = gm[i] * u[i];
    GridFunction tgu = op.apply(gu);
    for (std::size_t i = 0; i < g.size(); ++i) tgu[i] *= f[i];
    res.residual = std::max(res.residual, tgu.norm());
    ++res.probes;
  };

  const std::size_t n = g.points_per_axis();
  for (int axis = 0; axis < g.dim(); ++axis) {
    for (std::size_t a = 0; a < n; ++a) {
      const double t = g.coordinate(a);
      // first grid coordinate strictly beyond t + separation
      std::size_t b = a + static_cast<std::size_t>(std::floor(separation / g.spacing())) + 1;
      while (b < n && !(g.coordinate(b) - t > separation)) ++b;
      if (b >= n) break;
      const double t2 = g.coordinate(b);
      auto lo = indicator(grid, [&](const Point& x) { return x[axis] <= t + 0.5 * g.spacing() * 1e-6; });
      auto hi = indicator(grid, [&](const Point& x) { return x[axis] >= t2 - 0.5 * g.spacing() * 1e-6; });
      probe(lo, hi);
      probe(hi, lo);
    }
  }

  std::uniform_real_distribution<double> coord(g.lower(), g.upper());
  std::uniform_real_distribution<double> radius(g.spacing(), std::max(g.spacing(), g.half_width() / 4.0));
  int placed = 0;
  for (int attempt = 0; placed < trials && attempt < 100 * std::max(trials, 1); ++attempt) {
    Point cf{}, cg{};
    for (int k = 0; k < g.dim(); ++k) {
      cf[k] = coord(rng);
      cg[k] = coord(rng);
    }
    const double rf = radius(rng), rg = radius(rng);
    if (!(distance(cf, cg) - rf - rg > separation)) continue;
    probe(indicator(grid, [&](const Point& x) { return in_ball(x, cf, rf); }),
          indicator(grid, [&](const Point& x) { return in_ball(x, cg, rg); }));
    ++placed;
  }
  if (trials > 0 && placed == 0 && res.probes == 0) throw Error("box too small to place separated supports");
  res.pass = res.residual <= tolerance;
  return res;
}

/// Largest |x_i - x_j| over kernel entries with |M_ij| > rel_tol * max|M| (materialized).
inline double measured_propagation(const Matrix& kernel, const Grid& g, double rel_tol = 1e-12) {
  const double peak = kernel.cwiseAbs().maxCoeff();
  if (peak == 0.0) return 0.0;
  double best = 0.0;
  for (Eigen::Index j = 0; j < kernel.cols(); ++j) {
    for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
      if (std::abs(kernel(i, j)) > rel_tol * peak) {
        best = std::max(best, distance(g.point(static_cast<std::size_t>(i)), g.point(static_cast<std::size_t>(j))));
      }
    }
  }
  return best;
}

inline constexpr std::size_t kMaterializeLimit = 6000;

template <class T>
double measured_propagation(const T& op, double rel_tol = 1e-12) {
  if (op.grid().size() > kMaterializeLimit) throw Error("grid too large to materialize for propagation measurement");
  return measured_propagation(materialize(op), op.grid(), rel_tol);
}

/// Numerical rank of f T for a rank-one sum (singular values above 1e-10 sigma_max).
inline int probe_local_compactness(const RankOneSumOperator& t, const GridFunction& f, double rel_tol = 1e-10) {
  require_same_grid(t.grid(), f.grid());
  if (t.size() == 0) return 0;
  std::vector<GridFunction> fa;
  fa.reserve(t.size());
  for (const auto& a : t.lefts()) {
    GridFunction p(a.grid_ptr());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = f[i] * a[i];
    fa.push_back(std::move(p));
  }
  const Matrix left = as_columns(fa);
  const Matrix right = as_columns(t.rights());
  Eigen::HouseholderQR<Matrix> qr(left);
  const Eigen::Index m = std::min(left.rows(), left.cols());
  Matrix r_factor = qr.matrixQR().topRows(m).template triangularView<Eigen::Upper>();
  const Matrix c = right * r_factor.adjoint();
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.adjoint() * c, Eigen::EigenvaluesOnly);
  const RealVector sv = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const double top = sv.maxCoeff();
  if (top == 0.0) return 0;
  return static_cast<int>((sv.array() > rel_tol * top).count());
}

/// Numerical rank of f T for a general operator (materialized).
template <GridOperator T>
int probe_local_compactness(const T& op, const GridFunction& f, double rel_tol = 1e-10) {
  Matrix m = materialize(op);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) *= f[static_cast<std::size_t>(i)];
  Eigen::BDCSVD<Matrix> svd(m);
  const auto sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  return static_cast<int>((sv.array() > rel_tol * sv(0)).count());
}

/// Number of pairs whose left member meets supp f.
inline int members_meeting_support(const RankOneSumOperator& t, const GridFunction& f) {
  int count = 0;
  for (const auto& a : t.lefts()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != Complex{} && f[i] != Complex{}) {
        ++count;
        break;
      }
    }
  }
  return count;
}

}  // namespace gwb
