#pragma once

// Wannier families: orthonormal functions indexed by a uniformly discrete set,
// with s-moment and exponential-moment certificates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwb/discrete_sets.hpp"
#include "gwb/grid.hpp"
#include "gwb/linalg.hpp"

namespace gwb {

struct MomentRecord {
  double s = 0.0;
  double bound = 0.0;  // max over centers
  std::vector<double> per_center;
};

struct ExponentialRecord {
  double alpha = 0.0;
  double bound = 0.0;
  std::vector<double> per_center;
};

/// Largest deviation of the Gram matrix of `members` from the identity.
inline double orthonormality_residual(std::span<const GridFunction> members) {
  if (members.empty()) return 0.0;
  const Matrix a = as_columns(members);
  const Matrix g = gram(a, a, members.front().grid().weight());
  return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

class WannierFamily {
 public:
  WannierFamily(UniformlyDiscreteSet centers, std::vector<GridFunction> members,
                double s_limit = std::numeric_limits<double>::infinity())
      : centers_(std::move(centers)), members_(std::move(members)), s_limit_(s_limit) {
    if (centers_.size() != members_.size()) throw Error("one member per center required");
    if (members_.empty()) throw Error("empty family");
    for (const auto& m : members_) require_same_grid(members_.front().grid(), m.grid());
    residual_ = gwb::orthonormality_residual(members_);
  }

  std::size_t size() const { return members_.size(); }
  int dim() const { return grid().dim(); }
  const Grid& grid() const { return members_.front().grid(); }
  const GridPtr& grid_ptr() const { return members_.front().grid_ptr(); }
  const UniformlyDiscreteSet& centers() const { return centers_; }
  const Point& center(std::size_t i) const { return centers_[i]; }
  std::span<const GridFunction> members() const { return members_; }
  const GridFunction& member(std::size_t i) const { return members_[i]; }

  double orthonormality_residual() const { return residual_; }
  bool is_orthonormal(double tol = 1e-8) const { return residual_ <= tol; }

  /// Supremum of the s values for which the underlying continuum family is s-localized.
  double s_limit() const { return s_limit_; }

  const std::vector<MomentRecord>& moment_records() const { return moments_; }
  const std::optional<ExponentialRecord>& exponential_record() const { return exponential_; }

  std::optional<double> moment_bound(double s) const {
    for (const auto& r : moments_) {
      if (r.s == s) return r.bound;
    }
    return std::nullopt;
  }

  void store(MomentRecord record) {
    std::erase_if(moments_, [&](const MomentRecord& r) { return r.s == record.s; });
    moments_.push_back(std::move(record));
  }
  void store(ExponentialRecord record) { exponential_ = std::move(record); }

 private:
  UniformlyDiscreteSet centers_;
  std::vector<GridFunction> members_;
  double s_limit_;
  double residual_ = 0.0;
  std::vector<MomentRecord> moments_;
  std::optional<ExponentialRecord> exponential_;
};

// ---------------------------------------------------------------------------
// Moments

/// Quadrature of weight(|x - center|) |psi|^2. The same integrand restricted to
/// the boundary strip outside [-L + margin, L - margin]^d is the under-counted
/// remainder proxy and must stay below the guard tolerance.
template <class Weight>
double weighted_moment(const GridFunction& psi, const Point& center, Weight&& weight, const TruncationGuard& guard) {
  const Grid& g = psi.grid();
  const double margin = guard.effective_margin(g);
  double total = 0.0;
  double strip = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double a2 = std::norm(psi[i]);
    if (a2 == 0.0) continue;
    const double term = weight(distance(g.point(i), center)) * a2;
    total += term;
    if (outside_inner_box(g, g.point(i), margin)) strip += term;
  }
  total *= g.weight();
  strip *= g.weight();
  if (strip > guard.tolerance) {
    std::ostringstream os;
    os << "escaped mass guard violated: boundary-strip moment " << strip << " exceeds tolerance " << guard.tolerance;
    throw Error(os.str());
  }
  return total;
}

/// Integral of <x - center>^{2s} |psi|^2 with <y> = (1 + |y|^2)^{1/2}.
inline double localization_moment(const GridFunction& psi, const Point& center, double s,
                                  const TruncationGuard& guard = {}) {
  if (!(s > 0.0)) throw Error("moment order s must be positive");
  return weighted_moment(psi, center, [s](double t) { return std::pow(1.0 + t * t, s); }, guard);
}

/// Integral of e^{2 alpha |x - center|} |psi|^2.
inline double exponential_moment(const GridFunction& psi, const Point& center, double alpha,
                                 const TruncationGuard& guard = {}) {
  if (!(alpha > 0.0)) throw Error("exponential rate must be positive");
  return weighted_moment(psi, center, [alpha](double t) { return std::exp(2.0 * alpha * t); }, guard);
}

inline double certify_s_localized(WannierFamily& family, double s, const TruncationGuard& guard = {}) {
  if (!family.is_orthonormal()) throw Error("family is not orthonormal");
  if (!(s < family.s_limit())) throw Error("family not s-localized at the requested s");
  MomentRecord rec{s, 0.0, {}};
  rec.per_center.reserve(family.size());
  for (std::size_t i = 0; i < family.size(); ++i) {
    rec.per_center.push_back(localization_moment(family.member(i), family.center(i), s, guard));
  }
  rec.bound = *std::max_element(rec.per_center.begin(), rec.per_center.end());
  family.store(rec);
  return rec.bound;
}

inline double certify_exponential(WannierFamily& family, double alpha, const TruncationGuard& guard = {}) {
  if (!family.is_orthonormal()) throw Error("family is not orthonormal");
  ExponentialRecord rec{alpha, 0.0, {}};
  rec.per_center.reserve(family.size());
  for (std::size_t i = 0; i < family.size(); ++i) {
    rec.per_center.push_back(exponential_moment(family.member(i), family.center(i), alpha, guard));
  }
  rec.bound = *std::max_element(rec.per_center.begin(), rec.per_center.end());
  family.store(rec);
  return rec.bound;
}

// ---------------------------------------------------------------------------
// Constructions

/// Normalized indicators of B_{r-h}(gamma): disjoint supports, so the Gram matrix is exactly diagonal.
inline WannierFamily build_extremely_localized_family(const UniformlyDiscreteSet& centers, const GridPtr& grid) {
  const double h = grid->spacing();
  if (centers.radius() < 2.0 * h) throw Error("ball unresolved by grid");
  std::vector<GridFunction> members;
  members.reserve(centers.size());
  for (const auto& c : centers.centers()) members.push_back(normalized_ball_indicator(grid, c, centers.radius() - h));
  return WannierFamily(centers, std::move(members));
}

/// Symmetric orthonormalization A S^{-1/2}, S the Gram matrix of the frame.
inline std::vector<GridFunction> lowdin_orthonormalize(std::span<const GridFunction> frame, double min_eigenvalue = 1e-10) {
  if (frame.empty()) return {};
  const GridPtr& grid = frame.front().grid_ptr();
  const Matrix a = as_columns(frame);
  const Matrix s = gram(a, a, grid->weight());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.eigenvalues().minCoeff() <= min_eigenvalue * std::max(1.0, es.eigenvalues().maxCoeff())) {
    throw Error("frame degenerate");
  }
  const RealVector inv_sqrt = es.eigenvalues().cwiseSqrt().cwiseInverse();
  const Matrix s_inv_sqrt = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().adjoint();
  return from_columns(grid, a * s_inv_sqrt);
}

template <class Profile>
std::vector<GridFunction> normalized_profiles(const UniformlyDiscreteSet& centers, const GridPtr& grid, Profile&& profile) {
  std::vector<GridFunction> raw;
  raw.reserve(centers.size());
  for (const auto& c : centers.centers()) {
    auto f = GridFunction::sample(grid, [&](const Point& x) { return profile(distance(x, c)); });
    const double n = f.norm();
    if (n == 0.0) throw Error("profile vanishes on the grid");
    f *= 1.0 / n;
    raw.push_back(std::move(f));
  }
  return raw;
}

/// Loewdin-orthonormalized power-law profiles <x - gamma>^{-p}; s-localized for s < p - d/2.
inline WannierFamily build_power_law_family(const UniformlyDiscreteSet& centers, const GridPtr& grid, double p) {
  const double d = grid->dim();
  if (!(p > d / 2.0)) throw Error("power-law exponent must exceed d/2");
  auto raw = normalized_profiles(centers, grid, [p](double t) { return std::pow(1.0 + t * t, -p / 2.0); });
  return WannierFamily(centers, lowdin_orthonormalize(raw), p - d / 2.0);
}

/// Loewdin-orthonormalized smooth exponential profiles exp(-kappa <x - gamma>).
inline WannierFamily build_exponential_family(const UniformlyDiscreteSet& centers, const GridPtr& grid, double kappa) {
  if (!(kappa > 0.0)) throw Error("decay rate must be positive");
  auto raw = normalized_profiles(centers, grid, [kappa](double t) { return std::exp(-kappa * std::sqrt(1.0 + t * t)); });
  return WannierFamily(centers, lowdin_orthonormalize(raw));
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json family_manifest(const WannierFamily& family) {
  using nlohmann::json;
  json centers = json::array();
  for (std::size_t i = 0; i < family.size(); ++i) {
    json c;
    json x = json::array();
    for (int k = 0; k < family.dim(); ++k) x.push_back(family.center(i)[k]);
    c["x"] = x;
    if (family.centers().has_labels()) {
      json n = json::array();
      for (int k = 0; k < family.dim(); ++k) n.push_back(family.centers().labels()[i][k]);
      c["n"] = n;
    }
    c["norm"] = family.member(i).norm();
    json moments = json::object();
    for (const auto& r : family.moment_records()) moments[std::to_string(r.s)] = r.per_center[i];
    c["moments"] = moments;
    if (family.exponential_record()) c["exponential_moment"] = family.exponential_record()->per_center[i];
    centers.push_back(c);
  }
  json records = json::array();
  for (const auto& r : family.moment_records()) records.push_back({{"s", r.s}, {"M", r.bound}});
  json out{{"dimension", family.dim()},
           {"size", family.size()},
           {"discreteness_radius", family.centers().radius()},
           {"orthonormality_residual", family.orthonormality_residual()},
           {"s_records", records},
           {"centers", centers}};
  if (std::isfinite(family.s_limit())) out["s_limit"] = family.s_limit();
  if (family.exponential_record()) {
    out["exponential"] = {{"alpha", family.exponential_record()->alpha}, {"M", family.exponential_record()->bound}};
  }
  return out;
}

}  // namespace gwb
