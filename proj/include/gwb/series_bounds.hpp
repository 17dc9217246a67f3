#pragma once

// Tail sums over uniformly discrete sets and the explicit constant that bounds them:
//
//   sum_{|x - gamma| >= R} <x - gamma>^{-2s}  <=  C (1 + R)^{d - 2s},   s > d/2,
//
//   C = 2^s (1 - eps)^{-2s} / (c_hat eps^d (2s - d)) * (1 - eps / (1 + R))^{d - 2s},
//
// valid for 0 < eps < min{1, r, R}, with c_hat = |B_1| / |S^{d-1}| = 1/d.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gwb/discrete_sets.hpp"
#include "gwb/linalg.hpp"

namespace gwb {

/// Exact finite sum of <x - gamma>^{-2s} over stored centers with |x - gamma| >= R.
inline double tail_sum(std::span<const Point> centers, const Point& x, double R, double s) {
  const double r2 = R * R;
  double acc = 0.0;
  for (const auto& c : centers) {
    const double t2 = distance_squared(x, c);
    if (t2 >= r2) acc += std::pow(1.0 + t2, -s);
  }
  return acc;
}

inline double tail_sum(const UniformlyDiscreteSet& set, const Point& x, double R, double s) {
  return tail_sum(set.centers(), x, R, s);
}

inline double default_lemma_eps(double r, double R) { return 0.5 * std::min({1.0, r, R}); }

inline void check_lemma_hypotheses(int d, double s, double eps, double r, double R) {
  if (!(s > d / 2.0)) throw Error("tail lemma requires s > d/2");
  if (!(eps > 0.0) || !(eps < std::min({1.0, r, R}))) throw Error("tail lemma requires 0 < eps < min{1, r, R}");
}

/// The bound's prefactor with (1 + R - eps)^{d-2s} factored out.
inline double lemma_prefactor(int d, double s, double eps) {
  const double c_hat = 1.0 / d;
  return std::pow(2.0, s) * std::pow(1.0 - eps, -2.0 * s) / (c_hat * std::pow(eps, d) * std::abs(2.0 * s - d));
}

inline double lemma_constant(int d, double s, double eps, double r, double R) {
  check_lemma_hypotheses(d, s, eps, r, R);
  return lemma_prefactor(d, s, eps) * std::pow(1.0 - eps / (1.0 + R), d - 2.0 * s);
}

struct TailSumReport {
  int d = 1;
  Point x{};
  double R = 0.0;
  double s = 0.0;
  double eps = 0.0;
  double constant = 0.0;  // C
  double sum = 0.0;       // S, brute force
  double bound = 0.0;     // B = C (1 + R)^{d - 2s}
  double slack = 0.0;     // B - S
  // Bound on the part of the idealized infinite sum that lies beyond the stored
  // set's bounding box (same lemma at cutoff max(R, distance to the box exterior)).
  double truncation_residual = 0.0;
  bool pass = false;
};

/// Distance from x to the exterior of the axis-aligned bounding box of the centers.
inline double distance_to_hull_exterior(const UniformlyDiscreteSet& set, const Point& x) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < set.dim(); ++k) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : set.centers()) {
      lo = std::min(lo, c[k]);
      hi = std::max(hi, c[k]);
    }
    best = std::min({best, x[k] - lo, hi - x[k]});
  }
  return std::max(0.0, best);
}

inline TailSumReport verify_lemma(const UniformlyDiscreteSet& set, const Point& x, double R, double s,
                                  std::optional<double> eps = std::nullopt) {
  const int d = set.dim();
  TailSumReport rep;
  rep.d = d;
  rep.x = x;
  rep.R = R;
  rep.s = s;
  rep.eps = eps.value_or(default_lemma_eps(set.radius(), R));
  rep.constant = lemma_constant(d, s, rep.eps, set.radius(), R);
  rep.sum = tail_sum(set, x, R, s);
  rep.bound = rep.constant * std::pow(1.0 + R, d - 2.0 * s);
  rep.slack = rep.bound - rep.sum;
  const double cutoff = std::max(R, distance_to_hull_exterior(set, x));
  rep.truncation_residual = lemma_prefactor(d, s, rep.eps) * std::pow(1.0 + cutoff - rep.eps, d - 2.0 * s);
  rep.pass = rep.sum <= rep.bound;
  return rep;
}

/// Least-squares slope of log S(R) against log(1 + R).
inline double tail_exponent_fit(std::span<const Point> centers, const Point& x, double s, std::span<const double> radii) {
  if (radii.size() < 4) throw Error("tail exponent fit needs at least 4 cutoffs");
  std::vector<double> lx, ly;
  for (double R : radii) {
    if (R < 1.0) throw Error("tail exponent fit needs cutoffs >= 1");
    const double S = tail_sum(centers, x, R, s);
    if (S == 0.0) throw Error("empty tail");
    lx.push_back(std::log1p(R));
    ly.push_back(std::log(S));
  }
  return fit_slope(lx, ly);
}

inline double tail_exponent_fit(const UniformlyDiscreteSet& set, const Point& x, double s, std::span<const double> radii) {
  return tail_exponent_fit(set.centers(), x, s, radii);
}

inline void write_tail_reports_csv(std::span<const TailSumReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  const int d = reports.empty() ? 1 : reports.front().d;
  out << "d,s,R,eps";
  for (int k = 0; k < d; ++k) out << ",x" << k + 1;
  out << ",S,B,pass\n" << std::setprecision(12);
  for (const auto& r : reports) {
    out << r.d << ',' << r.s << ',' << r.R << ',' << r.eps;
    for (int k = 0; k < d; ++k) out << ',' << r.x[k];
    out << ',' << r.sum << ',' << r.bound << ',' << (r.pass ? 1 : 0) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace gwb
