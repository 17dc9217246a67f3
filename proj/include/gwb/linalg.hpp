#pragma once

// Dense helpers shared by the family and operator modules.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gwb/grid.hpp"

namespace gwb {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Columns are the raw grid values of the given functions.
inline Matrix as_columns(std::span<const GridFunction> fs, std::size_t rows) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(fs.size()));
  for (std::size_t k = 0; k < fs.size(); ++k) {
    const auto v = fs[k].values();
    for (std::size_t i = 0; i < rows; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v[i];
  }
  return m;
}

inline Matrix as_columns(std::span<const GridFunction> fs) {
  if (fs.empty()) return Matrix(0, 0);
  return as_columns(fs, fs.front().size());
}

inline std::vector<GridFunction> from_columns(const GridPtr& grid, const Matrix& m) {
  std::vector<GridFunction> out;
  out.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    std::vector<Complex> v(m.col(k).data(), m.col(k).data() + m.rows());
    out.emplace_back(grid, std::move(v));
  }
  return out;
}

/// Weighted Gram matrix G_ij = <a_i, b_j>.
inline Matrix gram(const Matrix& a, const Matrix& b, double weight) { return weight * (a.adjoint() * b); }

/// S^p for Hermitian positive semidefinite S (eigenvalues clipped at zero).
inline Matrix hermitian_power(const Matrix& s, double p) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  RealVector ev = es.eigenvalues().cwiseMax(0.0);
  RealVector powered = ev.unaryExpr([p](double x) { return x > 0.0 ? std::pow(x, p) : 0.0; });
  return es.eigenvectors() * powered.asDiagonal() * es.eigenvectors().adjoint();
}

inline double largest_eigenvalue(const Matrix& hermitian) {
  if (hermitian.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// ||L R^*|| for l2 matrices L, R with equal column counts.
///
/// A thin QR of L moves every cancellation between columns into the product
/// R R_L^*, which is formed explicitly before its Gram matrix is taken.
inline double norm_of_outer_product(const Matrix& left, const Matrix& right) {
  if (left.cols() == 0) return 0.0;
  const Eigen::Index k = left.cols();
  Eigen::HouseholderQR<Matrix> qr(left);
  const Eigen::Index m = std::min(left.rows(), k);
  Matrix r_factor = qr.matrixQR().topRows(m).template triangularView<Eigen::Upper>();
  Matrix c = right * r_factor.adjoint();  // rows x m
  Matrix cg = c.adjoint() * c;
  return std::sqrt(std::max(0.0, largest_eigenvalue(cg)));
}

/// Spectral norm of a dense matrix by power iteration on M^* M.
inline double power_iteration_norm(const Matrix& m, double rel_tol = 1e-12, int max_iter = 20000, unsigned seed = 7) {
  if (m.cols() == 0) return 0.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Vector v(m.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex(n01(rng), n01(rng));
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = m.adjoint() * (m * v);
    const double next = std::real(v.dot(w));
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    if (it > 2 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(0.0, lambda));
}

/// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("slope fit needs at least two paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw Error("slope fit needs distinct abscissae");
  return sxy / sxx;
}

}  // namespace gwb
