#pragma once
// Gauss quadrature rules from the Golub-Welsch eigenproblem.

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

namespace spinlat {

using QuadratureRule = std::pair<std::vector<double>, std::vector<double>>;

inline QuadratureRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& off, double mu0) {
  const Eigen::Index n = diag.size();
  Eigen::MatrixXd j = diag.asDiagonal();
  for (Eigen::Index i = 0; i + 1 < n; ++i) j(i, i + 1) = j(i + 1, i) = off[i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  std::vector<double> x(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = es.eigenvalues()[i];
    w[i] = mu0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
  return {x, w};
}

// int_0^inf e^{-u} f(u) du
inline QuadratureRule gauss_laguerre(int n) {
  Eigen::VectorXd d(n), e(std::max(n - 1, 0));
  for (int i = 0; i < n; ++i) d[i] = 2.0 * i + 1.0;
  for (int i = 0; i + 1 < n; ++i) e[i] = i + 1.0;
  return golub_welsch(d, e, 1.0);
}

// int_{-1}^{1} f(u) du
inline QuadratureRule gauss_legendre(int n) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n), e(std::max(n - 1, 0));
  for (int i = 1; i < n; ++i) e[i - 1] = i / std::sqrt(4.0 * i * i - 1.0);
  return golub_welsch(d, e, 2.0);
}

}  // namespace spinlat
