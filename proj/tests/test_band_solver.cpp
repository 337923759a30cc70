#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>

#include "spinlat/band_solver.hpp"

using namespace spinlat;

namespace {

// Bloch energies at quasimomentum kappa from a fourth-order finite-difference
// Hamiltonian -(1/pi^2) d^2/dx^2 + W sin^2(pi x) on one cell with twisted
// boundary psi(x + 1) = exp(i pi kappa) psi(x).
Eigen::VectorXd finite_difference_levels(double depth, double kappa, int points) {
  const double h = 1.0 / points;
  const double t = 1.0 / (pi * pi * h * h);
  const std::complex<double> twist = std::polar(1.0, pi * kappa);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(points, points);
  const double stencil[3] = {-30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};
  for (int i = 0; i < points; ++i) {
    const double x = i * h;
    H(i, i) += -t * stencil[0] + depth * std::sin(pi * x) * std::sin(pi * x);
    for (int off = 1; off <= 2; ++off) {
      int j = i + off;
      std::complex<double> phase = 1.0;
      if (j >= points) {
        j -= points;
        phase = twist;
      }
      H(i, j) += -t * stencil[off] * phase;
      H(j, i) += -t * stencil[off] * std::conj(phase);
    }
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(H, Eigen::EigenvaluesOnly).eigenvalues();
}

double integrate(const Eigen::VectorXd& f, double h) { return h * f.sum(); }

}  // namespace

TEST(BandSolver, MatchesFiniteDifferenceShallow) {
  const BlochSpectrum s = solve_bands(5.0, 6, 8, 16);
  for (int ik = 0; ik < s.k_points(); ++ik) {
    const Eigen::VectorXd fd = finite_difference_levels(5.0, s.k_grid[ik], 240);
    for (int n = 0; n < 4; ++n) EXPECT_NEAR(s.energies(ik, n), fd[n], 2e-4) << "k " << ik << " n " << n;
  }
}

TEST(BandSolver, MatchesFiniteDifferenceDeep) {
  const BlochSpectrum s = solve_bands(850.0, 8, 4, 0);
  const Eigen::VectorXd fd = finite_difference_levels(850.0, s.k_grid[1], 600);
  for (int n = 0; n < 8; ++n) EXPECT_NEAR(s.energies(1, n), fd[n], 1e-3 * (n + 1)) << "n " << n;
}

TEST(BandSolver, FreeParticleLimit) {
  const BlochSpectrum s = solve_bands(0.0, 3, 4, 4);
  for (int ik = 0; ik < s.k_points(); ++ik) {
    const double k = std::abs(s.k_grid[ik]);
    EXPECT_NEAR(s.energies(ik, 0), k * k, 1e-10);
    EXPECT_NEAR(s.energies(ik, 1), (2.0 - k) * (2.0 - k), 1e-10);
  }
}

TEST(BandSolver, CoefficientsNormalizedAndBandsOrdered) {
  const BlochSpectrum s = solve_bands(850.0, 16, 16, 0);
  for (int ik = 0; ik < s.k_points(); ++ik) {
    for (int n = 0; n < s.n_bands; ++n) {
      EXPECT_NEAR(s.coefficients[ik].col(n).squaredNorm(), 1.0, 1e-12);
      if (n + 1 < s.n_bands) EXPECT_LE(s.energies(ik, n), s.energies(ik, n + 1));
    }
  }
}

TEST(BandSolver, CompletenessWithFullBasis) {
  const int qc = 6;
  const BlochSpectrum s = solve_bands(20.0, 2 * qc + 1, 4, qc);
  for (int ik = 0; ik < s.k_points(); ++ik) {
    const Eigen::MatrixXd& a = s.coefficients[ik];
    EXPECT_LT((a * a.transpose() - Eigen::MatrixXd::Identity(a.rows(), a.rows())).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(BandSolver, ConvergedAtDefaultCutoff) {
  const int qc = default_q_cutoff(850.0);
  const BlochSpectrum a = solve_bands(850.0, 16, 8, qc);
  const BlochSpectrum b = solve_bands(850.0, 16, 8, 2 * qc);
  EXPECT_LT((a.energies - b.energies).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BandSolver, DeepBandsAreFlatComparedToGaps) {
  const BlochSpectrum s = solve_bands(850.0, 16, 32, 0);
  for (int n = 0; n < 12; ++n) {
    const double gap = s.energies.col(n + 1).minCoeff() - s.energies.col(n).maxCoeff();
    EXPECT_LT(s.bandwidth(n), 1e-3 * gap) << "band " << n;
  }
}

TEST(BandSolver, HarmonicLimitOfSpacing) {
  double previous = 0.0;
  for (double w : {100.0, 850.0, 5000.0, 20000.0}) {
    const BlochSpectrum s = solve_bands(w, 3, 4, 0);
    const double ratio = (s.band_energy(1) - s.band_energy(0)) / (2.0 * std::sqrt(w));
    EXPECT_GT(ratio, previous);
    EXPECT_LT(std::abs(1.0 - ratio), 1.0 / std::sqrt(w));
    previous = ratio;
  }
}

TEST(BandSolver, WannierLocalizedRealAndOfDefiniteParity) {
  const BlochSpectrum s = solve_bands(850.0, 8, 32, 0);
  const int points = 4001;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(points, -2.0, 2.0);
  const double h = 4.0 / (points - 1);
  const Eigen::MatrixXd w = sample_wannier(s, x);

  Eigen::VectorXd inside = w.col(0).array().square();
  for (int i = 0; i < points; ++i)
    if (std::abs(x[i]) > 0.5) inside[i] = 0.0;
  EXPECT_LT(1.0 - integrate(inside, h), 1e-3);

  for (int n = 0; n < 8; ++n) {
    const WannierState ws = wannier(s, n);
    for (double xv : {0.03, 0.11, 0.27}) {
      EXPECT_LT(std::abs(ws.amplitude(xv).imag()), 1e-10);
      EXPECT_NEAR(ws(-xv), (n % 2 == 0 ? 1.0 : -1.0) * ws(xv), 1e-10);
      EXPECT_NEAR(ws(xv), sample_wannier(s, Eigen::VectorXd::Constant(1, xv))(0, n), 1e-10);
    }
  }
}

TEST(BandSolver, WannierSignFollowsOscillatorConvention) {
  const BlochSpectrum s = solve_bands(850.0, 6, 16, 0);
  const double x0 = 1.0 / (pi * std::sqrt(s.band_energy(1) - s.band_energy(0)));
  // Hermite functions: H_n(x) leading coefficient positive, so psi_n > 0 just
  // beyond the outermost node on the positive side.
  for (int n = 0; n < 6; ++n) EXPECT_GT(wannier(s, n)(3.0 * x0 * std::sqrt(n + 1.0)), 0.0) << n;
}

TEST(BandSolver, WannierOrthonormalAcrossBandsAndSites) {
  const BlochSpectrum s = solve_bands(850.0, 6, 32, 0);
  const int points = 6001;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(points, -3.0, 3.0);
  const double h = 6.0 / (points - 1);
  const Eigen::MatrixXd w0 = sample_wannier(s, x, 0.0);
  const Eigen::MatrixXd w1 = sample_wannier(s, x, 1.0);
  const Eigen::MatrixXd same = h * w0.transpose() * w0;
  const Eigen::MatrixXd cross = h * w0.transpose() * w1;
  EXPECT_LT((same - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(cross.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BandSolver, TridiagonalEigenpairsMatchDenseSolver) {
  const int n = 40;
  Eigen::VectorXd d(n), e(n - 1);
  for (int i = 0; i < n; ++i) d[i] = std::cos(1.3 * i) * 3.0 + 0.1 * i;
  for (int i = 0; i + 1 < n; ++i) e[i] = 0.5 + 0.4 * std::sin(0.7 * i);
  Eigen::MatrixXd t = d.asDiagonal();
  for (int i = 0; i + 1 < n; ++i) t(i, i + 1) = t(i + 1, i) = e[i];
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(t);
  const auto eig = detail::lowest_tridiagonal_eigenpairs(d, e, 10);
  for (int j = 0; j < 10; ++j) {
    EXPECT_NEAR(eig.values[j], ref.eigenvalues()[j], 1e-10);
    EXPECT_NEAR(std::abs(eig.vectors.col(j).dot(ref.eigenvectors().col(j))), 1.0, 1e-8);
    EXPECT_LT(eig.residuals[j], 1e-12);
  }
}

TEST(BandSolver, RejectsInvalidOptions) {
  EXPECT_THROW(solve_bands(-1.0), config_error);
  EXPECT_THROW(solve_bands(10.0, 4, 7, 8), config_error);
  EXPECT_THROW(solve_bands(10.0, 40, 8, 8), config_error);
  const BlochSpectrum s = solve_bands(10.0, 4, 8, 8);
  EXPECT_THROW(wannier(s, 4), config_error);
}
