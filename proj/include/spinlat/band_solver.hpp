#pragma once
// Bloch bands of V(x) = W sin^2(pi x) (x in lattice spacings) by plane-wave
// diagonalization, and the real, parity-definite Wannier states built from them.
//
// Units: energies in E_R, x in d, quasimomentum kappa in k_L = pi/d. The constant
// offset W/2 of the potential is kept in the band energies.

#include <Eigen/Dense>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "spinlat/error.hpp"
#include "spinlat/parallel.hpp"
#include "spinlat/units.hpp"

namespace spinlat {

struct BandSolverOptions {
  int n_bands = 16;
  int k_points = 64;
  int q_cutoff = 0;  // 0 selects default_q_cutoff(depth)
  double residual_tolerance = 1e-9;
  int threads = 1;
};

inline int default_q_cutoff(double depth) {
  return std::max(16, static_cast<int>(std::ceil(2.0 * std::sqrt(std::max(depth, 0.0)))) + 8);
}

// Midpoint grid on (-1, 1); never contains the zone center or edge.
inline std::vector<double> quasimomentum_grid(int k_points) {
  std::vector<double> k(k_points);
  for (int j = 0; j < k_points; ++j) k[j] = -1.0 + (2.0 * j + 1.0) / k_points;
  return k;
}

struct BlochSpectrum {
  double depth = 0.0;
  int n_bands = 0;
  int q_cutoff = 0;
  std::vector<double> k_grid;
  std::vector<Eigen::MatrixXd> coefficients;  // per k: (2Q+1) x n_bands, real b_{n,q}
  Eigen::MatrixXd energies;                   // k_points x n_bands

  int k_points() const { return static_cast<int>(k_grid.size()); }
  int plane_waves() const { return 2 * q_cutoff + 1; }

  // a_{n,q}(k) including the parity phase: real for even n, -i b for odd n.
  std::complex<double> coefficient(int n, int q, int ik) const {
    const double b = coefficients[ik](q + q_cutoff, n);
    return n % 2 == 0 ? std::complex<double>(b, 0.0) : std::complex<double>(0.0, -b);
  }

  // Brillouin-zone average of the band, i.e. the Wannier-state energy.
  double band_energy(int n) const { return energies.col(n).mean(); }

  double bandwidth(int n) const { return energies.col(n).maxCoeff() - energies.col(n).minCoeff(); }

  bool compatible(const BlochSpectrum& other) const {
    return q_cutoff == other.q_cutoff && k_grid == other.k_grid;
  }
};

namespace detail {

// Number of eigenvalues of the symmetric tridiagonal (d, e) below x.
inline int sturm_count(const Eigen::VectorXd& d, const Eigen::VectorXd& e2, double x,
                       double pivmin) {
  const Eigen::Index n = d.size();
  int count = 0;
  double q = d[0] - x;
  if (std::abs(q) < pivmin) q = -pivmin;
  if (q < 0.0) ++count;
  for (Eigen::Index i = 1; i < n; ++i) {
    q = d[i] - x - e2[i - 1] / q;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0.0) ++count;
  }
  return count;
}

// Solves (T - s I) x = b in place for tridiagonal T, LU with partial pivoting.
inline void shifted_tridiagonal_solve(const Eigen::VectorXd& d, const Eigen::VectorXd& e, double s,
                                      double tiny, Eigen::VectorXd& b) {
  const Eigen::Index n = d.size();
  Eigen::VectorXd dd = d.array() - s;
  if (n == 1) {
    b[0] /= (std::abs(dd[0]) < tiny ? tiny : dd[0]);
    return;
  }
  Eigen::VectorXd dl = e;
  Eigen::VectorXd du = e;
  Eigen::VectorXd du2 = Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 2, 1));
  std::vector<char> swapped(n - 1, 0);
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    if (std::abs(dd[i]) >= std::abs(dl[i])) {
      if (std::abs(dd[i]) < tiny) dd[i] = tiny;
      const double f = dl[i] / dd[i];
      dl[i] = f;
      dd[i + 1] -= f * du[i];
    } else {
      const double f = dd[i] / dl[i];
      dd[i] = dl[i];
      dl[i] = f;
      const double t = du[i];
      du[i] = dd[i + 1];
      dd[i + 1] = t - f * dd[i + 1];
      if (i < n - 2) {
        du2[i] = du[i + 1];
        du[i + 1] = -f * du[i + 1];
      }
      swapped[i] = 1;
    }
  }
  if (std::abs(dd[n - 1]) < tiny) dd[n - 1] = tiny;
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    if (!swapped[i]) {
      b[i + 1] -= dl[i] * b[i];
    } else {
      const double t = b[i];
      b[i] = b[i + 1];
      b[i + 1] = t - dl[i] * b[i];
    }
  }
  b[n - 1] /= dd[n - 1];
  b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / dd[n - 2];
  for (Eigen::Index i = n - 3; i >= 0; --i)
    b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / dd[i];
}

struct TridiagonalEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::VectorXd residuals;
};

// Lowest `count` eigenpairs of a symmetric tridiagonal matrix: Sturm bisection
// to a coarse bracket, inverse iteration, Rayleigh-quotient eigenvalue.
inline TridiagonalEigen lowest_tridiagonal_eigenpairs(const Eigen::VectorXd& d,
                                                      const Eigen::VectorXd& e, int count) {
  const Eigen::Index n = d.size();
  const Eigen::VectorXd e2 = e.array().square();
  double lo = d[0], hi = d[0], norm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(e[i - 1]) : 0.0) + (i < n - 1 ? std::abs(e[i]) : 0.0);
    lo = std::min(lo, d[i] - r);
    hi = std::max(hi, d[i] + r);
    norm = std::max(norm, std::abs(d[i]) + r);
  }
  norm = std::max(norm, 1.0);
  const double pivmin = DBL_MIN * std::max(1.0, e2.size() ? e2.maxCoeff() : 1.0);

  TridiagonalEigen out;
  out.values.resize(count);
  out.vectors.resize(n, count);
  out.residuals.resize(count);
  double floor = lo;
  for (int j = 0; j < count; ++j) {
    double a = floor, b = hi;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if (b - a <= 1e-9 * norm + 4.0 * pivmin) break;
      (sturm_count(d, e2, mid, pivmin) > j ? b : a) = mid;
    }
    out.values[j] = 0.5 * (a + b);
    floor = a;
  }

  const double tiny = DBL_EPSILON * norm;
  for (int j = 0; j < count; ++j) {
    const double lambda = out.values[j];
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.37 * std::sin(1.7 * static_cast<double>(i) + j);
    v.normalize();
    Eigen::VectorXd tv(n);
    double rayleigh = lambda, residual = INFINITY;
    // Three sweeps suffice unless the start vector barely overlaps the
    // eigenvector (odd bands in very deep lattices).
    for (int it = 0; it < 8 && (it < 3 || residual > 1e-15); ++it) {
      shifted_tridiagonal_solve(d, e, lambda, tiny, v);
      for (int p = 0; p < j; ++p) {
        if (std::abs(out.values[p] - lambda) < 1e-7 * norm) v -= out.vectors.col(p).dot(v) * out.vectors.col(p);
      }
      v.normalize();
      tv = d.cwiseProduct(v);
      tv.head(n - 1) += e.cwiseProduct(v.tail(n - 1));
      tv.tail(n - 1) += e.cwiseProduct(v.head(n - 1));
      rayleigh = v.dot(tv);  // refines the bisection bracket
      residual = (tv - rayleigh * v).norm() / norm;
    }
    out.values[j] = rayleigh;
    out.vectors.col(j) = v;
    out.residuals[j] = residual;
  }
  return out;
}

}  // namespace detail

inline BlochSpectrum solve_bands(double depth, const BandSolverOptions& opts = {}) {
  if (!(depth >= 0.0)) throw config_error("lattice depth must be non-negative");
  if (opts.n_bands < 1 || opts.k_points < 2 || opts.k_points % 2 != 0)
    throw config_error("band solver needs n_bands >= 1 and an even k_points >= 2");
  const int qc = opts.q_cutoff > 0 ? opts.q_cutoff : default_q_cutoff(depth);
  const int p = 2 * qc + 1;
  if (opts.n_bands > p) throw config_error("n_bands exceeds the plane-wave basis size");

  BlochSpectrum spec;
  spec.depth = depth;
  spec.n_bands = opts.n_bands;
  spec.q_cutoff = qc;
  spec.k_grid = quasimomentum_grid(opts.k_points);
  spec.coefficients.assign(opts.k_points, Eigen::MatrixXd());
  spec.energies.resize(opts.k_points, opts.n_bands);

  const Eigen::VectorXd offdiag = Eigen::VectorXd::Constant(p - 1, -0.25 * depth);
  // H(-kappa) is H(kappa) with q -> -q, so only kappa > 0 is diagonalized.
  const int half = opts.k_points / 2;
  std::vector<std::string> failures(opts.k_points);
  parallel_for(half, opts.threads, [&](int j) {
    const int ik = half + j;
    const double kappa = spec.k_grid[ik];
    Eigen::VectorXd diag(p);
    Eigen::VectorXd momentum(p);
    for (int i = 0; i < p; ++i) {
      momentum[i] = kappa + 2.0 * (i - qc);
      diag[i] = momentum[i] * momentum[i] + 0.5 * depth;
    }
    auto eig = detail::lowest_tridiagonal_eigenpairs(diag, offdiag, opts.n_bands);
    for (int n = 0; n < opts.n_bands; ++n) {
      if (!(eig.residuals[n] <= opts.residual_tolerance)) {
        failures[ik] = "band " + std::to_string(n) + " at k index " + std::to_string(ik) +
                       " has eigen-residual " + std::to_string(eig.residuals[n]);
        return;
      }
      // Phase convention: Wannier functions real with the sign of the
      // oscillator eigenfunctions (value or slope at the site center).
      auto col = eig.vectors.col(n);
      double ref = n % 2 == 0 ? col.sum() : momentum.dot(col);
      if ((n / 2) % 2 == 1) ref = -ref;
      if (ref < 0.0) col = -col;
      spec.energies(ik, n) = eig.values[n];
    }
    spec.coefficients[ik] = eig.vectors;
    const int mirror = opts.k_points - 1 - ik;
    spec.coefficients[mirror] = eig.vectors.colwise().reverse();
    for (int n = 1; n < opts.n_bands; n += 2) spec.coefficients[mirror].col(n) *= -1.0;
    spec.energies.row(mirror) = spec.energies.row(ik);
  });
  for (const auto& f : failures)
    if (!f.empty()) throw solver_error("band solver did not converge: " + f);
  return spec;
}

inline BlochSpectrum solve_bands(double depth, int n_bands, int k_points, int q_cutoff) {
  BandSolverOptions o;
  o.n_bands = n_bands;
  o.k_points = k_points;
  o.q_cutoff = q_cutoff;
  return solve_bands(depth, o);
}

struct WannierState {
  const BlochSpectrum* spectrum = nullptr;
  int band = 0;
  int site = 0;

  // Complex amplitude at x (units of d); the imaginary part vanishes up to
  // rounding for the chosen phase convention.
  std::complex<double> amplitude(double x) const {
    const auto& s = *spectrum;
    const double y = x - site;
    std::complex<double> acc = 0.0;
    for (int ik = 0; ik < s.k_points(); ++ik) {
      for (int q = -s.q_cutoff; q <= s.q_cutoff; ++q) {
        const double ph = pi * (s.k_grid[ik] + 2.0 * q) * y;
        acc += s.coefficient(band, q, ik) * std::complex<double>(std::cos(ph), std::sin(ph));
      }
    }
    return acc / static_cast<double>(s.k_points());
  }

  double operator()(double x) const { return amplitude(x).real(); }
};

inline WannierState wannier(const BlochSpectrum& spectrum, int n, int r = 0) {
  if (n < 0 || n >= spectrum.n_bands) throw config_error("Wannier band index out of range");
  return {&spectrum, n, r};
}

// Samples bands 0..n_bands-1 at points x_j - center; returns (points x bands).
inline Eigen::MatrixXd sample_wannier(const BlochSpectrum& s, const Eigen::VectorXd& x,
                                      double center = 0.0, int n_bands = -1) {
  if (n_bands < 0) n_bands = s.n_bands;
  const Eigen::Index m = x.size();
  const int p = s.plane_waves();
  Eigen::MatrixXcd lattice_phase(m, p);
  for (Eigen::Index j = 0; j < m; ++j)
    for (int i = 0; i < p; ++i) {
      const double ph = two_pi * (i - s.q_cutoff) * (x[j] - center);
      lattice_phase(j, i) = {std::cos(ph), std::sin(ph)};
    }
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(m, n_bands);
  for (int ik = 0; ik < s.k_points(); ++ik) {
    const Eigen::MatrixXcd z = lattice_phase * s.coefficients[ik].leftCols(n_bands).cast<std::complex<double>>();
    for (Eigen::Index j = 0; j < m; ++j) {
      const double ph = pi * s.k_grid[ik] * (x[j] - center);
      acc.row(j) += std::complex<double>(std::cos(ph), std::sin(ph)) * z.row(j);
    }
  }
  Eigen::MatrixXd out(m, n_bands);
  for (int n = 0; n < n_bands; ++n) {
    if (n % 2 == 0) out.col(n) = acc.col(n).real();
    else out.col(n) = acc.col(n).imag();
  }
  return out / static_cast<double>(s.k_points());
}

}  // namespace spinlat
