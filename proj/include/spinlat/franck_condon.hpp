#pragma once
// Overlaps between Wannier states of two lattices displaced by dx.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "spinlat/band_solver.hpp"
#include "spinlat/error.hpp"

namespace spinlat {

// I(n, n') = <bra n'| T_dx |ket n>: rows index the ket lattice, columns the bra
// lattice. T_dx translates the ket lattice by +dx relative to the bra lattice.
struct FranckCondonTable {
  double shift = 0.0;  // units of d
  int site_offset = 0;
  double depth_ket = 0.0;
  double depth_bra = 0.0;
  Eigen::MatrixXd values;

  double operator()(int n, int n_prime) const { return values(n, n_prime); }
  int size() const { return static_cast<int>(values.rows()); }
};

inline FranckCondonTable fcf_exact(const BlochSpectrum& ket, const BlochSpectrum& bra, double shift,
                                   int site_offset = 0, int n_max = -1) {
  if (!ket.compatible(bra))
    throw config_error("Franck-Condon overlap needs spectra on the same k grid and q cutoff");
  const int nb = std::min(ket.n_bands, bra.n_bands);
  const int n = n_max < 0 ? nb : n_max + 1;
  if (n > nb) throw config_error("n_max exceeds the number of solved bands");
  const double dx = shift + site_offset;
  const int p = ket.plane_waves();

  Eigen::MatrixXd even = Eigen::MatrixXd::Zero(n, n);  // cosine kernel
  Eigen::MatrixXd odd = Eigen::MatrixXd::Zero(n, n);   // sine kernel
  Eigen::VectorXd c(p), s(p);
  for (int ik = 0; ik < ket.k_points(); ++ik) {
    for (int i = 0; i < p; ++i) {
      const double ph = pi * (ket.k_grid[ik] + 2.0 * (i - ket.q_cutoff)) * dx;
      c[i] = std::cos(ph);
      s[i] = std::sin(ph);
    }
    const auto bk = ket.coefficients[ik].leftCols(n);
    const auto bb = bra.coefficients[ik].leftCols(n);
    even.noalias() += bk.transpose() * c.asDiagonal() * bb;
    odd.noalias() += bk.transpose() * s.asDiagonal() * bb;
  }
  FranckCondonTable t;
  t.shift = shift;
  t.site_offset = site_offset;
  t.depth_ket = ket.depth;
  t.depth_bra = bra.depth;
  t.values.resize(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if ((a + b) % 2 == 0) t.values(a, b) = even(a, b);
      else t.values(a, b) = a % 2 == 1 ? -odd(a, b) : odd(a, b);
    }
  t.values /= static_cast<double>(ket.k_points());
  return t;
}

// Displaced-oscillator overlap <n'| D |n> for a shift of eta_x in units of
// 2 x0. first_order returns delta + eta (sqrt(n') d_{n',n+1} - sqrt(n) d_{n',n-1}).
inline double fcf_harmonic(double eta_x, int n, int n_prime, bool first_order = false) {
  if (eta_x < 0.0) throw config_error("eta_x must be non-negative");
  if (first_order) {
    double v = n == n_prime ? 1.0 : 0.0;
    if (n_prime == n + 1) v += eta_x * std::sqrt(static_cast<double>(n_prime));
    if (n_prime == n - 1) v -= eta_x * std::sqrt(static_cast<double>(n));
    return v;
  }
  const int lo = std::min(n, n_prime);
  const int hi = std::max(n, n_prime);
  const double e2 = eta_x * eta_x;
  double ratio = 1.0;  // sqrt(lo!/hi!)
  for (int m = lo + 1; m <= hi; ++m) ratio /= std::sqrt(static_cast<double>(m));
  const double mag = std::exp(-0.5 * e2) * std::pow(eta_x, hi - lo) * ratio *
                     std::assoc_laguerre(static_cast<unsigned>(lo), static_cast<unsigned>(hi - lo), e2);
  return (n > n_prime && (n - n_prime) % 2 == 1) ? -mag : mag;
}

inline Eigen::MatrixXd fcf_harmonic_table(double eta_x, int n_max) {
  Eigen::MatrixXd t(n_max + 1, n_max + 1);
  for (int n = 0; n <= n_max; ++n)
    for (int m = 0; m <= n_max; ++m) t(n, m) = fcf_harmonic(eta_x, n, m);
  return t;
}

inline double coupling(const FranckCondonTable& table, double omega0, int n, int n_prime) {
  if (n < 0 || n_prime < 0 || n >= table.size() || n_prime >= table.size())
    throw config_error("transition index outside Franck-Condon table");
  return table(n, n_prime) * omega0;
}

}  // namespace spinlat
