#pragma once
// Microwave pulses acting on |up, n> <-> |down, n'> in the rotating frame.
//
// H = sum_n (eps_up,n - delta(t)) |up,n><up,n| + sum_n' eps_down,n' |down,n'><down,n'|
//     - Omega(t)/2 sum I(n,n') (|up,n><down,n'| + h.c.)
// with energies converted to rad/s. A transition up,n -> down,n' is resonant at
// delta = (eps_up,n - eps_down,n') E_R / hbar.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>
#include <variant>

#include "spinlat/error.hpp"
#include "spinlat/units.hpp"

namespace spinlat {

struct GaussianEnvelope {
  double fwhm = 30e-6;  // s, full width at half maximum of the amplitude
};

struct RectangularEnvelope {
  double duration = 0.0;  // s
};

// sin^2 amplitude with a linear detuning sweep from -sweep/2 to +sweep/2
// around the pulse detuning.
struct ChirpEnvelope {
  double duration = 300e-6;     // s
  double sweep = two_pi * 80e3;  // rad/s, total span
};

using Envelope = std::variant<GaussianEnvelope, RectangularEnvelope, ChirpEnvelope>;

struct PulseSpec {
  Envelope envelope = GaussianEnvelope{};
  double peak_rabi = 0.0;   // Omega_0, rad/s
  double detuning = 0.0;    // delta_MW, rad/s
  double truncation = 2.0;  // Gaussian support is +-truncation * FWHM

  double duration() const {
    if (auto g = std::get_if<GaussianEnvelope>(&envelope)) return 2.0 * truncation * g->fwhm;
    if (auto r = std::get_if<RectangularEnvelope>(&envelope)) return r->duration;
    return std::get<ChirpEnvelope>(envelope).duration;
  }

  // Envelope amplitude in [0, 1] at time t in [0, duration()].
  double shape(double t) const {
    if (auto g = std::get_if<GaussianEnvelope>(&envelope)) {
      const double u = (t - truncation * g->fwhm) / g->fwhm;
      return std::exp(-4.0 * std::log(2.0) * u * u);
    }
    if (std::holds_alternative<RectangularEnvelope>(envelope)) return 1.0;
    const double s = std::sin(pi * t / std::get<ChirpEnvelope>(envelope).duration);
    return s * s;
  }

  double rabi(double t) const { return peak_rabi * shape(t); }

  double detuning_at(double t) const {
    if (auto c = std::get_if<ChirpEnvelope>(&envelope))
      return detuning + c->sweep * (t / c->duration - 0.5);
    return detuning;
  }

  // Integral of shape(t) over the support, in seconds.
  double shape_integral() const {
    if (auto g = std::get_if<GaussianEnvelope>(&envelope)) {
      const double a = 2.0 * std::sqrt(std::log(2.0)) / g->fwhm;
      return std::sqrt(pi) / a * std::erf(a * truncation * g->fwhm);
    }
    if (auto r = std::get_if<RectangularEnvelope>(&envelope)) return r->duration;
    return 0.5 * std::get<ChirpEnvelope>(envelope).duration;
  }

  double area() const { return peak_rabi * shape_integral(); }

  void validate() const {
    if (!(peak_rabi >= 0.0)) throw config_error("pulse peak Rabi frequency must be non-negative");
    if (!(duration() > 0.0) || !std::isfinite(duration()))
      throw config_error("pulse must have a finite positive duration");
    if (std::holds_alternative<GaussianEnvelope>(envelope) && !(truncation > 0.0))
      throw config_error("Gaussian truncation must be positive");
  }
};

// Peak Rabi frequency that gives pulse area `area` (rad) on a transition with
// overlap `overlap`.
inline double peak_rabi_for_area(const PulseSpec& shape, double area, double overlap = 1.0) {
  if (overlap == 0.0) throw config_error("cannot reach a pulse area on a forbidden transition");
  return area / (std::abs(overlap) * shape.shape_integral());
}

// Two-spin motional system: level energies (E_R) and Franck-Condon overlaps.
struct PulseSystem {
  Eigen::VectorXd energy_up;
  Eigen::VectorXd energy_down;
  Eigen::MatrixXd overlap;    // rows: up levels, columns: down levels
  double energy_unit = 1.0;   // rad/s per E_R

  int up_levels() const { return static_cast<int>(energy_up.size()); }
  int down_levels() const { return static_cast<int>(energy_down.size()); }
  int dimension() const { return up_levels() + down_levels(); }

  double resonance(int n_up, int n_down) const {
    return (energy_up[n_up] - energy_down[n_down]) * energy_unit;
  }

  PulseSystem window(int up_first, int up_count, int down_first, int down_count) const {
    PulseSystem w;
    w.energy_up = energy_up.segment(up_first, up_count);
    w.energy_down = energy_down.segment(down_first, down_count);
    w.overlap = overlap.block(up_first, down_first, up_count, down_count);
    w.energy_unit = energy_unit;
    return w;
  }
};

enum class Spin { up = 0, down = 1, aux = 2 };

// Amplitudes over |s, n>, ordered spin-major: index = spin * levels + n.
struct SpinMotionState {
  int levels = 0;
  int spins = 2;
  Eigen::VectorXcd amplitudes;

  static SpinMotionState basis(int levels, Spin s, int n, int spins = 2) {
    SpinMotionState st{levels, spins, Eigen::VectorXcd::Zero(levels * spins)};
    st.amplitudes[static_cast<int>(s) * levels + n] = 1.0;
    return st;
  }

  std::complex<double>& operator()(Spin s, int n) { return amplitudes[static_cast<int>(s) * levels + n]; }
  std::complex<double> operator()(Spin s, int n) const {
    return amplitudes[static_cast<int>(s) * levels + n];
  }

  double population(Spin s, int n) const { return std::norm((*this)(s, n)); }
  double spin_population(Spin s) const {
    return amplitudes.segment(static_cast<int>(s) * levels, levels).squaredNorm();
  }
  double norm() const { return amplitudes.norm(); }
};

struct IntegratorOptions {
  int steps_per_fwhm = 24;     // Gaussian pulses
  int chirp_steps = 800;       // adiabatic chirps
  double taylor_tolerance = 1e-15;
};

namespace detail {

// psi <- exp(-i M) psi for Hermitian M by a scaled Taylor series.
template <class Mat, class Vec>
inline void apply_exponential(const Mat& m, Vec& psi, double tol) {
  const Eigen::Index n = m.rows();
  const std::complex<double> mu = m.trace() / static_cast<double>(n);
  Mat a = m;
  a.diagonal().array() -= mu;
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  const int substeps = std::max(1, static_cast<int>(std::ceil(norm / 2.0)));
  a *= std::complex<double>(0.0, -1.0 / substeps);
  Vec term(n), sum(n);
  for (int s = 0; s < substeps; ++s) {
    term = psi;
    sum = psi;
    const double scale = psi.norm();
    for (int k = 1; k < 60; ++k) {
      term = (a * term) / static_cast<double>(k);
      sum += term;
      if (term.norm() <= tol * scale) break;
    }
    psi = sum;
  }
  psi *= std::exp(std::complex<double>(0.0, -1.0) * mu);
}

// Fourth-order Magnus integration over [0, duration] with `steps` steps.
template <class MatR, class MatC, class VecR, class VecC>
inline void magnus_evolve(const MatR& v, const VecR& d0, int nu, const PulseSpec& pulse, int steps,
                          VecC& psi, double tol) {
  const Eigen::Index dim = v.rows();
  const double h = pulse.duration() / steps;
  const double c1 = 0.5 - std::sqrt(3.0) / 6.0;
  const double c2 = 0.5 + std::sqrt(3.0) / 6.0;
  const double commutator_weight = std::sqrt(3.0) * h * h / 12.0;
  MatC m(dim, dim);
  VecR d1(dim), d2(dim);
  for (int step = 0; step < steps; ++step) {
    const double t1 = (step + c1) * h;
    const double t2 = (step + c2) * h;
    const double w1 = pulse.rabi(t1);
    const double w2 = pulse.rabi(t2);
    d1 = d0;
    d2 = d0;
    d1.head(nu).array() -= pulse.detuning_at(t1);
    d2.head(nu).array() -= pulse.detuning_at(t2);
    for (Eigen::Index j = 0; j < dim; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) {
        const double vij = v(i, j);
        const double c = vij == 0.0 ? 0.0 : vij * (w1 * (d2[i] - d2[j]) - w2 * (d1[i] - d1[j]));
        m(i, j) = {0.5 * h * (w1 + w2) * vij, -commutator_weight * c};
      }
    m.diagonal().real() += 0.5 * h * (d1 + d2);
    apply_exponential(m, psi, tol);
  }
}

}  // namespace detail

// Integrates the Schroedinger equation over the pulse. Gaussian and chirped
// pulses use the fourth-order Magnus integrator; rectangular pulses are exact.
inline Eigen::VectorXcd evolve_amplitudes(const PulseSystem& sys, const PulseSpec& pulse,
                                          const Eigen::VectorXcd& psi0,
                                          const IntegratorOptions& opts = {}) {
  pulse.validate();
  const int nu = sys.up_levels();
  const int nd = sys.down_levels();
  const int dim = nu + nd;
  if (psi0.size() != dim) throw config_error("state dimension does not match the pulse system");

  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim, dim);
  v.topRightCorner(nu, nd) = -0.5 * sys.overlap;
  v.bottomLeftCorner(nd, nu) = -0.5 * sys.overlap.transpose();
  Eigen::VectorXd d0(dim);
  d0.head(nu) = sys.energy_up * sys.energy_unit;
  d0.tail(nd) = sys.energy_down * sys.energy_unit;
  auto diag_at = [&](double t) {
    Eigen::VectorXd d = d0;
    d.head(nu).array() -= pulse.detuning_at(t);
    return d;
  };

  Eigen::VectorXcd psi = psi0;
  const double total = pulse.duration();
  if (std::holds_alternative<RectangularEnvelope>(pulse.envelope)) {
    Eigen::MatrixXd h = pulse.peak_rabi * v;
    h.diagonal() += diag_at(0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const Eigen::VectorXcd phase =
        (es.eigenvalues().cast<std::complex<double>>() * std::complex<double>(0.0, -total)).array().exp();
    const Eigen::MatrixXcd u = es.eigenvectors().cast<std::complex<double>>();
    return u * phase.asDiagonal() * (u.adjoint() * psi);
  }

  int steps = 0;
  if (std::holds_alternative<GaussianEnvelope>(pulse.envelope))
    steps = static_cast<int>(std::ceil(2.0 * pulse.truncation * opts.steps_per_fwhm));
  else
    steps = opts.chirp_steps;
  detail::magnus_evolve<Eigen::MatrixXd, Eigen::MatrixXcd>(v, d0, nu, pulse, steps, psi, opts.taylor_tolerance);
  return psi;
}

inline SpinMotionState evolve_pulse(const PulseSystem& sys, const PulseSpec& pulse,
                                    const SpinMotionState& initial,
                                    const IntegratorOptions& opts = {}) {
  if (initial.spins != 2 || sys.up_levels() != initial.levels || sys.down_levels() != initial.levels)
    throw config_error("evolve_pulse expects a two-spin state matching the system levels");
  SpinMotionState out = initial;
  out.amplitudes = evolve_amplitudes(sys, pulse, initial.amplitudes, opts);
  const double drift = std::abs(out.norm() - initial.norm());
  if (!(drift < 1e-9)) throw solver_error("pulse integration lost unitarity (norm drift " + std::to_string(drift) + ")");
  return out;
}

}  // namespace spinlat
