#pragma once
// Spin-dependent potentials of a 1-D lattice formed by two counter-propagating
// beams whose polarizations are rotated by an angle theta.

#include <cmath>
#include <complex>
#include <string>

#include "spinlat/error.hpp"
#include "spinlat/units.hpp"

namespace spinlat {

struct AtomConstants {
  double mass = 132.905451961 * constants::amu;  // kg
  double d1_wavelength = 894.6;                  // nm
  double d2_wavelength = 852.3;                  // nm
  double hyperfine_splitting = two_pi * 9.192631770e9;  // rad/s

  void validate() const {
    if (!(mass > 0.0)) throw config_error("atom.mass must be positive");
    if (!(d2_wavelength > 0.0) || !(d1_wavelength >= d2_wavelength))
      throw config_error("atom wavelengths must satisfy d1 >= d2 > 0");
  }
};

inline AtomConstants cesium() { return {}; }

struct LatticeGeometry {
  double wavelength = 866.0;      // nm
  double depth_up = 850.0;        // W_up in lattice recoils
  double theta = 0.0;             // polarization angle, rad
  double sigma_plus_weight_down = 0.125;
  double sigma_minus_weight_down = 0.875;

  double spacing() const { return 0.5 * wavelength; }  // nm

  void validate() const {
    if (!(wavelength > 0.0)) throw config_error("lattice.wavelength_nm must be positive");
    if (!(depth_up > 0.0)) throw config_error("lattice.depth_up must be positive");
    if (!(theta >= 0.0 && theta <= 0.5 * pi + 1e-12))
      throw config_error("lattice.theta must lie in [0, pi/2]");
    if (sigma_plus_weight_down < 0.0 || sigma_minus_weight_down < 0.0 ||
        std::abs(sigma_plus_weight_down + sigma_minus_weight_down - 1.0) > 1e-12)
      throw config_error("lattice sigma weights must be non-negative and sum to 1");
  }
};

struct SpinPotential {
  double contrast = 0.0;        // W_s, E_R
  double total_depth = 0.0;     // U_s^tot, E_R
  double center = 0.0;          // x_s, units of d
  double trap_frequency = 0.0;  // harmonic omega_vib, rad/s
};

struct LambDicke {
  double eta_x = 0.0;
  double eta_k = 0.0;
  std::complex<double> eta() const { return {eta_k, eta_x}; }
};

inline double magic_wavelength(const AtomConstants& atom) {
  const double l1 = atom.d1_wavelength;
  const double l2 = atom.d2_wavelength;
  return l2 + (l1 - l2) / (2.0 * l1 / l2 + 1.0);
}

// Harmonic trap frequency (rad/s) of a lattice with contrast W (E_R).
inline double harmonic_trap_frequency(double contrast, double recoil_rad) {
  return 2.0 * std::sqrt(contrast) * recoil_rad;
}

// Potential for a state coupling to sigma+/sigma- standing waves with the given
// weights. The sigma+ wave is displaced by +theta/2 and the sigma- wave by
// -theta/2 (in units of k_L x).
inline SpinPotential potential_for_weights(const LatticeGeometry& geom, double w_plus,
                                           double w_minus, const AtomConstants& atom = cesium()) {
  const double c = std::cos(geom.theta);
  const double s = std::sin(geom.theta);
  const double x = (w_plus + w_minus) * c;
  const double y = (w_minus - w_plus) * s;
  SpinPotential p;
  p.contrast = geom.depth_up * std::hypot(x, y);
  p.total_depth = -0.5 * (geom.depth_up + p.contrast);
  p.center = -std::atan2(y, x) / two_pi;
  p.trap_frequency =
      harmonic_trap_frequency(p.contrast, recoil_angular_frequency(atom.mass, geom.wavelength));
  return p;
}

struct SpinPotentials {
  SpinPotential up;
  SpinPotential down;
  double shift = 0.0;  // x_up - x_down, units of d

  double depth_offset() const { return up.total_depth - down.total_depth; }
};

inline SpinPotentials potentials_from_angle(const LatticeGeometry& geom,
                                            const AtomConstants& atom = cesium()) {
  geom.validate();
  SpinPotentials out;
  out.up = potential_for_weights(geom, 1.0, 0.0, atom);
  out.down = potential_for_weights(geom, geom.sigma_plus_weight_down,
                                   geom.sigma_minus_weight_down, atom);
  out.shift = out.up.center - out.down.center;
  return out;
}

// Relative shift (units of d) as a function of theta with the configured weights.
inline double shift_from_angle(const LatticeGeometry& geom, double theta) {
  LatticeGeometry g = geom;
  g.theta = theta;
  return potentials_from_angle(g).shift;
}

// Inverse of shift_from_angle by bisection (shift is monotone in theta).
inline double angle_from_shift(const LatticeGeometry& geom, double shift) {
  const double max_shift = shift_from_angle(geom, 0.5 * pi);
  if (shift < -1e-14 || shift > max_shift + 1e-12)
    throw config_error("lattice shift outside reachable range [0, " + std::to_string(max_shift) +
                       "] d");
  double lo = 0.0;
  double hi = 0.5 * pi;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (shift_from_angle(geom, mid) < shift ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Ground-state rms width sqrt(hbar/(2 m omega)) in metres.
inline double oscillator_length(double trap_frequency, const AtomConstants& atom) {
  return std::sqrt(constants::hbar / (2.0 * atom.mass * trap_frequency));
}

inline LambDicke lamb_dicke(double shift_nm, double trap_frequency, const AtomConstants& atom,
                            double k_opt) {
  if (shift_nm < 0.0) throw config_error("lattice shift must be non-negative");
  const double x0 = oscillator_length(trap_frequency, atom);
  return {shift_nm * 1e-9 / (2.0 * x0), k_opt * x0};
}

// Uses the harmonic trap frequency of the up lattice.
inline LambDicke lamb_dicke(double shift_nm, const LatticeGeometry& geom,
                            const AtomConstants& atom, double k_opt) {
  const double w = harmonic_trap_frequency(geom.depth_up,
                                           recoil_angular_frequency(atom.mass, geom.wavelength));
  return lamb_dicke(shift_nm, w, atom, k_opt);
}

inline double optical_wavenumber(double wavelength_nm) { return two_pi / (wavelength_nm * 1e-9); }

}  // namespace spinlat
