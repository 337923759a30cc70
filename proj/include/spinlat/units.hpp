#pragma once
// Physical constants and unit conversions for lattice-recoil units.

#include <cmath>
#include <numbers>

namespace spinlat {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace constants {
inline constexpr double hbar = 1.054571817e-34;   // J s
inline constexpr double h = 6.62607015e-34;       // J s
inline constexpr double k_boltzmann = 1.380649e-23; // J/K
inline constexpr double amu = 1.66053906660e-27;  // kg
}  // namespace constants

inline double recoil_energy(double mass, double wavelength_nm) {
  const double k = two_pi / (wavelength_nm * 1e-9);
  return constants::hbar * constants::hbar * k * k / (2.0 * mass);
}

// E_R / hbar in rad/s.
inline double recoil_angular_frequency(double mass, double wavelength_nm) {
  return recoil_energy(mass, wavelength_nm) / constants::hbar;
}

inline double hz_to_rad(double f_hz) { return two_pi * f_hz; }
inline double rad_to_hz(double w) { return w / two_pi; }

}  // namespace spinlat
