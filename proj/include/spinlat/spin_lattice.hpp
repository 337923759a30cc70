#pragma once
// Band structures of the up, down and auxiliary (|F=4, m=3>) lattices at a given
// relative shift, with level energies and cross-lattice overlaps.

#include <Eigen/Dense>

#include <array>
#include <memory>

#include "spinlat/band_solver.hpp"
#include "spinlat/franck_condon.hpp"
#include "spinlat/lattice_model.hpp"
#include "spinlat/pulse.hpp"

namespace spinlat {

struct LatticeSetup {
  AtomConstants atom;
  LatticeGeometry geometry;  // theta is overridden by the requested shift
  int n_max = 15;
  BandSolverOptions bands{16, 32, 0, 1e-9, 1};
  double aux_sigma_plus_weight = 0.875;
  double aux_sigma_minus_weight = 0.125;

  double energy_unit() const { return recoil_angular_frequency(atom.mass, geometry.wavelength); }
  int levels() const { return n_max + 1; }
};

struct ThreeSpinLattice {
  double shift = 0.0;  // x_up - x_down, units of d
  double theta = 0.0;
  std::array<SpinPotential, 3> potentials;
  std::array<std::shared_ptr<const BlochSpectrum>, 3> bands;
  int levels = 0;

  const SpinPotential& potential(Spin s) const { return potentials[static_cast<int>(s)]; }

  // Wannier-state energies U_tot + band energy, E_R.
  Eigen::VectorXd energies(Spin s) const {
    const auto& b = *bands[static_cast<int>(s)];
    Eigen::VectorXd e(levels);
    for (int n = 0; n < levels; ++n) e[n] = potential(s).total_depth + b.band_energy(n);
    return e;
  }

  // Overlaps int W^bra_m(x - x_bra) W^ket_n(x - x_ket) dx, rows n (ket), columns m (bra).
  Eigen::MatrixXd overlap(Spin ket, Spin bra) const {
    const double dx = potential(ket).center - potential(bra).center;
    return fcf_exact(*bands[static_cast<int>(ket)], *bands[static_cast<int>(bra)], dx, 0, levels - 1).values;
  }

  PulseSystem pulse_system(double energy_unit) const {
    PulseSystem sys;
    sys.energy_up = energies(Spin::up);
    sys.energy_down = energies(Spin::down);
    sys.overlap = overlap(Spin::up, Spin::down);
    sys.energy_unit = energy_unit;
    return sys;
  }
};

inline ThreeSpinLattice make_three_spin_lattice(const LatticeSetup& setup, double shift) {
  LatticeGeometry g = setup.geometry;
  g.theta = angle_from_shift(g, shift);
  ThreeSpinLattice t;
  t.theta = g.theta;
  t.levels = setup.levels();
  const SpinPotentials p = potentials_from_angle(g, setup.atom);
  t.potentials = {p.up, p.down,
                  potential_for_weights(g, setup.aux_sigma_plus_weight, setup.aux_sigma_minus_weight, setup.atom)};
  t.shift = p.shift;
  BandSolverOptions o = setup.bands;
  o.n_bands = std::max(o.n_bands, setup.levels());
  if (o.q_cutoff == 0) o.q_cutoff = default_q_cutoff(g.depth_up);
  auto up = std::make_shared<const BlochSpectrum>(solve_bands(p.up.contrast, o));
  auto down = std::make_shared<const BlochSpectrum>(solve_bands(p.down.contrast, o));
  std::shared_ptr<const BlochSpectrum> aux =
      std::abs(t.potentials[2].contrast - p.down.contrast) < 1e-12 * p.down.contrast
          ? down
          : std::make_shared<const BlochSpectrum>(solve_bands(t.potentials[2].contrast, o));
  t.bands = {up, down, aux};
  return t;
}

// Vibrational spacing eps_1 - eps_0 of the up lattice, E_R.
inline double vibrational_spacing(const BlochSpectrum& s) { return s.band_energy(1) - s.band_energy(0); }

// Oscillator length (units of d) matching a level spacing w (E_R):
// x0 = d / (pi sqrt(w)).
inline double oscillator_length_sites(double spacing) { return 1.0 / (pi * std::sqrt(spacing)); }

}  // namespace spinlat
