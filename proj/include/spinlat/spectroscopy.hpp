#pragma once
// Microwave sideband spectra with transverse thermal broadening, and a
// least-squares fit of lattice parameters to measured spectra.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spinlat/band_solver.hpp"
#include "spinlat/error.hpp"
#include "spinlat/franck_condon.hpp"
#include "spinlat/lattice_model.hpp"
#include "spinlat/parallel.hpp"
#include "spinlat/pulse.hpp"
#include "spinlat/quadrature.hpp"
#include "spinlat/units.hpp"

namespace spinlat {

// Boltzmann populations of an oscillator with mean occupation nbar, truncated
// at n_max and renormalized.
inline std::vector<double> thermal_populations(double nbar, int n_max) {
  std::vector<double> p(n_max + 1, 0.0);
  if (nbar <= 0.0) {
    p[0] = 1.0;
    return p;
  }
  const double r = nbar / (nbar + 1.0);
  double sum = 0.0;
  for (int n = 0; n <= n_max; ++n) sum += (p[n] = std::pow(r, n));
  for (auto& x : p) x /= sum;
  return p;
}

// Waist (m) of a Gaussian beam whose transverse harmonic expansion gives the
// radial trap frequency omega_rad for a lattice of contrast depth_up (E_R).
inline double beam_waist(double depth_up, double wavelength_nm, double radial_frequency,
                         const AtomConstants& atom) {
  const double w_joule = depth_up * recoil_energy(atom.mass, wavelength_nm);
  return std::sqrt(4.0 * w_joule / (atom.mass * radial_frequency * radial_frequency));
}

// Depth scale exp(-2 rho^2 / w0^2) at radius rho.
inline double radial_depth_scale(double rho, double waist) {
  return std::exp(-2.0 * rho * rho / (waist * waist));
}

// Potentials at radius rho (m): depths scaled by the Gaussian profile, trap
// frequencies by its square root.
inline SpinPotentials radial_parameters(const LatticeGeometry& geom, const AtomConstants& atom,
                                        double rho, double radial_frequency) {
  const double g = radial_depth_scale(rho, beam_waist(geom.depth_up, geom.wavelength, radial_frequency, atom));
  SpinPotentials p = potentials_from_angle(geom, atom);
  for (SpinPotential* s : {&p.up, &p.down}) {
    s->contrast *= g;
    s->total_depth *= g;
    s->trap_frequency *= std::sqrt(g);
  }
  return p;
}

// Radial quadrature over u = rho^2 / (2 sigma^2). High sidebands move by more
// than the Fourier width across the ensemble, so sparse Gauss-Laguerre nodes
// leave ripples. uniform_panels splits [0, 8] into equal panels plus a tail
// bin, each represented by its conditional mean, which keeps the mean shift
// exact and the node spacing bounded.
enum class RadialRule { uniform_panels, gauss_laguerre };

struct ThermalEnsemble {
  double temperature_2d = 0.0;  // K
  double radial_frequency = 0.0;  // rad/s
  double sigma = 0.0;             // m
  std::vector<double> radii;      // m
  std::vector<double> weights;

  static ThermalEnsemble make(const AtomConstants& atom, double temperature_2d,
                              double radial_frequency, int nodes,
                              RadialRule rule = RadialRule::uniform_panels) {
    if (temperature_2d < 0.0) throw config_error("T_2D must be non-negative");
    if (!(radial_frequency > 0.0)) throw config_error("radial frequency must be positive");
    if (nodes < 1) throw config_error("thermal ensemble needs at least one node");
    ThermalEnsemble e;
    e.temperature_2d = temperature_2d;
    e.radial_frequency = radial_frequency;
    e.sigma = std::sqrt(constants::k_boltzmann * temperature_2d /
                        (atom.mass * radial_frequency * radial_frequency));
    // u = rho^2 / (2 sigma^2) is exponentially distributed.
    std::vector<double> u, w;
    if (rule == RadialRule::gauss_laguerre) {
      std::tie(u, w) = gauss_laguerre(nodes);
    } else {
      // Conditional mean and weight of the exponential law on [a, b).
      auto bin = [&](double a, double b) {
        const double ea = std::exp(-a);
        const double eb = std::isinf(b) ? 0.0 : std::exp(-b);
        const double mass = ea - eb;
        const double first = (a + 1.0) * ea - (std::isinf(b) ? 0.0 : (b + 1.0) * eb);
        u.push_back(first / mass);
        w.push_back(mass);
      };
      const double u_max = 8.0;
      const int panels = std::max(nodes - 1, 0);
      for (int i = 0; i < panels; ++i) bin(u_max * i / panels, u_max * (i + 1) / panels);
      bin(panels == 0 ? 0.0 : u_max, INFINITY);
    }
    for (int i = 0; i < nodes; ++i) {
      e.radii.push_back(e.sigma * std::sqrt(2.0 * u[i]));
      e.weights.push_back(w[i]);
    }
    return e;
  }
};

struct SpectrumParameters {
  double shift = 0.0;           // dx, units of d
  double depth_up = 850.0;      // W_up, E_R
  double depth_down = 850.0;    // W_down, E_R
  double depth_offset = 0.0;    // U_up^tot - U_down^tot, E_R
  double temperature_2d = 0.0;  // K

  std::array<double, 4> fit_vector() const { return {shift, depth_down, depth_offset, temperature_2d}; }
  void set_fit_vector(const std::array<double, 4>& v) {
    shift = v[0];
    depth_down = v[1];
    depth_offset = v[2];
    temperature_2d = v[3];
  }
};

inline const std::array<const char*, 4>& fit_parameter_names() {
  static const std::array<const char*, 4> names{"shift", "depth_down", "depth_offset", "temperature_2d"};
  return names;
}

// Parameters implied by the lattice geometry at relative shift dx (units of d).
inline SpectrumParameters parameters_at_shift(const LatticeGeometry& geom, double shift,
                                              double temperature_2d = 0.0) {
  LatticeGeometry g = geom;
  g.theta = angle_from_shift(geom, shift);
  const SpinPotentials p = potentials_from_angle(g);
  return {shift, p.up.contrast, p.down.contrast, p.depth_offset(), temperature_2d};
}

struct SpectrumSettings {
  AtomConstants atom;
  double wavelength = 866.0;                 // nm
  double radial_frequency = two_pi * 1e3;    // rad/s
  int n_max = 15;
  BandSolverOptions bands{16, 32, 0, 1e-9, 1};
  PulseSpec pulse;                           // envelope and peak Rabi; detuning is scanned
  IntegratorOptions integrator{16, 800, 1e-15};
  int thermal_nodes = 32;
  RadialRule radial_rule = RadialRule::uniform_panels;
  int window = 2;                            // levels kept on each side of the resonant pair
  std::vector<double> initial_populations = thermal_populations(1.4, 15);
  int threads = 1;

  double energy_unit() const { return recoil_angular_frequency(atom.mass, wavelength); }
};

// Peak Rabi frequency of a carrier pi pulse for the settings' envelope.
inline double carrier_pi_rabi(const PulseSpec& pulse) { return peak_rabi_for_area(pulse, pi); }

// Level energies and overlaps for lattices of depths (W_up, W_down) scaled by g.
inline PulseSystem lattice_pulse_system(const SpectrumSettings& s, const SpectrumParameters& p,
                                        double g = 1.0) {
  BandSolverOptions o = s.bands;
  o.n_bands = std::max(o.n_bands, s.n_max + 1);
  if (o.q_cutoff == 0) o.q_cutoff = default_q_cutoff(std::max(p.depth_up, p.depth_down));
  const BlochSpectrum up = solve_bands(p.depth_up * g, o);
  const BlochSpectrum down = solve_bands(p.depth_down * g, o);
  PulseSystem sys;
  sys.energy_unit = s.energy_unit();
  sys.overlap = fcf_exact(up, down, p.shift, 0, s.n_max).values;
  sys.energy_up.resize(s.n_max + 1);
  sys.energy_down.resize(s.n_max + 1);
  const double total_up = -p.depth_up * g;
  const double total_down = (-p.depth_up - p.depth_offset) * g;
  for (int n = 0; n <= s.n_max; ++n) {
    sys.energy_up[n] = total_up + up.band_energy(n);
    sys.energy_down[n] = total_down + down.band_energy(n);
  }
  return sys;
}

struct Peak {
  double detuning = 0.0;  // rad/s
  double height = 0.0;
};

struct SpectrumResult {
  std::vector<double> detunings;    // rad/s
  std::vector<double> probability;  // transfer to down
  std::vector<Peak> peaks;
};

// Local maxima above `threshold`, refined by a parabola through three points.
inline std::vector<Peak> find_peaks(const std::vector<double>& x, const std::vector<double>& y,
                                    double threshold = 0.01) {
  std::vector<Peak> peaks;
  for (size_t i = 1; i + 1 < y.size(); ++i) {
    if (y[i] < threshold || y[i] < y[i - 1] || y[i] <= y[i + 1]) continue;
    const double denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
    double off = denom != 0.0 ? 0.5 * (y[i - 1] - y[i + 1]) / denom : 0.0;
    off = std::clamp(off, -0.5, 0.5);
    const double h = 0.5 * (x[i + 1] - x[i - 1]);
    peaks.push_back({x[i] + off * h, y[i] - 0.25 * (y[i - 1] - y[i + 1]) * off});
  }
  return peaks;
}

// Index of the down level used as window center, per (detuning, initial level).
using WindowMap = std::vector<std::vector<int>>;

inline WindowMap resonant_windows(const PulseSystem& sys, const std::vector<double>& detunings,
                                  int up_levels) {
  WindowMap map(detunings.size(), std::vector<int>(up_levels, 0));
  for (size_t i = 0; i < detunings.size(); ++i)
    for (int n0 = 0; n0 < up_levels; ++n0) {
      double best = INFINITY;
      for (int m = 0; m < sys.down_levels(); ++m) {
        const double d = std::abs(detunings[i] - sys.resonance(n0, m));
        if (d < best) {
          best = d;
          map[i][n0] = m;
        }
      }
    }
  return map;
}

// Transfer probability out of |up, n0> at one detuning, evolved in a window of
// levels around the resonant pair (window < 0 uses the full basis).
inline double transfer_probability(const PulseSystem& sys, const PulseSpec& pulse, int n0,
                                   int center_down, int window, const IntegratorOptions& opts) {
  const int levels = sys.up_levels();
  int u0 = 0, uc = levels, d0 = 0, dc = sys.down_levels();
  if (window >= 0) {
    u0 = std::max(0, n0 - window);
    uc = std::min(levels - 1, n0 + window) - u0 + 1;
    d0 = std::max(0, center_down - window);
    dc = std::min(sys.down_levels() - 1, center_down + window) - d0 + 1;
  }
  const PulseSystem w = sys.window(u0, uc, d0, dc);
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(uc + dc);
  psi[n0 - u0] = 1.0;
  psi = evolve_amplitudes(w, pulse, psi, opts);
  return std::clamp(psi.tail(dc).squaredNorm(), 0.0, 1.0);
}

inline SpectrumResult simulate_spectrum(const SpectrumSettings& s, const SpectrumParameters& p,
                                        const std::vector<double>& detunings,
                                        const WindowMap* windows = nullptr) {
  if (!(p.depth_up > 0.0) || !(p.depth_down > 0.0)) throw config_error("lattice depths must be positive");
  if (s.initial_populations.empty() || static_cast<int>(s.initial_populations.size()) > s.n_max + 1)
    throw config_error("initial populations must cover 1..n_max+1 levels");
  s.pulse.validate();
  const int n_init = static_cast<int>(s.initial_populations.size());
  const ThermalEnsemble ens = ThermalEnsemble::make(s.atom, p.temperature_2d, s.radial_frequency,
                                                    p.temperature_2d > 0.0 ? s.thermal_nodes : 1, s.radial_rule);
  const double waist = beam_waist(p.depth_up, s.wavelength, s.radial_frequency, s.atom);

  WindowMap own;
  if (!windows) {
    own = resonant_windows(lattice_pulse_system(s, p), detunings, n_init);
    windows = &own;
  }
  if (windows->size() != detunings.size()) throw config_error("window map does not match detuning grid");

  const int nodes = static_cast<int>(ens.radii.size());
  std::vector<PulseSystem> systems(nodes);
  parallel_for(nodes, s.threads, [&](int i) {
    systems[i] = lattice_pulse_system(s, p, radial_depth_scale(ens.radii[i], waist));
  });

  SpectrumResult out;
  out.detunings = detunings;
  out.probability.assign(detunings.size(), 0.0);
  parallel_for(static_cast<int>(detunings.size()), s.threads, [&](int i) {
    PulseSpec pulse = s.pulse;
    pulse.detuning = detunings[i];
    double acc = 0.0;
    for (int node = 0; node < nodes; ++node) {
      double pn = 0.0;
      for (int n0 = 0; n0 < n_init; ++n0) {
        if (s.initial_populations[n0] == 0.0) continue;
        pn += s.initial_populations[n0] *
              transfer_probability(systems[node], pulse, n0, (*windows)[i][n0], s.window, s.integrator);
      }
      acc += ens.weights[node] * pn;
    }
    out.probability[i] = std::clamp(acc, 0.0, 1.0);
  });
  out.peaks = find_peaks(out.detunings, out.probability);
  return out;
}

// Uniform detuning grid, in rad/s.
inline std::vector<double> detuning_grid(double start, double stop, int points) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i)
    g[i] = points == 1 ? start : start + (stop - start) * i / (points - 1.0);
  return g;
}

struct SpectrumData {
  std::vector<double> detunings;  // rad/s
  std::vector<double> probability;
  std::vector<double> sigma;
};

// Plain binomial standard errors with a floor of one atom.
inline std::vector<double> binomial_sigma(const std::vector<double>& p, int atoms) {
  std::vector<double> s(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    const double v = std::max(p[i] * (1.0 - p[i]), 1.0 / atoms) / atoms;
    s[i] = std::sqrt(v);
  }
  return s;
}

struct FitOptions {
  std::array<bool, 4> free{true, true, true, true};  // shift, depth_down, depth_offset, T_2D
  int max_iterations = 40;
  double tolerance = 1e-9;  // relative parameter step and chi2 change
  // Atoms per point for binomial weights taken from the model line instead of
  // data.sigma; 0 uses data.sigma. Weights from the noisy data bias the fit
  // toward points that fluctuated low.
  int variance_atoms = 0;
};

struct FitResult {
  SpectrumParameters value;
  std::array<double, 4> standard_error{};
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
  double chi2 = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

// Levenberg-Marquardt with a forward-difference Jacobian. The window map is
// frozen during each run so the model is smooth in the parameters, then
// recomputed at the solution; the fit repeats until the map stops changing.
inline FitResult fit_spectrum(const SpectrumSettings& s, const SpectrumData& data,
                              const SpectrumParameters& guess, const FitOptions& opts = {}) {
  const size_t m = data.detunings.size();
  if (m == 0 || data.probability.size() != m || data.sigma.size() != m)
    throw config_error("spectrum data columns must have equal nonzero length");
  std::vector<int> free_idx;
  for (int j = 0; j < 4; ++j)
    if (opts.free[j]) free_idx.push_back(j);
  const int nf = static_cast<int>(free_idx.size());
  if (nf == 0) throw config_error("fit needs at least one free parameter");
  if (opts.variance_atoms < 0) throw config_error("fit variance_atoms must be non-negative");

  const int n_init = static_cast<int>(s.initial_populations.size());
  auto windows_at = [&](const std::array<double, 4>& v) {
    SpectrumParameters p = guess;
    p.set_fit_vector(v);
    return resonant_windows(lattice_pulse_system(s, p), data.detunings, n_init);
  };
  WindowMap windows;
  FitResult res;
  auto clamp_params = [&](std::array<double, 4> v) {
    v[0] = std::clamp(v[0], 0.0, 0.5);
    v[1] = std::max(v[1], 1e-3);
    v[3] = std::max(v[3], 0.0);
    return v;
  };
  auto residuals = [&](const std::array<double, 4>& v) {
    SpectrumParameters p = guess;
    p.set_fit_vector(v);
    const SpectrumResult r = simulate_spectrum(s, p, data.detunings, &windows);
    ++res.evaluations;
    const std::vector<double> sigma =
        opts.variance_atoms > 0 ? binomial_sigma(r.probability, opts.variance_atoms) : data.sigma;
    Eigen::VectorXd out(m);
    for (size_t i = 0; i < m; ++i) out[i] = (r.probability[i] - data.probability[i]) / sigma[i];
    return out;
  };
  const std::array<double, 4> scale{1e-3, 1.0, 0.1, 1e-7};  // absolute step floors

  std::array<double, 4> v = clamp_params(guess.fit_vector());
  Eigen::MatrixXd jac(m, nf);
  double chi2 = 0.0;
  for (int pass = 0; pass < 4; ++pass) {
    const WindowMap next = windows_at(v);
    if (pass > 0 && next == windows) break;
    windows = next;
    Eigen::VectorXd r = residuals(v);
    chi2 = r.squaredNorm();
    double lambda = 1e-3;
    bool converged = false;
    for (int it = 0; it < opts.max_iterations && !converged; ++it) {
      ++res.iterations;
      for (int c = 0; c < nf; ++c) {
        const int j = free_idx[c];
        std::array<double, 4> vp = v;
        double h = std::max(1e-5 * std::abs(v[j]), 1e-3 * scale[j]);
        vp[j] += h;
        if (j == 3 && vp[3] < 0.0) vp[3] = 0.0;
        jac.col(c) = (residuals(vp) - r) / (vp[j] - v[j]);
      }
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      const Eigen::VectorXd jtr = jac.transpose() * r;
      // Conditioning is judged on the correlation form, independent of units.
      const Eigen::VectorXd dinv = jtj.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
      if (jtj.diagonal().minCoeff() <= 0.0 ||
          Eigen::JacobiSVD<Eigen::MatrixXd>(dinv.asDiagonal() * jtj * dinv.asDiagonal()).singularValues().tail(1)[0] <= 1e-12)
        throw solver_error("fit Jacobian is degenerate; parameters are not identifiable from the data");
      bool accepted = false;
      for (int tries = 0; tries < 12 && !accepted; ++tries) {
        Eigen::MatrixXd a = jtj;
        a.diagonal() += lambda * jtj.diagonal();
        const Eigen::VectorXd step = -a.ldlt().solve(jtr);
        std::array<double, 4> vn = v;
        for (int c = 0; c < nf; ++c) vn[free_idx[c]] += step[c];
        vn = clamp_params(vn);
        const Eigen::VectorXd rn = residuals(vn);
        const double chi2n = rn.squaredNorm();
        if (chi2n <= chi2) {
          double rel = 0.0;
          for (int c = 0; c < nf; ++c) {
            const int j = free_idx[c];
            rel = std::max(rel, std::abs(vn[j] - v[j]) / std::max(std::abs(v[j]), scale[j]));
          }
          converged = rel < opts.tolerance || (chi2 - chi2n) <= opts.tolerance * std::max(chi2, 1e-300);
          v = vn;
          r = rn;
          chi2 = chi2n;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
        } else {
          lambda *= 10.0;
        }
      }
      if (!accepted) converged = true;  // no downhill step left at this resolution
    }
    if (!converged) throw solver_error("spectrum fit did not converge within " + std::to_string(opts.max_iterations) + " iterations");
  }

  res.value = guess;
  res.value.set_fit_vector(v);
  res.chi2 = chi2;
  const Eigen::MatrixXd cov = (jac.transpose() * jac).inverse();
  for (int a = 0; a < nf; ++a) {
    for (int b = 0; b < nf; ++b) res.covariance(free_idx[a], free_idx[b]) = cov(a, b);
    res.standard_error[free_idx[a]] = std::sqrt(cov(a, a));
  }
  return res;
}

}  // namespace spinlat
