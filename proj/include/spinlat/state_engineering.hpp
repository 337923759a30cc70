#pragma once
// Preparation sequences (Fock, Fock superposition, coherent states) and the
// filter/push-out measurement of vibrational populations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "spinlat/cooling.hpp"
#include "spinlat/error.hpp"
#include "spinlat/pulse.hpp"
#include "spinlat/spin_lattice.hpp"

namespace spinlat {

struct MicrowaveStep {
  PulseSpec pulse;
  int n_up = 0;                 // target transition |up,n_up> -> |down,n_down>
  int n_down = 0;
  std::optional<double> area;   // units of pi; overrides pulse.peak_rabi
  double detuning_offset = 0.0; // rad/s from the target resonance
};

enum class ShiftMode { instantaneous, timed };

struct LatticeShiftStep {
  double shift = 0.0;  // target x_up - x_down, units of d
  ShiftMode mode = ShiftMode::instantaneous;
};

// Optical repumping of down atoms through |F'=4, m'=4>, projecting the down
// wavefunction onto the lattice of the final spin state.
struct RepumpStep {
  bool conditioned = true;  // keep only the branch back to up
};

// Removes atoms in F=4 (up and aux) with the given efficiency.
struct PushOutStep {
  double efficiency = 1.0;
};

struct WaitStep {
  double duration = 0.0;  // s
  bool dephase = false;   // destroy coherences between motional/spin components
};

using SequenceStep = std::variant<MicrowaveStep, LatticeShiftStep, RepumpStep, PushOutStep, WaitStep>;

// Mixture of unnormalized pure components over {up, down, aux} x levels.
struct SequenceState {
  int levels = 0;
  std::vector<Eigen::VectorXcd> components;
  double shift = 0.0;

  DensityMatrix density() const {
    DensityMatrix d{levels, 3, Eigen::MatrixXcd::Zero(3 * levels, 3 * levels)};
    for (const auto& c : components) d.rho += c * c.adjoint();
    return d;
  }
};

inline SequenceState sequence_state(const SpinMotionState& psi, double shift = 0.0) {
  SequenceState s;
  s.levels = psi.levels;
  s.shift = shift;
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(3 * psi.levels);
  v.head(psi.amplitudes.size()) = psi.amplitudes;
  s.components.push_back(v);
  return s;
}

inline SequenceState sequence_state(const DensityMatrix& rho, double shift = 0.0) {
  if (rho.spins != 3) throw config_error("sequence density matrices must span up, down and aux");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho.rho);
  SequenceState s;
  s.levels = rho.levels;
  s.shift = shift;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i] > 1e-14) s.components.push_back(std::sqrt(es.eigenvalues()[i]) * es.eigenvectors().col(i));
  return s;
}

// Lattice data and defaults shared by the steps of a sequence.
class SequenceContext {
 public:
  explicit SequenceContext(LatticeSetup setup, BranchingRatios branching = {},
                           IntegratorOptions integrator = {})
      : setup_(std::move(setup)), branching_(branching), integrator_(integrator) {}

  const LatticeSetup& setup() const { return setup_; }
  const BranchingRatios& branching() const { return branching_; }
  const IntegratorOptions& integrator() const { return integrator_; }
  double max_shift() const { return shift_from_angle(setup_.geometry, 0.5 * pi); }

  std::shared_ptr<const ThreeSpinLattice> lattice(double shift) const {
    if (shift < -1e-12 || shift > max_shift() + 1e-12)
      throw config_error("lattice shift " + std::to_string(shift) + " d outside reachable range");
    auto it = cache_.find(shift);
    if (it != cache_.end()) return it->second;
    auto l = std::make_shared<const ThreeSpinLattice>(make_three_spin_lattice(setup_, shift));
    return cache_.emplace(shift, l).first->second;
  }

  // Oscillator length from the up-lattice level spacing, units of d.
  double oscillator_length() const { return oscillator_length_sites(vibrational_spacing(*lattice(0.0)->bands[0])); }

 private:
  LatticeSetup setup_;
  BranchingRatios branching_;
  IntegratorOptions integrator_;
  mutable std::map<double, std::shared_ptr<const ThreeSpinLattice>> cache_;
};

namespace detail {

inline void apply_step(const SequenceContext& ctx, const MicrowaveStep& step, SequenceState& st) {
  const auto lat = ctx.lattice(st.shift);
  const PulseSystem sys = lat->pulse_system(ctx.setup().energy_unit());
  const int l = st.levels;
  if (step.n_up < 0 || step.n_up >= l || step.n_down < 0 || step.n_down >= l)
    throw config_error("microwave target transition outside 0..n_max");
  PulseSpec pulse = step.pulse;
  pulse.detuning = sys.resonance(step.n_up, step.n_down) + step.detuning_offset;
  if (step.area) pulse.peak_rabi = peak_rabi_for_area(pulse, *step.area * pi, sys.overlap(step.n_up, step.n_down));
  for (auto& c : st.components) {
    const double before = c.head(2 * l).norm();
    if (before == 0.0) continue;
    c.head(2 * l) = evolve_amplitudes(sys, pulse, c.head(2 * l), ctx.integrator());
    if (std::abs(c.head(2 * l).norm() - before) > 1e-9 * std::max(before, 1.0))
      throw solver_error("microwave step lost unitarity");
  }
}

inline void apply_step(const SequenceContext&, const LatticeShiftStep& step, SequenceState& st) {
  // Both modes preserve vibrational populations: the transport is timed so
  // that no motional excitation is created.
  st.shift = step.shift;
}

inline void apply_step(const SequenceContext& ctx, const RepumpStep& step, SequenceState& st) {
  const auto lat = ctx.lattice(st.shift);
  const int l = st.levels;
  std::vector<Eigen::VectorXcd> out;
  const std::array<Spin, 3> finals{Spin::up, Spin::aux, Spin::down};
  for (const auto& c : st.components) {
    Eigen::VectorXcd rest = c;
    rest.segment(l, l).setZero();
    if (rest.squaredNorm() > 0.0) out.push_back(rest);
    const Eigen::VectorXcd down = c.segment(l, l);
    if (down.squaredNorm() == 0.0) continue;
    for (Spin s : finals) {
      if (step.conditioned && s != Spin::up) continue;
      const double a = ctx.branching()[s];
      if (a == 0.0) continue;
      // <s, m | down, n'> = overlap(ket down, bra s)(n', m)
      const Eigen::MatrixXd k = lat->overlap(Spin::down, s).transpose();
      Eigen::VectorXcd v = Eigen::VectorXcd::Zero(3 * l);
      v.segment(static_cast<int>(s) * l, l) = std::sqrt(a) * (k.cast<std::complex<double>>() * down);
      out.push_back(v);
    }
  }
  st.components = std::move(out);
}

inline void apply_step(const SequenceContext&, const PushOutStep& step, SequenceState& st) {
  if (step.efficiency < 0.0 || step.efficiency > 1.0) throw config_error("push-out efficiency must lie in [0, 1]");
  const int l = st.levels;
  std::vector<Eigen::VectorXcd> out;
  for (const auto& c : st.components) {
    Eigen::VectorXcd down = Eigen::VectorXcd::Zero(3 * l);
    down.segment(l, l) = c.segment(l, l);
    Eigen::VectorXcd f4 = c - down;
    f4 *= std::sqrt(1.0 - step.efficiency);
    if (down.squaredNorm() > 0.0) out.push_back(down);
    if (f4.squaredNorm() > 0.0) out.push_back(f4);
  }
  st.components = std::move(out);
}

inline void apply_step(const SequenceContext& ctx, const WaitStep& step, SequenceState& st) {
  if (step.duration < 0.0) throw config_error("wait duration must be non-negative");
  const auto lat = ctx.lattice(st.shift);
  const double unit = ctx.setup().energy_unit();
  const int l = st.levels;
  Eigen::VectorXd e(3 * l);
  e << lat->energies(Spin::up), lat->energies(Spin::down), lat->energies(Spin::aux);
  for (auto& c : st.components)
    for (int i = 0; i < 3 * l; ++i) c[i] *= std::polar(1.0, -e[i] * unit * step.duration);
  if (step.dephase) {
    Eigen::VectorXd pops = Eigen::VectorXd::Zero(3 * l);
    for (const auto& c : st.components) pops += c.cwiseAbs2();
    st.components.clear();
    for (int i = 0; i < 3 * l; ++i)
      if (pops[i] > 0.0) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(3 * l);
        v[i] = std::sqrt(pops[i]);
        st.components.push_back(v);
      }
  }
}

}  // namespace detail

inline SequenceState run_sequence(const SequenceContext& ctx, SequenceState state,
                                  const std::vector<SequenceStep>& steps) {
  if (state.levels != ctx.setup().levels()) throw config_error("state levels do not match n_max + 1");
  for (const auto& step : steps) std::visit([&](const auto& s) { detail::apply_step(ctx, s, state); }, step);
  return state;
}

// Overlap <down, n_down | T | up, n_up> at a shift.
inline double transition_overlap(const SequenceContext& ctx, double shift, int n_up, int n_down) {
  return ctx.lattice(shift)->overlap(Spin::up, Spin::down)(n_up, n_down);
}

// Shift in [0, max_shift] maximizing |I(n_up, n_down)|: grid scan then golden section.
inline double coupling_maximizing_shift(const SequenceContext& ctx, int n_up, int n_down, int grid = 48) {
  const double hi = ctx.max_shift();
  auto f = [&](double x) { return std::abs(transition_overlap(ctx, x, n_up, n_down)); };
  int best = 0;
  double best_val = -1.0;
  for (int i = 0; i <= grid; ++i) {
    const double v = f(hi * i / grid);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = hi * std::max(best - 1, 0) / grid;
  double b = hi * std::min(best + 1, grid) / grid;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-7) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// First shift above zero where I(n_up, n_down) changes sign.
inline double first_zero_shift(const SequenceContext& ctx, int n_up, int n_down, int grid = 64) {
  const double hi = ctx.max_shift();
  auto f = [&](double x) { return transition_overlap(ctx, x, n_up, n_down); };
  double xa = 0.0, fa = f(0.0);
  for (int i = 1; i <= grid; ++i) {
    const double xb = hi * i / grid;
    const double fb = f(xb);
    if (fa * fb <= 0.0) {
      double lo = xa, hi2 = xb, flo = fa;
      while (hi2 - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi2);
        const double fm = f(mid);
        if ((fm <= 0.0) == (flo <= 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi2 = mid;
        }
      }
      return 0.5 * (lo + hi2);
    }
    xa = xb;
    fa = fb;
  }
  throw solver_error("no zero of the requested overlap within the reachable shift range");
}

struct FockSettings {
  double peak_rabi = two_pi * 60e3;  // bare Rabi frequency, rad/s
  ChirpEnvelope chirp{300e-6, two_pi * 80e3};
};

struct PreparationResult {
  DensityMatrix rho;
  double fidelity = 0.0;
  double shift = 0.0;
};

// |up,0> -> |down,m> by an adiabatic chirp across the m-th red sideband at the
// coupling-maximizing shift.
inline PreparationResult prepare_fock(const SequenceContext& ctx, int m, const FockSettings& fs = {}) {
  PreparationResult r;
  r.shift = m == 0 ? 0.0 : coupling_maximizing_shift(ctx, 0, m);
  MicrowaveStep mw;
  mw.pulse.envelope = fs.chirp;
  mw.pulse.peak_rabi = fs.peak_rabi;
  mw.n_up = 0;
  mw.n_down = m;
  const SequenceState out = run_sequence(
      ctx, sequence_state(SpinMotionState::basis(ctx.setup().levels(), Spin::up, 0, 3)),
      {LatticeShiftStep{r.shift}, mw});
  r.rho = out.density();
  r.fidelity = r.rho.population(Spin::down, m);
  return r;
}

struct SuperpositionResult {
  DensityMatrix rho;
  double p0 = 0.0;  // population of n = 0 summed over spins
  double p2 = 0.0;
  double first_shift = 0.0;
  double zero_shift = 0.0;
};

// Gaussian pulse |up,0> -> |down,2> with area A pi at the coupling maximum,
// shift to the zero of I(2,2), then a carrier pi pulse on n = 0.
inline SuperpositionResult prepare_superposition(const SequenceContext& ctx, double area,
                                                 GaussianEnvelope envelope = {}) {
  SuperpositionResult r;
  r.first_shift = coupling_maximizing_shift(ctx, 0, 2);
  r.zero_shift = first_zero_shift(ctx, 2, 2);
  MicrowaveStep first;
  first.pulse.envelope = envelope;
  first.n_up = 0;
  first.n_down = 2;
  first.area = area;
  MicrowaveStep carrier = first;
  carrier.n_down = 0;
  carrier.area = 1.0;
  const SequenceState out = run_sequence(
      ctx, sequence_state(SpinMotionState::basis(ctx.setup().levels(), Spin::up, 0, 3)),
      {LatticeShiftStep{r.first_shift}, first, LatticeShiftStep{r.zero_shift}, carrier});
  r.rho = out.density();
  r.p0 = r.rho.level_population(0);
  r.p2 = r.rho.level_population(2);
  return r;
}

struct CoherentResult {
  DensityMatrix rho;               // up branch, normalized
  std::vector<double> populations; // P_n of the up branch
  std::vector<double> expected;    // Poisson with alpha = eta_x
  double alpha = 0.0;
  double up_fraction = 0.0;        // weight of the up branch before conditioning
};

inline std::vector<double> poisson_distribution(double alpha, int n_max) {
  std::vector<double> p(n_max + 1);
  double term = std::exp(-alpha * alpha);
  for (int n = 0; n <= n_max; ++n) {
    p[n] = term;
    term *= alpha * alpha / (n + 1);
  }
  return p;
}

// Repump |down,0> while the lattices are displaced by `shift`; the result is
// conditioned on the branch that returns to up. Recoil is neglected.
inline CoherentResult prepare_coherent(const SequenceContext& ctx, double shift) {
  const int l = ctx.setup().levels();
  SequenceState st = sequence_state(SpinMotionState::basis(l, Spin::down, 0, 3), shift);
  st = run_sequence(ctx, st, {RepumpStep{true}});
  CoherentResult r;
  r.rho = st.density();
  r.up_fraction = r.rho.spin_population(Spin::up);
  if (r.up_fraction <= 0.0) throw solver_error("repump produced no up population");
  r.rho.rho /= r.up_fraction;
  for (int n = 0; n < l; ++n) r.populations.push_back(r.rho.population(Spin::up, n));
  r.alpha = shift / (2.0 * ctx.oscillator_length());
  r.expected = poisson_distribution(r.alpha, l - 1);
  return r;
}

inline double mean_occupation(const std::vector<double>& p) {
  double s = 0.0, w = 0.0;
  for (size_t n = 0; n < p.size(); ++n) {
    s += n * p[n];
    w += p[n];
  }
  return s / w;
}

// ---- filter and push-out measurement ----

inline double effective_efficiency(double f, int repetitions) {
  if (f < 0.0 || f > 1.0 || repetitions < 1) throw config_error("need 0 <= f <= 1 and N >= 1");
  return 1.0 - std::pow(1.0 - f, repetitions);
}

struct PopulationDistribution {
  std::vector<double> p;
  double normalization = 1.0;  // survival scale (ceiling)

  // F_n = sum_{m<n} p_m
  double cumulative(int n) const {
    double s = 0.0;
    for (int m = 0; m < n && m < static_cast<int>(p.size()); ++m) s += p[m];
    return s;
  }
};

// Survival after filtering sideband n: atoms with m >= n are transferred with
// efficiency f' and pushed out. loss_per_repetition models off-resonant loss.
inline double filter_survival(const PopulationDistribution& dist, int n, double f, int repetitions,
                              double loss_per_repetition = 0.0) {
  const double fe = effective_efficiency(f, repetitions);
  const double fn = dist.cumulative(n);
  return (fn + (1.0 - fe) * (1.0 - fn)) * std::pow(1.0 - loss_per_repetition, repetitions);
}

struct Reconstruction {
  PopulationDistribution distribution;
  std::vector<double> cumulative;
  std::vector<std::string> warnings;
};

// Inverts plateaus S_0..S_K (sideband index n = 0..K) into p_0..p_{K-1}. The
// survival ceiling c is known (default 1) or, when nullopt, fitted from the
// anchors S_0 = c (1 - f') and S_K = c, which assumes F_K = 1.
inline Reconstruction reconstruct_distribution(const std::vector<double>& plateaus, double f_eff,
                                               std::optional<double> ceiling = 1.0,
                                               double tolerance = 0.1) {
  if (plateaus.size() < 2) throw config_error("need plateaus for at least sidebands 0 and 1");
  if (!(f_eff > 0.0 && f_eff <= 1.0)) throw config_error("effective efficiency must lie in (0, 1]");
  Reconstruction r;
  const double miss = 1.0 - f_eff;
  const double c = ceiling ? *ceiling : (plateaus.front() * miss + plateaus.back()) / (miss * miss + 1.0);
  if (!(c > 0.0)) throw config_error("survival ceiling must be positive");
  r.distribution.normalization = c;
  const int k = static_cast<int>(plateaus.size()) - 1;
  r.cumulative.assign(k + 1, 0.0);
  for (int n = 1; n <= k; ++n) r.cumulative[n] = (plateaus[n] / c - miss) / f_eff;
  for (int n = 0; n < k; ++n) {
    double p = r.cumulative[n + 1] - r.cumulative[n];
    if (p < -tolerance)
      throw config_error("plateau sequence is non-monotone beyond tolerance at sideband " + std::to_string(n + 1));
    if (p < 0.0) {
      r.warnings.push_back("clipped negative population " + std::to_string(p) + " at m = " + std::to_string(n));
      p = 0.0;
    }
    r.distribution.p.push_back(p);
  }
  return r;
}

// Plateau survivals estimated from `atoms` atoms per plateau.
inline std::vector<double> sample_plateaus(const PopulationDistribution& dist, int max_sideband, double f,
                                           int repetitions, int atoms, std::mt19937_64& rng,
                                           double loss_per_repetition = 0.0) {
  std::vector<double> out;
  for (int n = 0; n <= max_sideband; ++n) {
    std::binomial_distribution<int> b(atoms, filter_survival(dist, n, f, repetitions, loss_per_repetition));
    out.push_back(static_cast<double>(b(rng)) / atoms);
  }
  return out;
}

// Boltzmann distribution at temperature T for level spacing hbar*omega.
inline PopulationDistribution thermal_distribution(double temperature, double trap_frequency, int n_max) {
  const double q = std::exp(-constants::hbar * trap_frequency / (constants::k_boltzmann * temperature));
  PopulationDistribution d;
  for (int n = 0; n <= n_max; ++n) d.p.push_back((1.0 - q) * std::pow(q, n));
  return d;
}

}  // namespace spinlat
