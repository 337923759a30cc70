#pragma once
// Microwave sideband cooling with three internal states (up, down, aux) as a
// Lindblad master equation, its steady state, the (eta_x, Omega_0) cooling map,
// and the harmonic energy-balance formulas.
//
// Internally the generator uses microseconds as time unit: Hamiltonian entries in
// rad/us and rates in 1/us. Basis order is spin-major: up 0..N, down 0..N, aux 0..N.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "spinlat/band_solver.hpp"
#include "spinlat/error.hpp"
#include "spinlat/franck_condon.hpp"
#include "spinlat/lattice_model.hpp"
#include "spinlat/parallel.hpp"
#include "spinlat/pulse.hpp"
#include "spinlat/quadrature.hpp"
#include "spinlat/spin_lattice.hpp"
#include "spinlat/units.hpp"

namespace spinlat {

inline constexpr double liouvillian_time_unit = 1e-6;  // s

// Decay of |F'=4, m'=4> into up (|4,4>), aux (|4,3>) and down (|3,3>):
// 7/12 to F=4 split 4:1 between m=4 and m=3, 5/12 to F=3.
struct BranchingRatios {
  double up = 7.0 / 15.0;
  double aux = 7.0 / 60.0;
  double down = 5.0 / 12.0;

  double operator[](Spin s) const { return s == Spin::up ? up : s == Spin::aux ? aux : down; }
};

enum class EmissionPattern { isotropic, dipole_sigma };

struct CoolingParams {
  double omega0 = two_pi * 16e3;  // bare microwave Rabi frequency, rad/s
  int target_up = 1;              // microwave resonant with |up,target_up> -> |down,target_down>
  int target_down = 0;
  double eta_x = 0.3;
  double eta_k = 0.1;
  double repump_rate = 35e3;          // R_down, 1/s
  double pump_rate = 35e3;            // R_aux, 1/s
  double lattice_scatter_rate = 15.0; // R_up, 1/s
  BranchingRatios branching;
  EmissionPattern emission = EmissionPattern::isotropic;
  int emission_nodes = 16;
  bool target_only = false;  // drop all microwave couplings except the target transition

  void validate(int n_max) const {
    if (!(omega0 >= 0.0)) throw config_error("cooling.omega0 must be non-negative");
    if (repump_rate < 0.0 || pump_rate < 0.0 || lattice_scatter_rate < 0.0)
      throw config_error("cooling rates must be non-negative");
    if (branching.up < 0.0 || branching.aux < 0.0 || branching.down < 0.0 ||
        std::abs(branching.up + branching.aux + branching.down - 1.0) > 1e-9)
      throw config_error("branching ratios must be non-negative and sum to 1");
    if (eta_x < 0.0 || eta_k < 0.0) throw config_error("Lamb-Dicke parameters must be non-negative");
    if (target_up < 0 || target_up > n_max || target_down < 0 || target_down > n_max)
      throw config_error("cooling target transition outside 0..n_max");
    if (emission_nodes < 1) throw config_error("emission quadrature needs at least one node");
  }
};

// Recoil-and-projection matrix elements for one (eta_x, eta_k): everything in
// the model that does not depend on Omega_0 or the optical rates.
struct RecoilProjection {
  ThreeSpinLattice lattice;
  double spacing = 0.0;  // up-lattice eps_1 - eps_0, E_R
  double x0 = 0.0;       // oscillator length from the spacing, d
  double k_opt = 0.0;    // optical wavenumber, 1/d
  // m2[s][s'](n, n') = <|<s,n| e^{i dk x} |s',n'>|^2> averaged over emission.
  std::array<std::array<Eigen::MatrixXd, 3>, 3> m2;
};

// Emission-direction quadrature over u = cos(angle to the lattice axis).
inline QuadratureRule emission_rule(EmissionPattern pattern, int nodes) {
  auto [u, w] = gauss_legendre(nodes);
  for (size_t i = 0; i < u.size(); ++i)
    w[i] *= pattern == EmissionPattern::isotropic ? 0.5 : 0.375 * (1.0 + u[i] * u[i]);
  return {u, w};
}

inline RecoilProjection recoil_projection(const LatticeSetup& setup, double eta_x, double eta_k,
                                          EmissionPattern pattern = EmissionPattern::isotropic,
                                          int nodes = 16) {
  BandSolverOptions o = setup.bands;
  o.n_bands = std::max(o.n_bands, setup.levels());
  if (o.q_cutoff == 0) o.q_cutoff = default_q_cutoff(setup.geometry.depth_up);
  RecoilProjection rp;
  rp.spacing = vibrational_spacing(solve_bands(setup.geometry.depth_up, o));
  rp.x0 = oscillator_length_sites(rp.spacing);
  rp.lattice = make_three_spin_lattice(setup, 2.0 * rp.x0 * eta_x);
  rp.k_opt = eta_k / rp.x0;

  const int levels = setup.levels();
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& p : rp.lattice.potentials) {
    lo = std::min(lo, p.center);
    hi = std::max(hi, p.center);
  }
  const double h = 0.5 / (2.0 * o.q_cutoff + 1.0);
  const int points = static_cast<int>(std::ceil((hi - lo + 8.0) / h)) + 1;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(points, lo - 4.0, lo - 4.0 + h * (points - 1));
  std::array<Eigen::MatrixXcd, 3> samples;
  for (int s = 0; s < 3; ++s)
    samples[s] = sample_wannier(*rp.lattice.bands[s], x, rp.lattice.potentials[s].center, levels)
                     .cast<std::complex<double>>();

  const auto [u, w] = emission_rule(pattern, nodes);
  for (auto& row : rp.m2)
    for (auto& m : row) m = Eigen::MatrixXd::Zero(levels, levels);
  Eigen::VectorXcd phase(points);
  for (size_t j = 0; j < u.size(); ++j) {
    const double dk = rp.k_opt * (1.0 + u[j]);
    for (int i = 0; i < points; ++i) phase[i] = h * std::polar(1.0, dk * x[i]);
    for (int s = 0; s < 3; ++s) {
      const Eigen::MatrixXcd left = samples[s].transpose() * phase.asDiagonal();
      for (int sp = 0; sp < 3; ++sp) rp.m2[s][sp] += w[j] * (left * samples[sp]).cwiseAbs2();
    }
  }
  return rp;
}

struct JumpChannel {
  Spin to_spin;
  int to_level;
  Spin from_spin;
  int from_level;
  double rate;  // 1/s
};

// Rates gamma(i, j) for |j> -> |i| in 1/s over the 3(N+1) basis.
inline Eigen::MatrixXd decay_rate_matrix(const CoolingParams& p, const RecoilProjection& rp) {
  const int l = rp.lattice.levels;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3 * l, 3 * l);
  const std::array<Spin, 3> spins{Spin::up, Spin::down, Spin::aux};
  for (Spin from : {Spin::down, Spin::aux}) {
    const double r = from == Spin::down ? p.repump_rate : p.pump_rate;
    for (Spin to : spins)
      g.block(static_cast<int>(to) * l, static_cast<int>(from) * l, l, l) +=
          p.branching[to] * r * rp.m2[static_cast<int>(to)][static_cast<int>(from)];
  }
  g.block(0, 0, l, l) += p.lattice_scatter_rate * rp.m2[0][0];
  return g;
}

inline std::vector<JumpChannel> decay_rates(const CoolingParams& p, const RecoilProjection& rp) {
  const Eigen::MatrixXd g = decay_rate_matrix(p, rp);
  const int l = rp.lattice.levels;
  std::vector<JumpChannel> out;
  for (int j = 0; j < g.cols(); ++j)
    for (int i = 0; i < g.rows(); ++i)
      if (g(i, j) > 0.0)
        out.push_back({static_cast<Spin>(i / l), i % l, static_cast<Spin>(j / l), j % l, g(i, j)});
  return out;
}

struct DensityMatrix {
  int levels = 0;
  int spins = 3;
  Eigen::MatrixXcd rho;

  int dimension() const { return levels * spins; }
  double population(Spin s, int n) const {
    const int i = static_cast<int>(s) * levels + n;
    return rho(i, i).real();
  }
  double spin_population(Spin s) const {
    double sum = 0.0;
    for (int n = 0; n < levels; ++n) sum += population(s, n);
    return sum;
  }
  // Motional population summed over spin states.
  double level_population(int n) const {
    double sum = 0.0;
    for (int s = 0; s < spins; ++s) sum += population(static_cast<Spin>(s), n);
    return sum;
  }
  double trace() const { return rho.trace().real(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
  static DensityMatrix pure(const SpinMotionState& psi) {
    return {psi.levels, psi.spins, psi.amplitudes * psi.amplitudes.adjoint()};
  }
};

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  const Eigen::MatrixXcd d = a.rho - b.rho;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(d, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

// Real coordinates of Hermitian matrices restricted to an invariant subspace:
// full coherences among `coherent` indices plus diagonal entries of
// `populations`.
class SectorCoordinates {
 public:
  SectorCoordinates(int dim, std::vector<int> coherent, std::vector<int> populations)
      : dim_(dim), coherent_(std::move(coherent)), populations_(std::move(populations)) {
    pos_.assign(dim_, -1);
    for (size_t i = 0; i < coherent_.size(); ++i) pos_[coherent_[i]] = static_cast<int>(i);
  }

  static SectorCoordinates full(int dim) {
    std::vector<int> c(dim);
    for (int i = 0; i < dim; ++i) c[i] = i;
    return {dim, c, {}};
  }

  int dim() const { return dim_; }
  int nc() const { return static_cast<int>(coherent_.size()); }
  int size() const { return nc() * nc() + static_cast<int>(populations_.size()); }
  const std::vector<int>& coherent() const { return coherent_; }
  const std::vector<int>& populations() const { return populations_; }

  int diag_index(int ci) const { return ci; }
  int pair_index(int ca, int cb) const {  // ca < cb, real part; +1 for imaginary part
    const int n = nc();
    return n + 2 * (ca * (2 * n - ca - 1) / 2 + (cb - ca - 1));
  }
  int population_index(int k) const { return nc() * nc() + k; }

  // Rows of the trace functional.
  Eigen::RowVectorXd trace_row() const {
    Eigen::RowVectorXd t = Eigen::RowVectorXd::Zero(size());
    for (int i = 0; i < nc(); ++i) t[diag_index(i)] = 1.0;
    for (size_t k = 0; k < populations_.size(); ++k) t[population_index(static_cast<int>(k))] = 1.0;
    return t;
  }

  Eigen::VectorXd to_vector(const Eigen::MatrixXcd& rho) const {
    Eigen::VectorXd v(size());
    for (int a = 0; a < nc(); ++a) {
      v[diag_index(a)] = rho(coherent_[a], coherent_[a]).real();
      for (int b = a + 1; b < nc(); ++b) {
        const auto z = rho(coherent_[a], coherent_[b]);
        v[pair_index(a, b)] = z.real();
        v[pair_index(a, b) + 1] = z.imag();
      }
    }
    for (size_t k = 0; k < populations_.size(); ++k)
      v[population_index(static_cast<int>(k))] = rho(populations_[k], populations_[k]).real();
    return v;
  }

  Eigen::MatrixXcd to_matrix(const Eigen::VectorXd& v) const {
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim_, dim_);
    for (int a = 0; a < nc(); ++a) {
      rho(coherent_[a], coherent_[a]) = v[diag_index(a)];
      for (int b = a + 1; b < nc(); ++b) {
        const std::complex<double> z(v[pair_index(a, b)], v[pair_index(a, b) + 1]);
        rho(coherent_[a], coherent_[b]) = z;
        rho(coherent_[b], coherent_[a]) = std::conj(z);
      }
    }
    for (size_t k = 0; k < populations_.size(); ++k)
      rho(populations_[k], populations_[k]) = v[population_index(static_cast<int>(k))];
    return rho;
  }

  // Hermitian basis element for coordinate k as (row, col, value) entries.
  std::vector<std::tuple<int, int, std::complex<double>>> basis(int k) const {
    const int n = nc();
    if (k < n) return {{coherent_[k], coherent_[k], 1.0}};
    if (k >= n * n) {
      const int p = populations_[k - n * n];
      return {{p, p, 1.0}};
    }
    int rel = (k - n) / 2;
    const bool imag = (k - n) % 2 == 1;
    int a = 0;
    while (rel >= n - a - 1) {
      rel -= n - a - 1;
      ++a;
    }
    const int ia = coherent_[a], ib = coherent_[a + 1 + rel];
    if (!imag) return {{ia, ib, 1.0}, {ib, ia, 1.0}};
    return {{ia, ib, {0.0, 1.0}}, {ib, ia, {0.0, -1.0}}};
  }

 private:
  int dim_;
  std::vector<int> coherent_;
  std::vector<int> populations_;
  std::vector<int> pos_;
};

// d rho/dt = -i [H, rho] + sum_{i,j} gamma_ij (|i><j| rho |j><i| - {|j><j|, rho}/2).
class Liouvillian {
 public:
  Liouvillian(int levels, Eigen::MatrixXd hamiltonian, Eigen::MatrixXd rates)
      : levels_(levels), h_(std::move(hamiltonian)), gamma_(std::move(rates)) {
    const Eigen::Index dim = h_.rows();
    if (h_.cols() != dim || gamma_.rows() != dim || gamma_.cols() != dim)
      throw config_error("Liouvillian operands must be square and of equal size");
    loss_ = gamma_.colwise().sum().transpose();
  }

  int levels() const { return levels_; }
  int dimension() const { return static_cast<int>(h_.rows()); }
  const Eigen::MatrixXd& hamiltonian() const { return h_; }
  const Eigen::MatrixXd& rates() const { return gamma_; }

  Eigen::MatrixXcd apply(const Eigen::MatrixXcd& rho) const {
    const std::complex<double> i(0.0, 1.0);
    const Eigen::MatrixXcd hc = h_.cast<std::complex<double>>();
    Eigen::MatrixXcd out = -i * (hc * rho - rho * hc);
    for (int a = 0; a < dimension(); ++a)
      for (int b = 0; b < dimension(); ++b) out(a, b) -= 0.5 * (loss_[a] + loss_[b]) * rho(a, b);
    out.diagonal() += (gamma_ * rho.diagonal().real()).cast<std::complex<double>>();
    return out;
  }

  // Largest |tr(L e_k)| over the coordinate basis of the sector.
  double trace_annihilation_residual(const SectorCoordinates& sc) const {
    return (sc.trace_row() * real_matrix(sc)).cwiseAbs().maxCoeff();
  }

  // Matrix of the generator in real sector coordinates. The sector must be
  // invariant under the generator.
  Eigen::MatrixXd real_matrix(const SectorCoordinates& sc) const {
    const int dim = dimension();
    const int m = sc.size();
    const double bytes = 8.0 * m * static_cast<double>(m);
    if (bytes > 4e9)
      throw config_error("Liouvillian sector of size " + std::to_string(m) + " needs " +
                         std::to_string(bytes / 1e9) + " GB; reduce n_max");
    Eigen::MatrixXd out(m, m);
    const std::complex<double> i(0.0, 1.0);
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(dim, dim);
    for (int k = 0; k < m; ++k) {
      r.setZero();
      for (const auto& [row, col, v] : sc.basis(k)) {
        r.col(col) += -i * v * h_.col(row).cast<std::complex<double>>();
        r.row(row) += i * v * h_.row(col).cast<std::complex<double>>();
        r(row, col) -= 0.5 * (loss_[row] + loss_[col]) * v;
        if (row == col) r.diagonal() += (gamma_.col(row) * v.real()).cast<std::complex<double>>();
      }
      out.col(k) = sc.to_vector(r);
    }
    return out;
  }

 private:
  int levels_;
  Eigen::MatrixXd h_;
  Eigen::MatrixXd gamma_;
  Eigen::VectorXd loss_;
};

// Up/down coherences with auxiliary populations; invariant because the
// auxiliary state carries no coherent coupling.
inline SectorCoordinates populated_sector(int levels) {
  std::vector<int> c(2 * levels), p(levels);
  for (int i = 0; i < 2 * levels; ++i) c[i] = i;
  for (int n = 0; n < levels; ++n) p[n] = 2 * levels + n;
  return {3 * levels, c, p};
}

// Rotating-frame Hamiltonian (rad/us), microwave resonant with the target.
inline Eigen::MatrixXd cooling_hamiltonian(const RecoilProjection& rp, const CoolingParams& p,
                                           double energy_unit, double* detuning_out = nullptr) {
  const int l = rp.lattice.levels;
  const Eigen::VectorXd eu = rp.lattice.energies(Spin::up);
  const Eigen::VectorXd ed = rp.lattice.energies(Spin::down);
  const Eigen::VectorXd ea = rp.lattice.energies(Spin::aux);
  const double delta = (eu[p.target_up] - ed[p.target_down]) * energy_unit;
  if (detuning_out) *detuning_out = delta;
  const double s = energy_unit * liouvillian_time_unit;
  const double d = delta * liouvillian_time_unit;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * l, 3 * l);
  h.diagonal().segment(0, l) = eu * s - Eigen::VectorXd::Constant(l, d);
  h.diagonal().segment(l, l) = ed * s;
  h.diagonal().segment(2 * l, l) = ea * s - Eigen::VectorXd::Constant(l, d);
  h.diagonal().array() -= h.diagonal().mean();
  const Eigen::MatrixXd overlap = rp.lattice.overlap(Spin::up, Spin::down);
  const double w = 0.5 * p.omega0 * liouvillian_time_unit;
  if (p.target_only) {
    h(p.target_up, l + p.target_down) = h(l + p.target_down, p.target_up) =
        -w * overlap(p.target_up, p.target_down);
  } else {
    h.block(0, l, l, l) = -w * overlap;
    h.block(l, 0, l, l) = -w * overlap.transpose();
  }
  return h;
}

inline Liouvillian build_liouvillian(const CoolingParams& p, const RecoilProjection& rp,
                                     double energy_unit) {
  p.validate(rp.lattice.levels - 1);
  return Liouvillian(rp.lattice.levels, cooling_hamiltonian(rp, p, energy_unit),
                     decay_rate_matrix(p, rp) * liouvillian_time_unit);
}

struct SteadyState {
  DensityMatrix rho;
  double ground_population = 0.0;  // sum over spins of rho(s0, s0)
  double residual = 0.0;           // ||L rho|| in real coordinates, 1/us
  double rcond = 0.0;
  std::string solver_path;
};

// Null vector of the generator with one equation replaced by the trace
// condition. Throws solver_error if the kernel is not one-dimensional.
inline SteadyState steady_state(const Liouvillian& l, bool full_space = false) {
  const SectorCoordinates sc =
      full_space ? SectorCoordinates::full(l.dimension()) : populated_sector(l.levels());
  const Eigen::MatrixXd a = l.real_matrix(sc);
  Eigen::MatrixXd b = a;
  b.row(0) = sc.trace_row();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sc.size());
  rhs[0] = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
  SteadyState out;
  out.rcond = lu.rcond();
  if (!(out.rcond > 1e-13))
    throw solver_error("Liouvillian kernel is degenerate (multiple steady states); rcond = " +
                       std::to_string(out.rcond));
  Eigen::VectorXd x = lu.solve(rhs);
  x += lu.solve(rhs - b * x);  // one step of iterative refinement
  out.residual = (a * x).norm();
  out.rho = {l.levels(), 3, sc.to_matrix(x)};
  out.ground_population = out.rho.level_population(0);
  out.solver_path = full_space ? "dense LU, full space, trace-row replacement"
                               : "dense LU, up/down coherences + aux populations, trace-row replacement";
  return out;
}

struct IntegrationSchedule {
  double first_step = 0.01;  // us
  int steps_per_level = 10;  // steps before the step size doubles
  double final_time = 1e8;   // us
};

// TR-BDF2 integration of several initial states with geometrically growing
// steps. The sector must contain every initial state.
inline std::vector<DensityMatrix> integrate_master_equation(const Liouvillian& l,
                                                            const std::vector<DensityMatrix>& initial,
                                                            const IntegrationSchedule& sched = {},
                                                            bool full_space = true) {
  const SectorCoordinates sc =
      full_space ? SectorCoordinates::full(l.dimension()) : populated_sector(l.levels());
  const Eigen::MatrixXd a = l.real_matrix(sc);
  Eigen::MatrixXd x(sc.size(), static_cast<Eigen::Index>(initial.size()));
  for (size_t c = 0; c < initial.size(); ++c) {
    x.col(static_cast<Eigen::Index>(c)) = sc.to_vector(initial[c].rho);
    if ((sc.to_matrix(x.col(static_cast<Eigen::Index>(c))) - initial[c].rho).cwiseAbs().maxCoeff() > 1e-12)
      throw config_error("initial state has components outside the integration sector");
  }
  const double g = 2.0 - std::sqrt(2.0);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(sc.size(), sc.size());
  double t = 0.0;
  double h = sched.first_step;
  while (t < sched.final_time) {
    const Eigen::MatrixXd implicit_part = eye - 0.5 * g * h * a;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(implicit_part);
    const Eigen::MatrixXd explicit_part = eye + 0.5 * g * h * a;
    // The implicit matrix approaches -h a (singular) at large steps; one round
    // of refinement keeps the solves, and hence the trace, accurate.
    auto solve = [&](const Eigen::MatrixXd& rhs) {
      Eigen::MatrixXd y = lu.solve(rhs);
      y += lu.solve(rhs - implicit_part * y);
      return y;
    };
    for (int s = 0; s < sched.steps_per_level && t < sched.final_time; ++s) {
      const Eigen::MatrixXd xg = solve(explicit_part * x);
      x = solve((xg - (1.0 - g) * (1.0 - g) * x) / (g * (2.0 - g)));
      t += h;
    }
    h *= 2.0;
  }
  std::vector<DensityMatrix> out;
  for (Eigen::Index c = 0; c < x.cols(); ++c) out.push_back({l.levels(), 3, sc.to_matrix(x.col(c))});
  return out;
}

// Random density matrix with the given spectrum weights drawn from a seeded RNG.
inline DensityMatrix random_density_matrix(int levels, int spins, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int dim = levels * spins;
  Eigen::MatrixXcd g(dim, dim);
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i) g(i, j) = {nd(rng), nd(rng)};
  Eigen::MatrixXcd rho = g * g.adjoint();
  rho /= rho.trace().real();
  return {levels, spins, rho};
}

struct CoolingMap {
  std::vector<double> eta_x;
  std::vector<double> omega0;        // rad/s
  Eigen::MatrixXd ground_population; // rows eta_x, columns omega0; NaN marks a failed cell
  std::vector<std::string> failures;
};

// Shift-keyed cache of recoil/projection tables shared by map cells.
class RecoilProjectionCache {
 public:
  explicit RecoilProjectionCache(LatticeSetup setup) : setup_(std::move(setup)) {}

  std::shared_ptr<const RecoilProjection> get(double eta_x, double eta_k, EmissionPattern pattern,
                                              int nodes) {
    const auto key = std::make_tuple(eta_x, eta_k, static_cast<int>(pattern), nodes);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto rp = std::make_shared<const RecoilProjection>(recoil_projection(setup_, eta_x, eta_k, pattern, nodes));
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, rp).first->second;
  }

  const LatticeSetup& setup() const { return setup_; }

 private:
  LatticeSetup setup_;
  std::mutex mutex_;
  std::map<std::tuple<double, double, int, int>, std::shared_ptr<const RecoilProjection>> cache_;
};

inline CoolingMap cooling_map(const LatticeSetup& setup, const CoolingParams& base,
                              const std::vector<double>& eta_x, const std::vector<double>& omega0,
                              int threads = 1) {
  if (eta_x.empty() || omega0.empty()) throw config_error("cooling map grid must be non-empty");
  CoolingMap map;
  map.eta_x = eta_x;
  map.omega0 = omega0;
  map.ground_population = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(eta_x.size()),
                                                    static_cast<Eigen::Index>(omega0.size()), NAN);
  RecoilProjectionCache cache(setup);
  const double unit = setup.energy_unit();
  std::vector<std::string> errors(eta_x.size() * omega0.size());
  // Rows first so each thread reuses one recoil table per row.
  parallel_for(static_cast<int>(eta_x.size()), threads, [&](int r) {
    std::shared_ptr<const RecoilProjection> rp;
    try {
      rp = cache.get(eta_x[r], base.eta_k, base.emission, base.emission_nodes);
    } catch (const std::exception& e) {
      for (size_t c = 0; c < omega0.size(); ++c) errors[r * omega0.size() + c] = e.what();
      return;
    }
    for (size_t c = 0; c < omega0.size(); ++c) {
      CoolingParams p = base;
      p.eta_x = eta_x[r];
      p.omega0 = omega0[c];
      try {
        map.ground_population(r, static_cast<Eigen::Index>(c)) =
            steady_state(build_liouvillian(p, *rp, unit)).ground_population;
      } catch (const std::exception& e) {
        errors[r * omega0.size() + c] = e.what();
      }
    }
  });
  for (size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      map.failures.push_back("eta_x=" + std::to_string(eta_x[i / omega0.size()]) +
                             " omega0=" + std::to_string(omega0[i % omega0.size()]) + ": " + errors[i]);
  return map;
}

struct EnergyBalance {
  double recoil = 0.0;
  double projection = 0.0;
  double total = 0.0;
};

// Harmonic energy change per cooling cycle in units of hbar_omega (pass the
// vibrational quantum to get absolute units).
inline EnergyBalance energy_balance(double eta_x, double eta_k, double hbar_omega = 1.0) {
  EnergyBalance e;
  e.recoil = 2.0 * eta_k * eta_k * hbar_omega;
  e.projection = eta_x * eta_x * hbar_omega;
  e.total = e.recoil + e.projection - hbar_omega;
  return e;
}

// <n| V(x + shift) - V(x) |n> for V = W sin^2(pi x), in E_R (shift in d).
inline double projection_heating_general(const BlochSpectrum& s, int n, double shift) {
  if (n < 0 || n >= s.n_bands) throw config_error("band index out of range");
  double cos_mean = 0.0;  // <cos 2 pi x>_n
  for (int ik = 0; ik < s.k_points(); ++ik) {
    const auto b = s.coefficients[ik].col(n);
    cos_mean += b.head(b.size() - 1).dot(b.tail(b.size() - 1));
  }
  cos_mean /= s.k_points();
  return 0.5 * s.depth * (1.0 - std::cos(two_pi * shift)) * cos_mean;
}

struct SidebandTemperature {
  double mean_occupation = 0.0;
  double temperature = 0.0;  // K
};

// Thermal occupation from the ratio h_blue / h_red = <n> / (<n> + 1).
inline SidebandTemperature temperature_from_sidebands(double h_blue, double h_red, double trap_frequency) {
  if (h_blue < 0.0 || !(h_red > 0.0)) throw config_error("sideband heights must be non-negative with h_red > 0");
  const double r = h_blue / h_red;
  if (r >= 1.0) throw config_error("sideband ratio >= 1 implies a non-positive or infinite temperature");
  SidebandTemperature t;
  if (r == 0.0) return t;
  t.mean_occupation = r / (1.0 - r);
  t.temperature = constants::hbar * trap_frequency / (constants::k_boltzmann * std::log(1.0 / r));
  return t;
}

// Inverse map: sideband ratio for a thermal mean occupation.
inline double sideband_ratio(double mean_occupation) { return mean_occupation / (mean_occupation + 1.0); }

}  // namespace spinlat
