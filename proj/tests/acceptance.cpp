// Acceptance run: one PASS/FAIL line per criterion, details on the same line.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "spinlat/config.hpp"

namespace fs = std::filesystem;
using namespace spinlat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double unit_hz() { return rad_to_hz(recoil_angular_frequency(cesium().mass, 866.0)); }

// Full width at half maximum around the highest point, linear interpolation.
double fwhm(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t top = std::max_element(y.begin(), y.end()) - y.begin();
  const double half = 0.5 * y[top];
  auto cross = [&](int dir) {
    size_t i = top;
    while (i > 0 && i + 1 < y.size() && y[i] > half) i += dir;
    const size_t j = i - dir;
    return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
  };
  return cross(+1) - cross(-1);
}

SpectrumSettings ground_state_settings() {
  SpectrumSettings s;
  s.initial_populations = {1.0};
  s.pulse.peak_rabi = carrier_pi_rabi(s.pulse);
  return s;
}

// ---- 1 ----
Outcome trap_frequency() {
  const auto t0 = std::chrono::steady_clock::now();
  const BlochSpectrum s = solve_bands(850.0);
  const double t = seconds_since(t0);
  const double f = vibrational_spacing(s) * unit_hz();
  return {std::abs(f / 116e3 - 1.0) <= 0.02 && t < 1.0, fmt("omega_vib/2pi = %.2f kHz (target 116 +- 2%%), %.3f s", f / 1e3, t)};
}

// ---- 2 ----
Outcome lamb_dicke_table() {
  const LatticeGeometry g;
  const double k = optical_wavenumber(852.3);
  bool ok = true;
  std::string d;
  const double nm[3] = {43.0, 111.0, 176.0}, expect[3] = {1.2, 3.1, 4.9};
  for (int i = 0; i < 3; ++i) {
    const double eta = lamb_dicke(nm[i], g, cesium(), k).eta_x;
    ok = ok && std::abs(eta - expect[i]) <= 0.1;
    d += fmt("%s%.0f nm -> %.3f", i ? ", " : "", nm[i], eta);
  }
  return {ok, d + " (targets 1.2, 3.1, 4.9 +- 0.1)"};
}

// ---- 3 ----
Outcome franck_condon_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const BlochSpectrum s = solve_bands(850.0);
  const double x0 = oscillator_length_sites(vibrational_spacing(s));
  std::vector<FranckCondonTable> tables;
  for (int i = 1; i <= 10; ++i) tables.push_back(fcf_exact(s, s, 2.0 * x0 * 0.1 * i, 0, 3));
  for (int i = 0; i <= 10; ++i) tables.push_back(fcf_exact(s, s, 0.05 * i, 0, 5));  // 0 .. 216.5 nm
  const double t = seconds_since(t0);  // library work only; the oracles below are not timed

  double worst = 0.0, worst_eta = 0.0;
  int worst_n = 0, worst_m = 0;
  for (int i = 1; i <= 10; ++i) {
    const double eta = 0.1 * i;
    const FranckCondonTable& tab = tables[i - 1];
    const Eigen::MatrixXd h = fcf_harmonic_table(eta, 3);
    for (int n = 0; n <= 3; ++n)
      for (int m = 0; m <= 3; ++m)
        if (std::abs(tab(n, m) - h(n, m)) > worst) {
          worst = std::abs(tab(n, m) - h(n, m));
          worst_eta = eta;
          worst_n = n;
          worst_m = m;
        }
  }
  // Position-space quadrature of the tabulated range (default fcf table).
  const int points = 8001;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(points, -4.0, 4.5);
  const double h = 8.5 / (points - 1);
  const Eigen::MatrixXd bra = sample_wannier(s, x, 0.0, 6);
  double quad = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const Eigen::MatrixXd q = h * sample_wannier(s, x, 0.05 * i, 6).transpose() * bra;
    quad = std::max(quad, (tables[10 + i].values - q).cwiseAbs().maxCoeff());
  }
  return {worst <= 0.02 && quad <= 1e-4 && t < 10.0,
          fmt("max |exact - harmonic| = %.4f at eta_x %.1f (n %d, n' %d), limit 0.02; quadrature max diff %.1e "
              "(limit 1e-4); bands and tables %.1f s",
              worst, worst_eta, worst_n, worst_m, quad, t)};
}

// ---- 4 ----
Outcome identity_and_orthonormality() {
  const BlochSpectrum s = solve_bands(850.0);
  const double id = (fcf_exact(s, s, 0.0).values - Eigen::MatrixXd::Identity(s.n_bands, s.n_bands)).cwiseAbs().maxCoeff();
  const int points = 8001;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(points, -4.0, 4.0);
  const double h = 8.0 / (points - 1);
  const Eigen::MatrixXd w0 = sample_wannier(s, x, 0.0), w1 = sample_wannier(s, x, 1.0);
  const double ortho = std::max((h * w0.transpose() * w0 - Eigen::MatrixXd::Identity(s.n_bands, s.n_bands)).cwiseAbs().maxCoeff(),
                                (h * w0.transpose() * w1).cwiseAbs().maxCoeff());
  return {id <= 1e-8 && ortho <= 1e-8,
          fmt("zero-shift FC identity error %.1e, Wannier orthonormality error %.1e (%d bands, sites 0 and 1)", id, ortho,
              s.n_bands)};
}

// ---- 5 ----
Outcome spectrum_shape() {
  const auto t0 = std::chrono::steady_clock::now();
  const SpectrumSettings s = ground_state_settings();
  const LatticeGeometry g;
  struct Window {
    double nm, lo, hi;
  };
  std::set<int> resolved;
  double worst = 0.0, carrier = NAN;
  int pairs = 0;
  for (const Window& w : {Window{0, -60e3, 60e3}, Window{43, -620e3, 60e3}, Window{111, -1050e3, -250e3},
                          Window{176, -1480e3, -800e3}}) {
    const SpectrumParameters p = parameters_at_shift(g, w.nm / g.spacing(), 2.7e-6);
    const std::vector<double> grid = detuning_grid(hz_to_rad(w.lo), hz_to_rad(w.hi), static_cast<int>((w.hi - w.lo) / 1e3) + 1);
    const SpectrumResult r = simulate_spectrum(s, p, grid);
    if (w.nm == 0.0) carrier = rad_to_hz(fwhm(grid, r.probability));
    const PulseSystem sys = lattice_pulse_system(s, p);
    std::map<int, double> assigned;  // n' -> peak detuning
    for (const Peak& pk : r.peaks) {
      int best = 0;
      for (int n = 1; n < sys.down_levels(); ++n)
        if (std::abs(sys.resonance(0, n) - pk.detuning) < std::abs(sys.resonance(0, best) - pk.detuning)) best = n;
      assigned[best] = pk.detuning;
      resolved.insert(best);
    }
    for (const auto& [n, det] : assigned) {
      if (n + 1 > 14 || !assigned.count(n + 1)) continue;
      const double level = (sys.energy_down[n + 1] - sys.energy_down[n]) * sys.energy_unit;
      worst = std::max(worst, std::abs(std::abs(assigned.at(n + 1) - det) / level - 1.0));
      ++pairs;
    }
  }
  bool all = true;
  for (int n = 0; n <= 14; ++n) all = all && resolved.count(n);
  const double t = seconds_since(t0);
  return {all && worst <= 0.03 && std::abs(carrier / 20e3 - 1.0) <= 0.15 && t < 120.0,
          fmt("sidebands n' = 0..14 resolved: %s; worst adjacent spacing error %.2f%% over %d pairs (limit 3%%); carrier "
              "FWHM %.2f kHz (20 +- 15%%); %.1f s",
              all ? "yes" : "no", 100.0 * worst, pairs, carrier / 1e3, t)};
}

// ---- 6 ----
Outcome fit_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  const SpectrumSettings s = ground_state_settings();
  const SpectrumParameters truth = parameters_at_shift(LatticeGeometry{}, 111.0 / 433.0, 2.7e-6);
  const std::vector<double> grid = detuning_grid(hz_to_rad(-1050e3), hz_to_rad(-250e3), 401);
  const std::vector<double> clean = simulate_spectrum(s, truth, grid).probability;
  SpectrumParameters guess = truth;
  guess.shift *= 1.01;
  guess.depth_down *= 0.99;
  guess.depth_offset *= 1.01;
  guess.temperature_2d *= 1.1;
  auto rel_errors = [&](const FitResult& f) {
    std::array<double, 4> e{};
    const auto a = f.value.fit_vector(), b = truth.fit_vector();
    for (int j = 0; j < 4; ++j) e[j] = std::abs(a[j] / b[j] - 1.0);
    return e;
  };

  SpectrumData exact{grid, clean, binomial_sigma(clean, 100)};
  const auto e0 = rel_errors(fit_spectrum(s, exact, guess));

  std::mt19937_64 rng(2024);
  SpectrumData noisy{grid, clean, {}};
  for (double& v : noisy.probability) {
    std::binomial_distribution<int> b(100, v);
    v = b(rng) / 100.0;
  }
  noisy.sigma = binomial_sigma(noisy.probability, 100);
  FitOptions weighted;
  weighted.variance_atoms = 100;
  const FitResult nf = fit_spectrum(s, noisy, guess, weighted);
  const auto e1 = rel_errors(nf);

  bool ok = true;
  std::string d = "noisy relative errors:";
  for (int j = 0; j < 4; ++j) {
    ok = ok && e1[j] <= 0.015 && e0[j] <= 1e-6;
    d += fmt(" %s %.2f%% (se %.2f%%)", fit_parameter_names()[j], 100.0 * e1[j],
             100.0 * nf.standard_error[j] / std::abs(truth.fit_vector()[j]));
  }
  d += fmt("; zero-noise max relative error %.1e (limit 1e-6); %.0f s",
           *std::max_element(e0.begin(), e0.end()), seconds_since(t0));
  return {ok, d};
}

// ---- 7 ----
Outcome thermal_broadening() {
  const SpectrumSettings s = ground_state_settings();
  const LatticeGeometry g;
  const double shift = 72.0 / g.spacing();
  std::vector<double> fourier, thermal;
  for (int n = 1; n <= 5; ++n) {
    double w[2];
    for (int k = 0; k < 2; ++k) {
      const SpectrumParameters p = parameters_at_shift(g, shift, k ? 2.7e-6 : 0.0);
      const double c = lattice_pulse_system(s, p).resonance(0, n);
      const auto grid = detuning_grid(c - hz_to_rad(60e3), c + hz_to_rad(40e3), 201);
      w[k] = rad_to_hz(fwhm(grid, simulate_spectrum(s, p, grid).probability));
    }
    fourier.push_back(w[0]);
    thermal.push_back(std::sqrt(w[1] * w[1] - w[0] * w[0]));
  }
  // Least-squares line through the thermal widths.
  const double mn = 3.0;
  const double my = std::accumulate(thermal.begin(), thermal.end(), 0.0) / 5.0;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 5; ++i) {
    sxy += (i + 1 - mn) * (thermal[i] - my);
    sxx += (i + 1 - mn) * (i + 1 - mn);
  }
  const double slope = sxy / sxx, icpt = my - slope * mn;
  double dev = 0.0;
  for (int i = 0; i < 5; ++i) dev = std::max(dev, std::abs(thermal[i] / (icpt + slope * (i + 1)) - 1.0));
  const auto [fmin, fmax] = std::minmax_element(fourier.begin(), fourier.end());
  const double spread = *fmax / *fmin - 1.0;
  std::string widths;
  for (double v : thermal) widths += fmt("%s%.2f", widths.empty() ? "" : ", ", v / 1e3);
  return {slope > 0.0 && dev <= 0.10 && spread <= 0.10,
          fmt("72 nm, T_2D 2.7 uK: thermal widths n=1..5 [%s] kHz, slope %.2f kHz/n, max deviation from line %.1f%% (limit "
              "10%%); Fourier widths %.2f..%.2f kHz (spread %.1f%%)",
              widths.c_str(), slope / 1e3, 100.0 * dev, *fmin / 1e3, *fmax / 1e3, 100.0 * spread)};
}

// ---- 8 ----
Outcome energy_balance_check() {
  const double total = energy_balance(0.3, 0.1).total;
  const BlochSpectrum s = solve_bands(850.0, 24, 64, 0);
  const double w = vibrational_spacing(s);
  const double x0 = oscillator_length_sites(w);
  double brute = 0.0, harm = 0.0;
  for (double eta : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    const double shift = 2.0 * x0 * eta;
    const FranckCondonTable t = fcf_exact(s, s, shift);
    double sum = 0.0;
    for (int m = 0; m < s.n_bands; ++m) sum += t(0, m) * t(0, m) * (s.band_energy(m) - s.band_energy(0));
    const double op = projection_heating_general(s, 0, shift);
    brute = std::max(brute, std::abs(op / sum - 1.0));
    harm = std::max(harm, std::abs(op / (eta * eta * w) - 1.0));
  }
  return {std::abs(total + 0.89) < 1e-12 && brute <= 0.01 && harm <= 0.02,
          fmt("dE_tot(0.3, 0.1) = %.12g hbar omega; projection heating vs FC sum %.1e (limit 1%%), vs harmonic %.2f%% (limit "
              "2%%)",
              total, brute, 100.0 * harm)};
}

// ---- 9 ----
Outcome cooling_map_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const LatticeSetup setup;
  const CoolingParams p;
  const RecoilProjection rp = recoil_projection(setup, p.eta_x, p.eta_k);
  const Liouvillian l = build_liouvillian(p, rp, setup.energy_unit());
  const SteadyState ss = steady_state(l);
  const double trace_res = l.trace_annihilation_residual(SectorCoordinates::full(l.dimension()));
  const int dim = 3 * setup.levels();
  const DensityMatrix mixed{setup.levels(), 3, Eigen::MatrixXcd::Identity(dim, dim) / double(dim)};
  const double dist = trace_distance(integrate_master_equation(l, {mixed})[0], ss.rho);
  const double t_point = seconds_since(t0);

  RunConfig cfg;
  std::vector<double> etas, omegas;
  for (int i = 0; i < cfg.coolmap.eta_x_points; ++i)
    etas.push_back(cfg.coolmap.eta_x_min + (cfg.coolmap.eta_x_max - cfg.coolmap.eta_x_min) * i / (cfg.coolmap.eta_x_points - 1.0));
  for (int j = 0; j < cfg.coolmap.omega0_points; ++j)
    omegas.push_back(hz_to_rad(cfg.coolmap.omega0_min_hz +
                               (cfg.coolmap.omega0_max_hz - cfg.coolmap.omega0_min_hz) * j / (cfg.coolmap.omega0_points - 1.0)));
  const auto t1 = std::chrono::steady_clock::now();
  const CoolingMap map = cooling_map(setup, p, etas, omegas);
  const double t_map = seconds_since(t1);
  double best = 0.0;
  for (size_t i = 0; i < etas.size(); ++i)
    if (etas[i] < 0.8)
      for (size_t j = 0; j < omegas.size(); ++j)
        if (std::isfinite(map.ground_population(i, j))) best = std::max(best, map.ground_population(i, j));

  const SidebandTemperature temp = temperature_from_sidebands(sideband_ratio(0.03), 1.0, hz_to_rad(116e3));
  const bool ok = ss.ground_population >= 0.9 && dist <= 1e-6 && trace_res < 1e-12 && best > 0.8 &&
                  map.failures.empty() && std::abs(temp.temperature * 1e6 - 1.6) <= 0.05 && t_map < 1800.0;
  return {ok, fmt("P_0 at operating point %.4f (>= 0.9); steady vs integrated trace distance %.1e; trace residual %.1e; map "
                  "32x32 max P_0 for eta_x < 0.8: %.4f (> 0.8), %zu failed cells, %.0f s; T(<n> = 0.03) = %.3f uK",
                  ss.ground_population, dist, trace_res, best, map.failures.size(), t_map, temp.temperature * 1e6)};
}

// ---- 10 ----
Outcome filtering() {
  const double fe = effective_efficiency(0.7, 3);
  const PopulationDistribution d = thermal_distribution(11.6e-6, hz_to_rad(116e3), 40);
  const int k = 8;
  std::vector<double> exact;
  for (int n = 0; n <= k; ++n) exact.push_back(filter_survival(d, n, 0.7, 3));
  const Reconstruction r = reconstruct_distribution(exact, fe);
  double round_trip = 0.0;
  for (int m = 0; m < k; ++m) round_trip = std::max(round_trip, std::abs(r.distribution.p[m] - d.p[m]));

  auto monte_carlo = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> mean(k, 0.0);
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      const Reconstruction rec = reconstruct_distribution(sample_plateaus(d, k, 0.7, 3, 100, rng), fe, 1.0, 0.5);
      for (int m = 0; m < k; ++m) mean[m] += rec.distribution.p[m] / trials;
    }
    return mean;
  };
  const std::vector<double> a = monte_carlo(1), b = monte_carlo(1);
  double mc = 0.0;
  for (int m = 0; m < k; ++m) mc = std::max(mc, std::abs(a[m] - d.p[m]));
  return {std::abs(fe - 0.973) <= 0.001 && round_trip <= 1e-12 && mc <= 0.05 && a == b,
          fmt("f'(0.7, 3) = %.4f; noiseless round trip error %.1e; Monte-Carlo (100 atoms, 200 trials, seed 1) max |p_m "
              "error| %.4f (limit 0.05), repeat identical: %s",
              fe, round_trip, mc, a == b ? "yes" : "no")};
}

// ---- 11 ----
Outcome state_engineering() {
  const SequenceContext ctx{LatticeSetup{}};
  bool ok = true;
  double sup = 0.0;
  for (double a : {0.30, 0.40, 0.55, 0.70}) {
    const SuperpositionResult r = prepare_superposition(ctx, a);
    sup = std::max(sup, std::abs(r.p2 - std::pow(std::sin(0.5 * a * pi), 2)));
  }
  ok = ok && sup <= 0.01;
  double harm = 0.0, exact = 0.0, tvd = 0.0;
  for (double eta : {0.2, 0.35, 0.5}) {
    std::vector<double> h;
    for (int n = 0; n <= 40; ++n) h.push_back(std::pow(fcf_harmonic(eta, 0, n), 2));
    harm = std::max(harm, std::abs(mean_occupation(h) / (eta * eta) - 1.0));
    const CoherentResult r = prepare_coherent(ctx, 2.0 * ctx.oscillator_length() * eta);
    exact = std::max(exact, std::abs(mean_occupation(r.populations) / (r.alpha * r.alpha) - 1.0));
    double t = 0.0;
    for (size_t n = 0; n < r.populations.size(); ++n) t += 0.5 * std::abs(r.populations[n] - r.expected[n]);
    tvd = std::max(tvd, t);
  }
  ok = ok && harm <= 0.02 && exact <= 0.10;
  double fid = 1.0;
  for (int m = 0; m <= 6; ++m) fid = std::min(fid, prepare_fock(ctx, m).fidelity);
  ok = ok && fid >= 0.98;
  return {ok, fmt("superposition max |p2 - sin^2(A pi/2)| %.4f (limit 0.01); coherent mean vs alpha^2: harmonic %.2f%% "
                  "(2%%), exact Wannier %.2f%% (10%%), max distance to Poisson %.4f; min Fock fidelity m<=6 %.5f (>= 0.98)",
                  sup, 100.0 * harm, 100.0 * exact, tvd, fid)};
}

// ---- 12 ----
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "spinlat_acceptance_determinism";
  fs::remove_all(root);
  const std::string cfg = std::string(SPINLAT_CONFIG_DIR) + "/quick.json";
  for (const char* run : {"a", "b"})
    for (const char* cmd : {"spectrum", "filter", "engineer", "cool"}) {
      const std::string line = std::string(SPINLAT_CLI) + " --config " + cfg + " --seed 5 --out " + (root / run).string() +
                                " " + cmd + " > /dev/null 2>&1";
      if (std::system(line.c_str()) != 0) return {false, std::string("CLI failed: ") + cmd};
    }
  int files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    if (slurp(e.path()) != slurp(root / "b" / e.path().filename())) ++differ;
  }
  return {files > 0 && differ == 0, fmt("%d artifacts from two seeded runs of spectrum/filter/engineer/cool, %d differ", files, differ)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"trap frequency", trap_frequency},
      {"Lamb-Dicke table", lamb_dicke_table},
      {"Franck-Condon oracle equivalence", franck_condon_oracles},
      {"identity/orthonormality", identity_and_orthonormality},
      {"spectrum shape", spectrum_shape},
      {"fit round trip", fit_round_trip},
      {"thermal broadening law", thermal_broadening},
      {"energy balance", energy_balance_check},
      {"cooling map", cooling_map_check},
      {"filtering", filtering},
      {"state engineering", state_engineering},
      {"determinism", determinism}};
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
