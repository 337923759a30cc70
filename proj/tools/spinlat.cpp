// spinlat: command-line driver for band structures, Franck-Condon tables,
// sideband spectra and fits, cooling steady states and maps, state
// engineering sequences and filter measurements.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "spinlat/config.hpp"

namespace fs = std::filesystem;
using namespace spinlat;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw config_error("cannot write '" + path.string() + "'");
    row_strings(header);
  }
  void row(const std::vector<double>& values) {
    std::vector<std::string> s;
    for (double v : values) s.push_back(num(v));
    row_strings(s);
  }
  void row_strings(const std::vector<std::string>& values) {
    for (size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

// Rounds doubles for JSON reports so that output is stable in its last digits.
json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(num(v));
}

std::vector<double> linspace(double a, double b, int n) {
  if (n < 1) throw config_error("grid needs at least one point");
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = n == 1 ? a : a + (b - a) * i / (n - 1.0);
  return g;
}

struct Context {
  RunConfig cfg;
  fs::path out;
};

// ---- bands ----

void cmd_bands(const Context& c) {
  const double depth = c.cfg.bands.depth >= 0.0 ? c.cfg.bands.depth : c.cfg.lattice.depth_up;
  BandSolverOptions o = to_band_options(c.cfg);
  o.n_bands = c.cfg.solver.n_bands;
  const BlochSpectrum s = solve_bands(depth, o);
  std::vector<std::string> header{"k"};
  for (int n = 0; n < s.n_bands; ++n) header.push_back("band_" + std::to_string(n));
  CsvWriter bands(c.out / "bands.csv", header);
  for (int ik = 0; ik < s.k_points(); ++ik) {
    std::vector<double> row{s.k_grid[ik]};
    for (int n = 0; n < s.n_bands; ++n) row.push_back(s.energies(ik, n));
    bands.row(row);
  }

  const int nw = std::min(c.cfg.bands.wannier_bands, s.n_bands);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(c.cfg.bands.x_points, c.cfg.bands.x_min, c.cfg.bands.x_max);
  const Eigen::MatrixXd w = sample_wannier(s, x, 0.0, nw);
  std::vector<std::string> wh{"x"};
  for (int n = 0; n < nw; ++n) wh.push_back("wannier_" + std::to_string(n));
  CsvWriter wan(c.out / "wannier.csv", wh);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::vector<double> row{x[i]};
    for (int n = 0; n < nw; ++n) row.push_back(w(i, n));
    wan.row(row);
  }

  const AtomConstants atom = to_atom(c.cfg);
  const double unit_hz = rad_to_hz(recoil_angular_frequency(atom.mass, c.cfg.lattice.wavelength_nm));
  json levels = json::array();
  for (int n = 0; n < s.n_bands; ++n)
    levels.push_back({{"n", n}, {"energy_E_R", jnum(s.band_energy(n))}, {"bandwidth_E_R", jnum(s.bandwidth(n))}});
  json report{{"depth_E_R", jnum(depth)},
              {"recoil_hz", jnum(unit_hz)},
              {"q_cutoff", s.q_cutoff},
              {"k_points", s.k_points()},
              {"levels", levels}};
  if (s.n_bands > 1) {
    const double spacing = s.band_energy(1) - s.band_energy(0);
    report["spacing_E_R"] = jnum(spacing);
    report["trap_frequency_hz"] = jnum(spacing * unit_hz);
    report["harmonic_trap_frequency_hz"] = jnum(2.0 * std::sqrt(depth) * unit_hz);
  }
  write_json(c.out / "bands.json", report);
}

// ---- fcf ----

void cmd_fcf(const Context& c) {
  const LatticeGeometry geom = to_geometry(c.cfg);
  BandSolverOptions o = to_band_options(c.cfg);
  const int nm = c.cfg.fcf.n_max;
  if (nm < 0) throw config_error("fcf.n_max must be non-negative");
  o.n_bands = std::max(o.n_bands, nm + 1);
  if (o.q_cutoff == 0) o.q_cutoff = default_q_cutoff(geom.depth_up);
  const auto up = std::make_shared<const BlochSpectrum>(solve_bands(geom.depth_up, o));
  const double x0 = oscillator_length_sites(vibrational_spacing(*up));
  const std::vector<double> shifts = linspace(c.cfg.fcf.shift_min_nm, c.cfg.fcf.shift_max_nm, c.cfg.fcf.shift_points);

  std::vector<Eigen::MatrixXd> tables(shifts.size());
  parallel_for(static_cast<int>(shifts.size()), c.cfg.threads, [&](int i) {
    const double dx = shifts[i] / geom.spacing();
    if (c.cfg.fcf.equal_depths) {
      tables[i] = fcf_exact(*up, *up, dx, 0, nm).values;
    } else {
      LatticeGeometry g = geom;
      g.theta = angle_from_shift(g, dx);
      BandSolverOptions od = o;
      od.threads = 1;
      const BlochSpectrum down = solve_bands(potentials_from_angle(g).down.contrast, od);
      tables[i] = fcf_exact(*up, down, dx, 0, nm).values;
    }
  });

  CsvWriter csv(c.out / "fcf.csv", {"shift_nm", "eta_x", "n", "n_prime", "I"});
  double identity_error = NAN, oracle_diff = 0.0;
  int oracle_points = 0;
  for (size_t i = 0; i < shifts.size(); ++i) {
    const double eta = shifts[i] / geom.spacing() / (2.0 * x0);
    for (int n = 0; n <= nm; ++n)
      for (int np = 0; np <= nm; ++np) csv.row({shifts[i], eta, double(n), double(np), tables[i](n, np)});
    if (shifts[i] == 0.0 && c.cfg.fcf.equal_depths)
      identity_error = (tables[i] - Eigen::MatrixXd::Identity(nm + 1, nm + 1)).cwiseAbs().maxCoeff();
    if (eta <= 1.0) {
      for (int n = 0; n <= std::min(nm, 3); ++n)
        for (int np = 0; np <= std::min(nm, 3); ++np)
          oracle_diff = std::max(oracle_diff, std::abs(tables[i](n, np) - fcf_harmonic(eta, n, np)));
      ++oracle_points;
    }
  }
  write_json(c.out / "fcf.json", {{"depth_up_E_R", jnum(geom.depth_up)},
                                  {"equal_depths", c.cfg.fcf.equal_depths},
                                  {"oscillator_length_d", jnum(x0)},
                                  {"identity_error_at_zero_shift", jnum(identity_error)},
                                  {"harmonic_oracle_max_abs_diff", jnum(oracle_diff)},
                                  {"harmonic_oracle_shift_points", oracle_points}});
}

// ---- spectrum ----

void cmd_spectrum(const Context& c) {
  const LatticeGeometry geom = to_geometry(c.cfg);
  const SpectrumSettings s = to_spectrum_settings(c.cfg);
  const SpectrumSection& sp = c.cfg.spectrum;
  if (sp.noise_atoms < 0) throw config_error("spectrum.noise_atoms must be non-negative");
  std::vector<double> grid = detuning_grid(hz_to_rad(sp.detuning_min_hz), hz_to_rad(sp.detuning_max_hz), sp.points);
  std::mt19937_64 rng(c.cfg.seed);
  const double x0 = oscillator_length_sites(vibrational_spacing(solve_bands(geom.depth_up, s.bands)));

  CsvWriter all(c.out / "spectrum.csv", {"shift_nm", "detuning_Hz", "p_transfer", "sigma_p"});
  json report = json::array();
  for (size_t i = 0; i < sp.shifts_nm.size(); ++i) {
    const double shift = sp.shifts_nm[i] / geom.spacing();
    const SpectrumParameters p = parameters_at_shift(geom, shift, sp.temperature_2d_uk * 1e-6);
    const SpectrumResult r = simulate_spectrum(s, p, grid);
    std::vector<double> prob = r.probability;
    if (sp.noise_atoms > 0)
      for (double& v : prob) {
        std::binomial_distribution<int> b(sp.noise_atoms, v);
        v = static_cast<double>(b(rng)) / sp.noise_atoms;
      }
    const std::vector<double> sigma = binomial_sigma(prob, sp.noise_atoms > 0 ? sp.noise_atoms : 100);
    CsvWriter one(c.out / ("spectrum_" + std::to_string(i) + ".csv"), {"detuning_Hz", "p_transfer", "sigma_p", "shift_nm"});
    for (size_t k = 0; k < grid.size(); ++k) {
      one.row({rad_to_hz(grid[k]), prob[k], sigma[k], sp.shifts_nm[i]});
      all.row({sp.shifts_nm[i], rad_to_hz(grid[k]), prob[k], sigma[k]});
    }
    json peaks = json::array();
    for (const Peak& pk : r.peaks) peaks.push_back({{"detuning_hz", jnum(rad_to_hz(pk.detuning))}, {"height", jnum(pk.height)}});
    report.push_back({{"shift_nm", jnum(sp.shifts_nm[i])},
                      {"eta_x", jnum(shift / (2.0 * x0))},
                      {"depth_up_E_R", jnum(p.depth_up)},
                      {"depth_down_E_R", jnum(p.depth_down)},
                      {"depth_offset_E_R", jnum(p.depth_offset)},
                      {"temperature_2d_uK", jnum(p.temperature_2d * 1e6)},
                      {"peaks", peaks}});
  }
  write_json(c.out / "spectrum.json", {{"peak_rabi_hz", jnum(rad_to_hz(s.pulse.peak_rabi))},
                                       {"noise_atoms", sp.noise_atoms},
                                       {"seed", c.cfg.seed},
                                       {"spectra", report}});
}

// ---- fit ----

SpectrumData read_spectrum_csv(const std::string& path, double* shift_nm) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open spectrum data '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw config_error("spectrum data '" + path + "' is empty");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
  }
  auto index = [&](const std::string& name) {
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int id = index("detuning_Hz"), ip = index("p_transfer"), is = index("sigma_p"), ish = index("shift_nm");
  if (id < 0 || ip < 0 || is < 0) throw config_error("spectrum data needs columns detuning_Hz, p_transfer, sigma_p");
  SpectrumData d;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw config_error(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
    }
    if (v.size() != cols.size()) throw config_error(path + ":" + std::to_string(lineno) + ": wrong column count");
    d.detunings.push_back(hz_to_rad(v[id]));
    d.probability.push_back(v[ip]);
    d.sigma.push_back(v[is]);
    if (ish >= 0 && shift_nm) *shift_nm = v[ish];
  }
  return d;
}

void cmd_fit(const Context& c) {
  const FitSection& f = c.cfg.fit;
  if (f.data.empty()) throw config_error("fit.data must name a spectrum CSV");
  double file_shift = NAN;
  const SpectrumData data = read_spectrum_csv(f.data, &file_shift);
  const LatticeGeometry geom = to_geometry(c.cfg);
  const SpectrumSettings s = to_spectrum_settings(c.cfg);
  const double shift_nm = f.shift_nm >= 0.0 ? f.shift_nm : file_shift;
  if (!std::isfinite(shift_nm)) throw config_error("fit.shift_nm not given and data has no shift_nm column");
  SpectrumParameters guess = parameters_at_shift(geom, shift_nm / geom.spacing(), f.temperature_2d_uk * 1e-6);
  if (f.depth_down > 0.0) guess.depth_down = f.depth_down;
  if (std::isfinite(f.depth_offset)) guess.depth_offset = f.depth_offset;
  FitOptions opts;
  opts.max_iterations = f.max_iterations;
  opts.variance_atoms = f.variance_atoms;
  opts.free = {false, false, false, false};
  for (const std::string& name : f.free) {
    bool found = false;
    for (int j = 0; j < 4; ++j)
      if (name == fit_parameter_names()[j]) opts.free[j] = found = true;
    if (!found) throw config_error("fit.free: unknown parameter '" + name + "'");
  }
  const FitResult r = fit_spectrum(s, data, guess, opts);
  const std::array<double, 4> v = r.value.fit_vector();
  const std::array<double, 4> scale{geom.spacing(), 1.0, 1.0, 1e6};
  const std::array<const char*, 4> units{"nm", "E_R", "E_R", "uK"};
  json params = json::array();
  for (int j = 0; j < 4; ++j)
    params.push_back({{"param", fit_parameter_names()[j]},
                      {"value", jnum(v[j] * scale[j])},
                      {"stderr", jnum(r.standard_error[j] * scale[j])},
                      {"unit", units[j]},
                      {"free", static_cast<bool>(opts.free[j])}});
  write_json(c.out / "fit.json", {{"data", f.data},
                                  {"chi2", jnum(r.chi2)},
                                  {"points", data.detunings.size()},
                                  {"iterations", r.iterations},
                                  {"parameters", params}});
}

// ---- cool ----

json populations_json(const DensityMatrix& rho) {
  json pops = json::array();
  const char* names[3] = {"up", "down", "aux"};
  for (int s = 0; s < rho.spins; ++s)
    for (int n = 0; n < rho.levels; ++n)
      pops.push_back({{"spin", names[s]}, {"n", n}, {"population", jnum(rho.population(static_cast<Spin>(s), n))}});
  return pops;
}

void cmd_cool(const Context& c) {
  const LatticeSetup setup = to_setup(c.cfg);
  const CoolingParams p = to_cooling_params(c.cfg);
  const RecoilProjection rp = recoil_projection(setup, p.eta_x, p.eta_k, p.emission, p.emission_nodes);
  const Liouvillian l = build_liouvillian(p, rp, setup.energy_unit());
  const SteadyState ss = steady_state(l);
  const double trap_hz = rp.spacing * rad_to_hz(setup.energy_unit());
  json report{{"omega0_hz", jnum(c.cfg.cool.omega0_hz)},
              {"eta_x", jnum(p.eta_x)},
              {"eta_k", jnum(p.eta_k)},
              {"shift_nm", jnum(rp.lattice.shift * setup.geometry.spacing())},
              {"trap_frequency_hz", jnum(trap_hz)},
              {"ground_population", jnum(ss.ground_population)},
              {"residual_per_us", jnum(ss.residual)},
              {"rcond", jnum(ss.rcond)},
              {"solver_path", ss.solver_path},
              {"trace_annihilation_residual", jnum(l.trace_annihilation_residual(SectorCoordinates::full(l.dimension())))}};
  const EnergyBalance eb = energy_balance(p.eta_x, p.eta_k);
  report["energy_balance_hbar_omega"] = {{"recoil", jnum(eb.recoil)}, {"projection", jnum(eb.projection)}, {"total", jnum(eb.total)}};
  if (c.cfg.cool.integrate) {
    const DensityMatrix start{setup.levels(), 3, Eigen::MatrixXcd::Identity(3 * setup.levels(), 3 * setup.levels()) / (3.0 * setup.levels())};
    const auto end = integrate_master_equation(l, {start}, {}, true);
    report["integration_trace_distance"] = jnum(trace_distance(end[0], ss.rho));
  }
  report["populations"] = populations_json(ss.rho);
  write_json(c.out / "cool.json", report);
}

void cmd_coolmap(const Context& c) {
  const LatticeSetup setup = to_setup(c.cfg);
  const CoolingParams base = to_cooling_params(c.cfg);
  const CoolmapSection& m = c.cfg.coolmap;
  const std::vector<double> etas = linspace(m.eta_x_min, m.eta_x_max, m.eta_x_points);
  std::vector<double> omegas = linspace(m.omega0_min_hz, m.omega0_max_hz, m.omega0_points);
  for (double& w : omegas) w = hz_to_rad(w);
  const CoolingMap map = cooling_map(setup, base, etas, omegas, c.cfg.threads);
  CsvWriter csv(c.out / "coolmap.csv", {"eta_x", "omega0_Hz", "p_ground"});
  double best = -1.0, best_eta = NAN, best_omega = NAN;
  bool region = false;
  for (size_t i = 0; i < etas.size(); ++i)
    for (size_t j = 0; j < omegas.size(); ++j) {
      const double v = map.ground_population(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      csv.row({etas[i], rad_to_hz(omegas[j]), v});
      if (std::isfinite(v) && v > best) {
        best = v;
        best_eta = etas[i];
        best_omega = rad_to_hz(omegas[j]);
      }
      if (std::isfinite(v) && v > 0.8 && etas[i] < 0.8) region = true;
    }
  write_json(c.out / "coolmap.json", {{"eta_x_points", etas.size()},
                                      {"omega0_points", omegas.size()},
                                      {"max_ground_population", jnum(best)},
                                      {"argmax_eta_x", jnum(best_eta)},
                                      {"argmax_omega0_hz", jnum(best_omega)},
                                      {"region_above_0p8_below_eta_0p8", region},
                                      {"failures", map.failures}});
  if (!map.failures.empty()) std::cerr << map.failures.size() << " cooling map cells failed; see coolmap.json\n";
}

// ---- engineer ----

json level_populations(const DensityMatrix& rho) {
  json p = json::array();
  for (int n = 0; n < rho.levels; ++n) p.push_back(jnum(rho.level_population(n)));
  return p;
}

void cmd_engineer(const Context& c) {
  const LatticeSetup setup = to_setup(c.cfg);
  const EngineerSection& e = c.cfg.engineer;
  const SequenceContext ctx(setup, to_cooling_params(c.cfg).branching);
  const double d = setup.geometry.spacing();
  json report;

  FockSettings fs;
  fs.peak_rabi = hz_to_rad(e.chirp_rabi_hz);
  fs.chirp = {e.chirp_duration_us * 1e-6, hz_to_rad(e.chirp_sweep_hz)};
  json fock = json::array();
  for (int m : e.fock_states) {
    if (m < 0 || m > setup.n_max) throw config_error("engineer.fock_states entries must lie in 0..n_max");
    const PreparationResult r = prepare_fock(ctx, m, fs);
    fock.push_back({{"m", m}, {"shift_nm", jnum(r.shift * d)}, {"fidelity", jnum(r.fidelity)}});
  }
  report["fock"] = fock;

  json sup = json::array();
  for (double a : e.superposition_areas) {
    const SuperpositionResult r = prepare_superposition(ctx, a, to_gaussian(e.fwhm_us));
    sup.push_back({{"area_pi", jnum(a)},
                   {"p0", jnum(r.p0)},
                   {"p2", jnum(r.p2)},
                   {"expected_p2", jnum(std::pow(std::sin(0.5 * a * pi), 2))},
                   {"first_shift_nm", jnum(r.first_shift * d)},
                   {"zero_shift_nm", jnum(r.zero_shift * d)}});
  }
  report["superposition"] = sup;

  json coh = json::array();
  CsvWriter csv(c.out / "coherent.csv", {"shift_nm", "n", "population", "poisson"});
  for (double shift_nm : e.coherent_shifts_nm) {
    const CoherentResult r = prepare_coherent(ctx, shift_nm / d);
    for (size_t n = 0; n < r.populations.size(); ++n)
      csv.row({shift_nm, double(n), r.populations[n], r.expected[n]});
    coh.push_back({{"shift_nm", jnum(shift_nm)},
                   {"alpha", jnum(r.alpha)},
                   {"mean_n", jnum(mean_occupation(r.populations))},
                   {"alpha_squared", jnum(r.alpha * r.alpha)},
                   {"up_fraction", jnum(r.up_fraction)}});
  }
  report["coherent"] = coh;

  if (!e.sequence.empty()) {
    const auto steps = parse_sequence(e.sequence, setup.geometry);
    const Spin s0 = parse_spin(e.initial_spin, "engineer.initial_spin");
    if (e.initial_level < 0 || e.initial_level > setup.n_max) throw config_error("engineer.initial_level outside 0..n_max");
    const SequenceState out =
        run_sequence(ctx, sequence_state(SpinMotionState::basis(setup.levels(), s0, e.initial_level, 3)), steps);
    const DensityMatrix rho = out.density();
    report["sequence"] = {{"steps", e.sequence.size()},
                          {"final_shift_nm", jnum(out.shift * d)},
                          {"trace", jnum(rho.trace())},
                          {"populations", populations_json(rho)}};
  }
  write_json(c.out / "engineer.json", report);
}

// ---- filter ----

void cmd_filter(const Context& c) {
  const FilterSection& f = c.cfg.filter;
  const double fe = effective_efficiency(f.f, f.repetitions);
  if (f.max_sideband < 1 || f.atoms < 1 || f.trials < 0) throw config_error("filter: need max_sideband >= 1, atoms >= 1, trials >= 0");
  if (!(f.temperature_uk > 0.0) || !(f.trap_frequency_hz > 0.0)) throw config_error("filter: temperature and trap frequency must be positive");
  const PopulationDistribution dist =
      thermal_distribution(f.temperature_uk * 1e-6, hz_to_rad(f.trap_frequency_hz), c.cfg.solver.n_max);
  std::optional<double> ceiling;
  if (!f.fit_ceiling) ceiling = std::pow(1.0 - f.loss_per_repetition, f.repetitions);
  std::mt19937_64 rng(c.cfg.seed);
  std::uniform_real_distribution<double> noise(-f.noise, f.noise);
  const int k = f.max_sideband;
  std::vector<double> mean_plateau(k + 1, 0.0), mean_p(k, 0.0), sq_p(k, 0.0);
  int clipped = 0;
  for (int t = 0; t < f.trials; ++t) {
    std::vector<double> s = sample_plateaus(dist, k, f.f, f.repetitions, f.atoms, rng, f.loss_per_repetition);
    for (double& v : s) v = std::clamp(v + noise(rng), 0.0, 1.0);
    const Reconstruction r = reconstruct_distribution(s, fe, ceiling, 0.5);
    clipped += static_cast<int>(r.warnings.size());
    for (int n = 0; n <= k; ++n) mean_plateau[n] += s[n] / f.trials;
    for (int m = 0; m < k; ++m) {
      mean_p[m] += r.distribution.p[m] / f.trials;
      sq_p[m] += r.distribution.p[m] * r.distribution.p[m] / f.trials;
    }
  }
  CsvWriter plat(c.out / "filter_plateaus.csv", {"n", "F_n", "survival", "survival_mc"});
  std::vector<double> exact;
  for (int n = 0; n <= k; ++n) {
    exact.push_back(filter_survival(dist, n, f.f, f.repetitions, f.loss_per_repetition));
    plat.row({double(n), dist.cumulative(n), exact.back(), f.trials > 0 ? mean_plateau[n] : NAN});
  }
  const Reconstruction exact_rec = reconstruct_distribution(exact, fe, ceiling);
  CsvWriter rec(c.out / "filter_reconstruction.csv", {"m", "p_true", "p_exact_reconstruction", "p_mc_mean", "p_mc_sd"});
  double max_err = 0.0;
  for (int m = 0; m < k; ++m) {
    const double sd = std::sqrt(std::max(0.0, sq_p[m] - mean_p[m] * mean_p[m]));
    rec.row({double(m), dist.p[m], exact_rec.distribution.p[m], f.trials > 0 ? mean_p[m] : NAN, f.trials > 0 ? sd : NAN});
    if (f.trials > 0) max_err = std::max(max_err, std::abs(mean_p[m] - dist.p[m]));
  }
  write_json(c.out / "filter.json", {{"f", jnum(f.f)},
                                     {"repetitions", f.repetitions},
                                     {"f_effective", jnum(fe)},
                                     {"temperature_uK", jnum(f.temperature_uk)},
                                     {"trap_frequency_hz", jnum(f.trap_frequency_hz)},
                                     {"atoms", f.atoms},
                                     {"trials", f.trials},
                                     {"seed", c.cfg.seed},
                                     {"clipped_populations", clipped},
                                     {"mc_max_abs_error", jnum(max_err)}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microwave control of atomic motion in a spin-dependent optical lattice"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool emit = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "seed for all Monte-Carlo noise");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 4096));
  app.add_flag("--emit-config", emit, "print the resolved configuration and exit");
  app.fallthrough();

  using Command = void (*)(const Context&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"bands", "band energies and Wannier functions", cmd_bands},
      {"fcf", "Franck-Condon factors versus lattice shift", cmd_fcf},
      {"spectrum", "thermally broadened sideband spectra", cmd_spectrum},
      {"fit", "fit lattice parameters to a spectrum", cmd_fit},
      {"cool", "cooling steady state at one operating point", cmd_cool},
      {"coolmap", "ground-state population over (eta_x, Omega_0)", cmd_coolmap},
      {"engineer", "Fock, superposition and coherent state preparation", cmd_engineer},
      {"filter", "filter and push-out population measurement", cmd_filter}};
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Context ctx;
    if (!config_path.empty()) ctx.cfg = load_config(config_path);
    if (seed) ctx.cfg.seed = *seed;
    if (threads) ctx.cfg.threads = *threads;
    if (ctx.cfg.threads < 1) throw config_error("threads must be positive");
    if (emit) {
      std::cout << to_json(ctx.cfg).dump(2) << '\n';
      return 0;
    }
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
    for (const auto& [name, help, fn] : commands)
      if (app.got_subcommand(name)) fn(ctx);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const solver_error& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
