#pragma once
// JSON run configuration. Values are stored in lab units (Hz, nm, us, uK) and
// converted to library units by the to_* helpers. Unknown keys are rejected.

#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spinlat/cooling.hpp"
#include "spinlat/error.hpp"
#include "spinlat/lattice_model.hpp"
#include "spinlat/spectroscopy.hpp"
#include "spinlat/spin_lattice.hpp"
#include "spinlat/state_engineering.hpp"

namespace spinlat {

using json = nlohmann::ordered_json;

struct AtomSection {
  double mass_amu = 132.905451961;
  double d1_wavelength_nm = 894.6;
  double d2_wavelength_nm = 852.3;
  double hyperfine_hz = 9.192631770e9;
};

struct LatticeSection {
  double wavelength_nm = 866.0;
  double depth_up = 850.0;  // E_R
  double theta_rad = 0.0;
  double sigma_plus_weight_down = 0.125;
  double sigma_minus_weight_down = 0.875;
  double sigma_plus_weight_aux = 0.875;
  double sigma_minus_weight_aux = 0.125;
};

struct SolverSection {
  int n_bands = 16;
  int k_points = 64;        // band and Franck-Condon tables
  int model_k_points = 32;  // spectra, cooling and sequences
  int q_cutoff = 0;         // 0 selects the depth-dependent default
  int n_max = 15;
  double residual_tolerance = 1e-9;
};

struct BandsSection {
  double depth = -1.0;  // E_R; negative uses lattice.depth_up
  int wannier_bands = 6;
  double x_min = -1.5;  // units of d
  double x_max = 1.5;
  int x_points = 601;
};

struct FcfSection {
  double shift_min_nm = 0.0;
  double shift_max_nm = 216.5;
  int shift_points = 101;
  int n_max = 5;
  bool equal_depths = true;  // false uses W_down(theta) at each shift
};

struct SpectrumSection {
  std::vector<double> shifts_nm{0.0, 43.0, 111.0, 176.0};
  double detuning_min_hz = -900e3;
  double detuning_max_hz = 150e3;
  int points = 526;
  double fwhm_us = 30.0;
  double peak_rabi_hz = 0.0;  // 0 selects the carrier pi pulse
  double temperature_2d_uk = 2.7;
  double radial_frequency_hz = 1e3;
  std::string initial = "ground";  // ground | thermal
  double nbar = 1.4;
  int noise_atoms = 0;  // binomial noise with this many atoms per point; 0 disables
  int thermal_nodes = 32;
  std::string radial_rule = "uniform_panels";  // uniform_panels | gauss_laguerre
  int window = 2;
};

struct FitSection {
  std::string data;  // spectrum CSV (detuning_Hz, p_transfer, sigma_p)
  double shift_nm = -1.0;  // initial guess; negative reads the shift_nm column
  double depth_down = -1.0;  // negative derives from the shift
  double depth_offset = NAN;  // E_R; NaN derives from the shift
  double temperature_2d_uk = 2.7;
  std::vector<std::string> free{"shift", "depth_down", "depth_offset", "temperature_2d"};
  int max_iterations = 40;
  int variance_atoms = 0;  // >0 weights points by the model's binomial variance instead of sigma_p
};

struct CoolSection {
  double omega0_hz = 16e3;
  double eta_x = 0.3;
  double eta_k = 0.1;
  double repump_rate = 35e3;  // 1/s
  double pump_rate = 35e3;
  double lattice_scatter_rate = 15.0;
  double branching_up = 7.0 / 15.0;
  double branching_aux = 7.0 / 60.0;
  double branching_down = 5.0 / 12.0;
  std::string emission = "isotropic";  // isotropic | dipole_sigma
  int emission_nodes = 16;
  int target_up = 1;
  int target_down = 0;
  bool integrate = false;  // also integrate the master equation as a cross-check
};

struct CoolmapSection {
  double eta_x_min = 0.05;
  double eta_x_max = 1.2;
  int eta_x_points = 32;
  double omega0_min_hz = 2e3;
  double omega0_max_hz = 80e3;
  int omega0_points = 32;
};

struct EngineerSection {
  std::vector<int> fock_states{0, 1, 2, 3, 4, 5, 6};
  double chirp_rabi_hz = 60e3;
  double chirp_duration_us = 300.0;
  double chirp_sweep_hz = 80e3;
  std::vector<double> superposition_areas{0.30, 0.40, 0.55, 0.70};
  double fwhm_us = 30.0;
  std::vector<double> coherent_shifts_nm{0.0, 10.0, 20.0, 30.0, 40.0};
  json sequence = json::array();  // optional custom step list
  std::string initial_spin = "up";
  int initial_level = 0;
};

struct FilterSection {
  double f = 0.7;
  int repetitions = 3;
  double temperature_uk = 11.6;
  double trap_frequency_hz = 116e3;
  int max_sideband = 8;
  int atoms = 100;
  double loss_per_repetition = 0.0;
  int trials = 200;
  double noise = 0.0;  // additive uniform noise amplitude on plateaus
  bool fit_ceiling = false;  // fit the survival ceiling instead of using (1 - loss)^N
};

struct RunConfig {
  AtomSection atom;
  LatticeSection lattice;
  SolverSection solver;
  BandsSection bands;
  FcfSection fcf;
  SpectrumSection spectrum;
  FitSection fit;
  CoolSection cool;
  CoolmapSection coolmap;
  EngineerSection engineer;
  FilterSection filter;
  std::uint64_t seed = 1;
  int threads = 1;
};

namespace detail {

template <class F> void fields(AtomSection& s, F&& f) {
  f("mass_amu", s.mass_amu);
  f("d1_wavelength_nm", s.d1_wavelength_nm);
  f("d2_wavelength_nm", s.d2_wavelength_nm);
  f("hyperfine_hz", s.hyperfine_hz);
}
template <class F> void fields(LatticeSection& s, F&& f) {
  f("wavelength_nm", s.wavelength_nm);
  f("depth_up", s.depth_up);
  f("theta_rad", s.theta_rad);
  f("sigma_plus_weight_down", s.sigma_plus_weight_down);
  f("sigma_minus_weight_down", s.sigma_minus_weight_down);
  f("sigma_plus_weight_aux", s.sigma_plus_weight_aux);
  f("sigma_minus_weight_aux", s.sigma_minus_weight_aux);
}
template <class F> void fields(SolverSection& s, F&& f) {
  f("n_bands", s.n_bands);
  f("k_points", s.k_points);
  f("model_k_points", s.model_k_points);
  f("q_cutoff", s.q_cutoff);
  f("n_max", s.n_max);
  f("residual_tolerance", s.residual_tolerance);
}
template <class F> void fields(BandsSection& s, F&& f) {
  f("depth", s.depth);
  f("wannier_bands", s.wannier_bands);
  f("x_min", s.x_min);
  f("x_max", s.x_max);
  f("x_points", s.x_points);
}
template <class F> void fields(FcfSection& s, F&& f) {
  f("shift_min_nm", s.shift_min_nm);
  f("shift_max_nm", s.shift_max_nm);
  f("shift_points", s.shift_points);
  f("n_max", s.n_max);
  f("equal_depths", s.equal_depths);
}
template <class F> void fields(SpectrumSection& s, F&& f) {
  f("shifts_nm", s.shifts_nm);
  f("detuning_min_hz", s.detuning_min_hz);
  f("detuning_max_hz", s.detuning_max_hz);
  f("points", s.points);
  f("fwhm_us", s.fwhm_us);
  f("peak_rabi_hz", s.peak_rabi_hz);
  f("temperature_2d_uk", s.temperature_2d_uk);
  f("radial_frequency_hz", s.radial_frequency_hz);
  f("initial", s.initial);
  f("nbar", s.nbar);
  f("noise_atoms", s.noise_atoms);
  f("thermal_nodes", s.thermal_nodes);
  f("radial_rule", s.radial_rule);
  f("window", s.window);
}
template <class F> void fields(FitSection& s, F&& f) {
  f("data", s.data);
  f("shift_nm", s.shift_nm);
  f("depth_down", s.depth_down);
  f("depth_offset", s.depth_offset);
  f("temperature_2d_uk", s.temperature_2d_uk);
  f("free", s.free);
  f("max_iterations", s.max_iterations);
  f("variance_atoms", s.variance_atoms);
}
template <class F> void fields(CoolSection& s, F&& f) {
  f("omega0_hz", s.omega0_hz);
  f("eta_x", s.eta_x);
  f("eta_k", s.eta_k);
  f("repump_rate", s.repump_rate);
  f("pump_rate", s.pump_rate);
  f("lattice_scatter_rate", s.lattice_scatter_rate);
  f("branching_up", s.branching_up);
  f("branching_aux", s.branching_aux);
  f("branching_down", s.branching_down);
  f("emission", s.emission);
  f("emission_nodes", s.emission_nodes);
  f("target_up", s.target_up);
  f("target_down", s.target_down);
  f("integrate", s.integrate);
}
template <class F> void fields(CoolmapSection& s, F&& f) {
  f("eta_x_min", s.eta_x_min);
  f("eta_x_max", s.eta_x_max);
  f("eta_x_points", s.eta_x_points);
  f("omega0_min_hz", s.omega0_min_hz);
  f("omega0_max_hz", s.omega0_max_hz);
  f("omega0_points", s.omega0_points);
}
template <class F> void fields(EngineerSection& s, F&& f) {
  f("fock_states", s.fock_states);
  f("chirp_rabi_hz", s.chirp_rabi_hz);
  f("chirp_duration_us", s.chirp_duration_us);
  f("chirp_sweep_hz", s.chirp_sweep_hz);
  f("superposition_areas", s.superposition_areas);
  f("fwhm_us", s.fwhm_us);
  f("coherent_shifts_nm", s.coherent_shifts_nm);
  f("sequence", s.sequence);
  f("initial_spin", s.initial_spin);
  f("initial_level", s.initial_level);
}
template <class F> void fields(FilterSection& s, F&& f) {
  f("f", s.f);
  f("repetitions", s.repetitions);
  f("temperature_uk", s.temperature_uk);
  f("trap_frequency_hz", s.trap_frequency_hz);
  f("max_sideband", s.max_sideband);
  f("atoms", s.atoms);
  f("loss_per_repetition", s.loss_per_repetition);
  f("trials", s.trials);
  f("noise", s.noise);
  f("fit_ceiling", s.fit_ceiling);
}
template <class F> void fields(RunConfig& c, F&& f) {
  f("atom", c.atom);
  f("lattice", c.lattice);
  f("solver", c.solver);
  f("bands", c.bands);
  f("fcf", c.fcf);
  f("spectrum", c.spectrum);
  f("fit", c.fit);
  f("cool", c.cool);
  f("coolmap", c.coolmap);
  f("engineer", c.engineer);
  f("filter", c.filter);
  f("seed", c.seed);
  f("threads", c.threads);
}

template <class T> struct is_section : std::false_type {};
template <> struct is_section<AtomSection> : std::true_type {};
template <> struct is_section<LatticeSection> : std::true_type {};
template <> struct is_section<SolverSection> : std::true_type {};
template <> struct is_section<BandsSection> : std::true_type {};
template <> struct is_section<FcfSection> : std::true_type {};
template <> struct is_section<SpectrumSection> : std::true_type {};
template <> struct is_section<FitSection> : std::true_type {};
template <> struct is_section<CoolSection> : std::true_type {};
template <> struct is_section<CoolmapSection> : std::true_type {};
template <> struct is_section<EngineerSection> : std::true_type {};
template <> struct is_section<FilterSection> : std::true_type {};
template <> struct is_section<RunConfig> : std::true_type {};

template <class S> void read_section(const json& j, S& s, const std::string& path);

template <class T> void read_value(const json& j, T& out, const std::string& path) {
  if constexpr (is_section<T>::value) {
    read_section(j, out, path);
  } else if constexpr (std::is_same_v<T, json>) {
    out = j;
  } else if constexpr (std::is_same_v<T, double>) {
    if (j.is_null()) {
      out = NAN;
      return;
    }
    if (!j.is_number()) throw config_error(path + ": expected a number");
    out = j.get<double>();
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw config_error(path + ": expected true or false");
    out = j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) throw config_error(path + ": expected an integer");
    if (std::is_unsigned_v<T> && j.is_number_integer() && j.get<long long>() < 0)
      throw config_error(path + ": expected a non-negative integer");
    out = j.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw config_error(path + ": expected a string");
    out = j.get<std::string>();
  } else {
    if (!j.is_array()) throw config_error(path + ": expected an array");
    out.clear();
    for (size_t i = 0; i < j.size(); ++i) {
      typename T::value_type v{};
      read_value(j[i], v, path + "[" + std::to_string(i) + "]");
      out.push_back(v);
    }
  }
}

template <class S> void read_section(const json& j, S& s, const std::string& path) {
  if (!j.is_object()) throw config_error((path.empty() ? std::string("config") : path) + ": expected an object");
  std::set<std::string> known;
  fields(s, [&](const char* key, auto& member) {
    known.insert(key);
    if (auto it = j.find(key); it != j.end()) read_value(*it, member, path.empty() ? key : path + "." + key);
  });
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw config_error("unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
}

template <class S> json write_section(S& s) {
  json j = json::object();
  fields(s, [&](const char* key, auto& member) {
    using T = std::decay_t<decltype(member)>;
    if constexpr (is_section<T>::value) {
      j[key] = write_section(member);
    } else if constexpr (std::is_same_v<T, double>) {
      j[key] = std::isnan(member) ? json(nullptr) : json(member);
    } else {
      j[key] = member;
    }
  });
  return j;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  RunConfig c;
  detail::read_section(j, c, "");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

inline json to_json(RunConfig c) { return detail::write_section(c); }

// ---- conversion to library types ----

inline AtomConstants to_atom(const RunConfig& c) {
  AtomConstants a;
  a.mass = c.atom.mass_amu * constants::amu;
  a.d1_wavelength = c.atom.d1_wavelength_nm;
  a.d2_wavelength = c.atom.d2_wavelength_nm;
  a.hyperfine_splitting = hz_to_rad(c.atom.hyperfine_hz);
  a.validate();
  return a;
}

inline LatticeGeometry to_geometry(const RunConfig& c) {
  LatticeGeometry g;
  g.wavelength = c.lattice.wavelength_nm;
  g.depth_up = c.lattice.depth_up;
  g.theta = c.lattice.theta_rad;
  g.sigma_plus_weight_down = c.lattice.sigma_plus_weight_down;
  g.sigma_minus_weight_down = c.lattice.sigma_minus_weight_down;
  g.validate();
  return g;
}

inline BandSolverOptions to_band_options(const RunConfig& c, bool model_grid = false) {
  if (c.solver.n_bands < 1 || c.solver.k_points < 1 || c.solver.model_k_points < 1 || c.solver.q_cutoff < 0)
    throw config_error("solver: n_bands, k_points and model_k_points must be positive, q_cutoff non-negative");
  if (c.solver.n_max < 0) throw config_error("solver.n_max must be non-negative");
  BandSolverOptions o;
  o.n_bands = std::max(c.solver.n_bands, c.solver.n_max + 1);
  o.k_points = model_grid ? c.solver.model_k_points : c.solver.k_points;
  o.q_cutoff = c.solver.q_cutoff;
  o.residual_tolerance = c.solver.residual_tolerance;
  o.threads = c.threads;
  return o;
}

inline LatticeSetup to_setup(const RunConfig& c) {
  const double wsum = c.lattice.sigma_plus_weight_aux + c.lattice.sigma_minus_weight_aux;
  if (std::abs(wsum - 1.0) > 1e-12 || c.lattice.sigma_plus_weight_aux < 0.0 || c.lattice.sigma_minus_weight_aux < 0.0)
    throw config_error("lattice: aux polarization weights must be non-negative and sum to 1");
  LatticeSetup s;
  s.atom = to_atom(c);
  s.geometry = to_geometry(c);
  s.n_max = c.solver.n_max;
  s.bands = to_band_options(c, true);
  s.aux_sigma_plus_weight = c.lattice.sigma_plus_weight_aux;
  s.aux_sigma_minus_weight = c.lattice.sigma_minus_weight_aux;
  return s;
}

inline GaussianEnvelope to_gaussian(double fwhm_us) {
  if (!(fwhm_us > 0.0)) throw config_error("pulse FWHM must be positive");
  return GaussianEnvelope{fwhm_us * 1e-6};
}

inline SpectrumSettings to_spectrum_settings(const RunConfig& c) {
  const SpectrumSection& sp = c.spectrum;
  SpectrumSettings s;
  s.atom = to_atom(c);
  s.wavelength = c.lattice.wavelength_nm;
  if (!(sp.radial_frequency_hz > 0.0)) throw config_error("spectrum.radial_frequency_hz must be positive");
  s.radial_frequency = hz_to_rad(sp.radial_frequency_hz);
  s.n_max = c.solver.n_max;
  s.bands = to_band_options(c, true);
  s.pulse.envelope = to_gaussian(sp.fwhm_us);
  s.pulse.peak_rabi = sp.peak_rabi_hz > 0.0 ? hz_to_rad(sp.peak_rabi_hz) : carrier_pi_rabi(s.pulse);
  if (sp.thermal_nodes < 1) throw config_error("spectrum.thermal_nodes must be positive");
  s.thermal_nodes = sp.thermal_nodes;
  if (sp.radial_rule == "uniform_panels")
    s.radial_rule = RadialRule::uniform_panels;
  else if (sp.radial_rule == "gauss_laguerre")
    s.radial_rule = RadialRule::gauss_laguerre;
  else
    throw config_error("spectrum.radial_rule must be 'uniform_panels' or 'gauss_laguerre'");
  s.window = sp.window;
  if (sp.initial == "ground") {
    s.initial_populations = {1.0};
  } else if (sp.initial == "thermal") {
    if (!(sp.nbar >= 0.0)) throw config_error("spectrum.nbar must be non-negative");
    s.initial_populations = thermal_populations(sp.nbar, c.solver.n_max);
  } else {
    throw config_error("spectrum.initial must be 'ground' or 'thermal'");
  }
  s.threads = c.threads;
  return s;
}

inline CoolingParams to_cooling_params(const RunConfig& c) {
  const CoolSection& k = c.cool;
  CoolingParams p;
  p.omega0 = hz_to_rad(k.omega0_hz);
  p.eta_x = k.eta_x;
  p.eta_k = k.eta_k;
  p.repump_rate = k.repump_rate;
  p.pump_rate = k.pump_rate;
  p.lattice_scatter_rate = k.lattice_scatter_rate;
  p.branching = {k.branching_up, k.branching_aux, k.branching_down};
  if (k.emission == "isotropic")
    p.emission = EmissionPattern::isotropic;
  else if (k.emission == "dipole_sigma")
    p.emission = EmissionPattern::dipole_sigma;
  else
    throw config_error("cool.emission must be 'isotropic' or 'dipole_sigma'");
  p.emission_nodes = k.emission_nodes;
  p.target_up = k.target_up;
  p.target_down = k.target_down;
  p.validate(c.solver.n_max);
  return p;
}

inline Spin parse_spin(const std::string& s, const std::string& path) {
  if (s == "up") return Spin::up;
  if (s == "down") return Spin::down;
  if (s == "aux") return Spin::aux;
  throw config_error(path + ": spin must be 'up', 'down' or 'aux'");
}

// Custom sequence steps. Shifts are given in nm and converted to units of d.
inline std::vector<SequenceStep> parse_sequence(const json& steps, const LatticeGeometry& geom) {
  if (!steps.is_array()) throw config_error("engineer.sequence: expected an array");
  std::vector<SequenceStep> out;
  for (size_t i = 0; i < steps.size(); ++i) {
    const std::string path = "engineer.sequence[" + std::to_string(i) + "]";
    const json& s = steps[i];
    if (!s.is_object() || !s.contains("type") || !s["type"].is_string())
      throw config_error(path + ": each step needs a string 'type'");
    const std::string type = s["type"].get<std::string>();
    auto allow = [&](std::set<std::string> keys) {
      keys.insert("type");
      for (auto it = s.begin(); it != s.end(); ++it)
        if (!keys.count(it.key())) throw config_error("unknown key '" + path + "." + it.key() + "'");
    };
    auto num = [&](const char* key, double fallback) {
      if (!s.contains(key)) return fallback;
      double v = 0.0;
      detail::read_value(s[key], v, path + "." + key);
      return v;
    };
    auto integer = [&](const char* key, int fallback) {
      if (!s.contains(key)) return fallback;
      int v = 0;
      detail::read_value(s[key], v, path + "." + key);
      return v;
    };
    auto flag = [&](const char* key, bool fallback) {
      if (!s.contains(key)) return fallback;
      bool v = false;
      detail::read_value(s[key], v, path + "." + key);
      return v;
    };
    if (type == "microwave") {
      allow({"envelope", "fwhm_us", "duration_us", "sweep_hz", "peak_rabi_hz", "area", "n_up", "n_down",
             "detuning_offset_hz"});
      MicrowaveStep m;
      const std::string env = s.value("envelope", std::string("gaussian"));
      if (env == "gaussian")
        m.pulse.envelope = to_gaussian(num("fwhm_us", 30.0));
      else if (env == "rectangular")
        m.pulse.envelope = RectangularEnvelope{num("duration_us", 30.0) * 1e-6};
      else if (env == "chirp")
        m.pulse.envelope = ChirpEnvelope{num("duration_us", 300.0) * 1e-6, hz_to_rad(num("sweep_hz", 80e3))};
      else
        throw config_error(path + ".envelope: expected 'gaussian', 'rectangular' or 'chirp'");
      m.pulse.peak_rabi = hz_to_rad(num("peak_rabi_hz", 0.0));
      if (s.contains("area")) m.area = num("area", 1.0);
      if (!m.area && !(m.pulse.peak_rabi > 0.0)) throw config_error(path + ": give 'area' or 'peak_rabi_hz'");
      m.n_up = integer("n_up", 0);
      m.n_down = integer("n_down", 0);
      m.detuning_offset = hz_to_rad(num("detuning_offset_hz", 0.0));
      out.push_back(m);
    } else if (type == "shift") {
      allow({"shift_nm", "mode"});
      LatticeShiftStep l;
      l.shift = num("shift_nm", 0.0) / geom.spacing();
      const std::string mode = s.value("mode", std::string("instantaneous"));
      if (mode == "timed")
        l.mode = ShiftMode::timed;
      else if (mode != "instantaneous")
        throw config_error(path + ".mode: expected 'instantaneous' or 'timed'");
      out.push_back(l);
    } else if (type == "repump") {
      allow({"conditioned"});
      out.push_back(RepumpStep{flag("conditioned", true)});
    } else if (type == "push_out") {
      allow({"efficiency"});
      out.push_back(PushOutStep{num("efficiency", 1.0)});
    } else if (type == "wait") {
      allow({"duration_us", "dephase"});
      out.push_back(WaitStep{num("duration_us", 0.0) * 1e-6, flag("dephase", false)});
    } else {
      throw config_error(path + ".type: unknown step type '" + type + "'");
    }
  }
  return out;
}

}  // namespace spinlat
