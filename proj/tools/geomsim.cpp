// geomsim: batch front-end reproducing the figure-level experiments.
// Every run writes its outputs plus a run_manifest.json into --out; --check
// compares headline numbers against the bands shipped in configs/acceptance.json
// and reflects the result in the exit status (0 pass, 1 fail, 2 error).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geomsim/characterization.hpp"
#include "geomsim/config.hpp"
#include "geomsim/workflows.hpp"

using namespace geomsim;
using nlohmann::json;

namespace {

constexpr const char* kArtifactVersion = "1.0.0";
constexpr double kPi = 3.14159265358979323846;

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct CsvWriter {
  std::ostringstream ss;
  explicit CsvWriter(const std::vector<std::string>& header) { row_strings(header); }
  void row_strings(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i)
      ss << (i ? "," : "") << csv_field(fields[i]);
    ss << "\r\n";
  }
  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) ss << (i ? "," : "") << fmt17(values[i]);
    ss << "\r\n";
  }
};

// Collects outputs in memory and writes them only after the whole run
// succeeded, so failures never leave partial files behind.
struct RunSink {
  std::string out_dir;
  std::vector<std::pair<std::string, std::string>> files;

  void add(const std::string& name, std::string content) {
    files.emplace_back(name, std::move(content));
  }
  std::vector<std::string> commit() {
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> names;
    for (const auto& [name, content] : files) {
      std::ofstream out(std::filesystem::path(out_dir) / name, std::ios::binary);
      if (!out) throw ConfigError("cannot write output file: " + name);
      out << content;
      names.push_back(name);
    }
    return names;
  }
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

std::vector<double> parse_range(const std::string& spec) {
  // "a:b:step" inclusive grid, or a single value
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(std::stod(tok));
  if (parts.size() == 1) return parts;
  if (parts.size() != 3 || parts[2] <= 0)
    throw ConfigError("range must be 'a:b:step' with step > 0: " + spec);
  std::vector<double> grid;
  for (double x = parts[0]; x <= parts[1] + 1e-9 * parts[2]; x += parts[2]) grid.push_back(x);
  return grid;
}

struct GlobalOpts {
  std::string device_path = "configs/device_tableS1.json";
  std::string acceptance_path = "configs/acceptance.json";
  std::string out_dir;
  std::string config_path;
  std::uint64_t seed = 1;
  int jobs = 0;
  bool check = false;
};

// Strictly parsed optional scenario file; CLI flags win over file values.
struct Scenario {
  json raw = json::object();

  void load(const std::string& path) {
    try {
      raw = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ConfigError(path + ": JSON parse error: " + e.what());
    }
    static const std::vector<std::string> allowed = {
        "device",    "seed",     "out_dir",     "n",     "omega_sq_mhz2", "mode",
        "shots",     "confusion", "psd_project", "m_list", "k_sequences",  "param",
        "range",     "values",   "theta",       "omega_sq", "test_qubit", "control_state",
        "theta_d_rad", "sigma_mhz", "gamma_per_us", "duration_ns", "omega_mhz", "mc_samples",
        "recalibrate", "full_qpt"};
    for (const auto& item : raw.items()) {
      bool ok = false;
      for (const auto& k : allowed) ok = ok || k == item.key();
      if (!ok) throw ConfigError("unknown key: " + path + "/" + item.key());
    }
  }
  template <typename T>
  void fill(const char* key, T& value, bool cli_set) const {
    if (cli_set) return;
    auto it = raw.find(key);
    if (it != raw.end()) value = it->get<T>();
  }
};

struct CheckReport {
  bool enabled = false;
  bool passed = true;
  json details = json::array();

  void band(const AcceptanceBands& bands, const std::string& key, double value) {
    auto [lo, hi] = bands.band(key);
    const bool ok = value >= lo && value <= hi;
    passed = passed && ok;
    details.push_back({{"check", key}, {"value", value}, {"band", {lo, hi}}, {"pass", ok}});
  }
  void at_most(const AcceptanceBands& bands, const std::string& key, double value) {
    const double lim = bands.scalar(key);
    const bool ok = value <= lim;
    passed = passed && ok;
    details.push_back({{"check", key}, {"value", value}, {"limit", lim}, {"pass", ok}});
  }
  void at_least(const AcceptanceBands& bands, const std::string& key, double value) {
    const double lim = bands.scalar(key);
    const bool ok = value >= lim;
    passed = passed && ok;
    details.push_back({{"check", key}, {"value", value}, {"limit", lim}, {"pass", ok}});
  }
};

struct Runner {
  GlobalOpts opts;
  Scenario scenario;
  DeviceFile device_file;
  AcceptanceBands bands;
  CheckReport report;
  json resolved = json::object();
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  std::string started_utc = utc_now();

  void init(const std::string& command) {
    if (!opts.config_path.empty()) scenario.load(opts.config_path);
    scenario.fill("device", opts.device_path, false);
    scenario.fill("seed", opts.seed, false);
    scenario.fill("out_dir", opts.out_dir, !opts.out_dir.empty());
    if (const char* env = std::getenv("GEOMSIM_SEED")) {
      try {
        opts.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError("GEOMSIM_SEED must be a 64-bit unsigned integer");
      }
    }
    if (opts.out_dir.empty()) opts.out_dir = "runs/" + command;
    device_file = load_device_file(opts.device_path);
    if (opts.check) {
      bands = load_acceptance_bands(opts.acceptance_path);
      report.enabled = true;
    }
    resolved["command"] = command;
    resolved["device"] = opts.device_path;
    resolved["seed"] = opts.seed;
    resolved["out_dir"] = opts.out_dir;
    resolved["jobs"] = opts.jobs;
    resolved["check"] = opts.check;
  }

  void finish(RunSink& sink) {
    json manifest;
    manifest["artifact_version"] = kArtifactVersion;
    manifest["config"] = resolved;
    manifest["device_file"] = opts.device_path;
    manifest["device_file_hash"] = device_file.content_hash;
    manifest["started_utc"] = started_utc;
    manifest["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - started)
                              .count();
    if (report.enabled) manifest["check"] = {{"passed", report.passed}, {"details", report.details}};
    std::vector<std::string> names;
    for (const auto& [name, content] : sink.files) names.push_back(name);
    manifest["outputs"] = names;
    sink.add("run_manifest.json", manifest.dump(2) + "\n");
    sink.commit();
  }
};

// --- shared gate pipeline ---------------------------------------------------

json chi_to_json(const ChiMatrix& chi) {
  json out;
  out["n_qubits"] = chi.n_qubits;
  out["pauli_order"] = chi.pauli_labels();
  json re = json::array(), im = json::array();
  for (int i = 0; i < chi.chi.rows(); ++i) {
    json rrow = json::array(), irow = json::array();
    for (int j = 0; j < chi.chi.cols(); ++j) {
      rrow.push_back(chi.chi(i, j).real());
      irow.push_back(chi.chi(i, j).imag());
    }
    re.push_back(rrow);
    im.push_back(irow);
  }
  out["re"] = re;
  out["im"] = im;
  out["tp_residual"] = chi.tp_residual;
  out["cp_min_eig"] = chi.cp_min_eig;
  return out;
}

json phase_table_json(const PhaseTable& t) {
  json out;
  out["n_qubits"] = t.n_qubits;
  out["phase_rad"] = t.phase_rad;
  out["coeffs_rad"] = t.coeffs_rad;
  out["leakage"] = t.leakage;
  out["conditional_phase_rad"] = t.conditional_phase_rad;
  out["max_leakage"] = t.max_leakage;
  return out;
}

// --- subcommands ------------------------------------------------------------

int cmd_ramsey(Runner& run, int n, int test_qubit, const std::string& control_bits,
               const std::string& omega_spec, const std::string& theta_spec) {
  const OperatingTable& op = operating_table(run.device_file, n);
  GateConfig cfg = op.gate;
  std::vector<int> control;
  for (char c : control_bits) {
    if (c != '0' && c != '1') throw ConfigError("control state must be a bit string");
    control.push_back(c - '0');
  }
  auto omega_sq = parse_range(omega_spec);
  auto theta = parse_range(theta_spec);
  run.resolved["n"] = n;
  run.resolved["test_qubit"] = test_qubit;
  run.resolved["control_state"] = control_bits;
  run.resolved["omega_sq"] = omega_spec;
  run.resolved["theta"] = theta_spec;

  auto surface = ramsey_experiment(run.device_file.device, cfg, test_qubit, control, omega_sq,
                                   theta, EvolveMode::Unitary);
  auto fits = fit_ramsey_family(surface);

  RunSink sink{run.opts.out_dir};
  CsvWriter surf({"omega_sq_mhz2", "theta_rad", "p1"});
  for (std::size_t i = 0; i < surface.omega_sq_mhz2.size(); ++i)
    for (std::size_t j = 0; j < surface.theta_rad.size(); ++j)
      surf.row({surface.omega_sq_mhz2[i], surface.theta_rad[j], surface.p1(i, j)});
  sink.add("ramsey_surface.csv", surf.ss.str());

  CsvWriter fcsv({"omega_sq_mhz2", "beta_rad", "contrast", "offset", "amplitude"});
  for (std::size_t i = 0; i < fits.size(); ++i)
    fcsv.row({surface.omega_sq_mhz2[i], fits[i].beta_rad, fits[i].contrast, fits[i].offset,
              fits[i].amplitude});
  sink.add("ramsey_fits.csv", fcsv.ss.str());

  // least-squares slope of -beta vs Omega^2 against the drive-frame law
  double sxx = 0, sxy = 0, sx = 0, sy = 0;
  const double m = static_cast<double>(fits.size());
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const double x = surface.omega_sq_mhz2[i], y = -fits[i].beta_rad;
    sxx += x * x;
    sxy += x * y;
    sx += x;
    sy += y;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  const double expected = 2.0 * kPi / (cfg.drive_delta_mhz * cfg.drive_delta_mhz);
  json summary = {{"slope_rad_per_mhz2", slope},
                  {"expected_slope_rad_per_mhz2", expected},
                  {"rel_error", std::abs(slope / expected - 1.0)}};
  sink.add("ramsey_summary.json", summary.dump(2) + "\n");

  if (run.report.enabled) {
    const double tol = run.bands.scalar("ramsey.slope_rel_tol");
    const bool ok = std::abs(slope / expected - 1.0) <= tol;
    run.report.passed = run.report.passed && ok;
    run.report.details.push_back(
        {{"check", "ramsey.slope_rel_tol"}, {"value", std::abs(slope / expected - 1.0)},
         {"limit", tol}, {"pass", ok}});
  }
  run.finish(sink);
  return 0;
}

int cmd_trajectory(Runner& run, int n, double omega_mhz) {
  const OperatingTable& op = operating_table(run.device_file, n);
  GateConfig cfg = op.gate;
  cfg.drive_omega_mhz = omega_mhz;
  auto rp = resolve_operating_point(run.device_file.device, cfg);
  run.resolved["n"] = n;
  run.resolved["omega_mhz"] = omega_mhz;

  RunSink sink{run.opts.out_dir};
  CsvWriter csv({"state", "t_ns", "nbar"});
  double ground_peak = 0, ground_final = 0, excited_max = 0;
  for (int s = 0; s < (1 << n); ++s) {
    std::vector<int> state(n);
    for (int q = 0; q < n; ++q) state[q] = (s >> (n - 1 - q)) & 1;
    auto traj = photon_trajectory(run.device_file.device, rp.point, state);
    std::string label;
    for (int b : state) label += char('0' + b);
    for (std::size_t i = 0; i < traj.t_ns.size(); ++i) {
      csv.row_strings({label, fmt17(traj.t_ns[i]), fmt17(traj.nbar[i])});
      if (s == 0) {
        ground_peak = std::max(ground_peak, traj.nbar[i]);
        ground_final = traj.nbar[i];
      } else {
        excited_max = std::max(excited_max, traj.nbar[i]);
      }
    }
  }
  sink.add("trajectory.csv", csv.ss.str());
  json summary = {{"ground_peak_nbar", ground_peak},
                  {"ground_final_nbar", ground_final},
                  {"excited_max_nbar", excited_max}};
  sink.add("trajectory_summary.json", summary.dump(2) + "\n");

  if (run.report.enabled) {
    run.report.band(run.bands, "trajectory.ground_peak_nbar", ground_peak);
    run.report.at_most(run.bands, "trajectory.ground_final_nbar_max", ground_final);
    run.report.at_most(run.bands, "trajectory.excited_nbar_max", excited_max);
  }
  run.finish(sink);
  return 0;
}

ChiMatrix gate_qpt(const Runner& run, const CalibratedGate& cal, EvolveMode mode,
                   const MeasurementModel& model, std::mt19937_64* rng) {
  auto schedule = build_cphase_schedule(run.device_file.device, cal.config);
  auto channel = schedule_channel(schedule, cal.gate_device, mode);
  return qpt(channel, static_cast<int>(cal.config.active_labels.size()), model, rng);
}

int cmd_gate(Runner& run, int n, double omega_sq, bool full_qpt, const std::string& mode_name) {
  run.resolved["n"] = n;
  run.resolved["mode"] = mode_name;
  const EvolveMode mode = mode_name == "unitary" ? EvolveMode::Unitary : EvolveMode::Lindblad;
  if (mode_name != "unitary" && mode_name != "lindblad")
    throw ConfigError("mode must be unitary or lindblad");

  CalibratedGate cal = calibrate_gate(run.device_file, n, omega_sq);
  run.resolved["omega_sq_star"] = cal.omega_sq_star;

  RunSink sink{run.opts.out_dir};
  json summary;
  summary["n"] = n;
  summary["omega_sq_star_mhz2"] = cal.omega_sq_star;
  summary["conditional_phase_rad"] = cal.table.conditional_phase_rad;
  summary["max_leakage"] = cal.table.max_leakage;
  summary["compensation_z_rad"] = cal.config.compensation_z_rad;
  summary["warnings"] = cal.warnings;
  summary["phase_table"] = phase_table_json(cal.table);

  auto schedule = build_cphase_schedule(run.device_file.device, cal.config);
  const Matrix u_comp = schedule_computational_unitary(schedule, run.device_file.device);
  const double unitary_fidelity = unitary_operator_fidelity(u_comp, ideal_cphase_unitary(n));
  summary["unitary_computational_fidelity"] = unitary_fidelity;
  const double qutrit_occ = max_qutrit_occupation(schedule, run.device_file.device);
  summary["qutrit_occupation_max"] = qutrit_occ;

  double fidelity = 0;
  if (n == 1) {
    fidelity = unitary_fidelity;
  } else if (n <= 3 || full_qpt) {
    ChiMatrix chi = gate_qpt(run, cal, mode, MeasurementModel::exact(), nullptr);
    ChiMatrix ideal = ideal_chi(ideal_cphase_unitary(n));
    fidelity = process_fidelity(chi, ideal);
    json cj = chi_to_json(chi);
    cj["seed"] = run.opts.seed;
    cj["device_file_hash"] = run.device_file.content_hash;
    cj["process_fidelity"] = fidelity;
    sink.add("chi.json", cj.dump(2) + "\n");
  } else {
    double leak = 0;
    fidelity = fast_path_fidelity(run.device_file.device, cal, &leak);
    summary["fast_path_leakage_max"] = leak;
  }
  summary["fidelity"] = fidelity;
  sink.add("gate_summary.json", summary.dump(2) + "\n");

  if (run.report.enabled) {
    if (n == 1) {
      const double err = std::abs(std::abs(cal.table.conditional_phase_rad) - kPi);
      run.report.at_most(run.bands, "gate1.conditional_phase_abs_tol", err);
      run.report.at_most(run.bands, "gate1.leakage_max", qutrit_occ);
    } else {
      run.report.band(run.bands, "gate" + std::to_string(n) + ".fidelity", fidelity);
      if (n == 2) {
        run.report.at_least(run.bands, "gate2.unitary_fidelity_min", unitary_fidelity);
        run.report.at_most(run.bands, "gate2.leakage_max", qutrit_occ);
      }
    }
  }
  run.finish(sink);
  return 0;
}

int cmd_qpt(Runner& run, int n, const std::string& mode_name, int shots,
            const std::string& confusion, bool psd_project) {
  run.resolved["n"] = n;
  run.resolved["mode"] = mode_name;
  run.resolved["shots"] = shots;
  run.resolved["confusion"] = confusion;
  const EvolveMode mode = mode_name == "unitary" ? EvolveMode::Unitary : EvolveMode::Lindblad;
  if (mode_name != "unitary" && mode_name != "lindblad")
    throw ConfigError("mode must be unitary or lindblad");

  MeasurementModel model = MeasurementModel::exact();
  std::mt19937_64 rng(run.opts.seed);
  std::mt19937_64* rng_ptr = nullptr;
  if (shots > 0) {
    Eigen::Matrix3d c = Eigen::Matrix3d::Identity();
    if (confusion == "representative")
      c = MeasurementModel::representative_confusion();
    else if (confusion != "identity")
      throw ConfigError("confusion must be identity or representative");
    model = MeasurementModel::sampled(shots, c);
    model.psd_project = psd_project;
    rng_ptr = &rng;
  }

  CalibratedGate cal = calibrate_gate(run.device_file, n);
  ChiMatrix chi = gate_qpt(run, cal, mode, model, rng_ptr);
  ChiMatrix ideal = ideal_chi(ideal_cphase_unitary(n));
  const double fidelity = process_fidelity(chi, ideal);

  RunSink sink{run.opts.out_dir};
  json cj = chi_to_json(chi);
  cj["seed"] = run.opts.seed;
  cj["device_file_hash"] = run.device_file.content_hash;
  cj["process_fidelity"] = fidelity;
  cj["omega_sq_star_mhz2"] = cal.omega_sq_star;
  sink.add("chi.json", cj.dump(2) + "\n");

  if (run.report.enabled)
    run.report.band(run.bands, "gate" + std::to_string(n) + ".fidelity", fidelity);
  run.finish(sink);
  return 0;
}

int cmd_rb(Runner& run, const std::string& m_spec, int k_sequences, bool noiseless) {
  std::vector<int> m_list;
  {
    std::stringstream ss(m_spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) m_list.push_back(std::stoi(tok));
  }
  run.resolved["m_list"] = m_list;
  run.resolved["k_sequences"] = k_sequences;
  run.resolved["noiseless"] = noiseless;

  Matrix cz_superop;
  RBNoise noise = RBNoise::none();
  double omega_sq_star = 0;
  if (noiseless) {
    cz_superop = ideal_cz_superop();
  } else {
    CalibratedGate cal = calibrate_gate(run.device_file, 2);
    omega_sq_star = cal.omega_sq_star;
    auto schedule = build_cphase_schedule(run.device_file.device, cal.config);
    auto channel = schedule_channel(schedule, cal.gate_device, EvolveMode::Lindblad);
    // leakage kept as trace loss so simulated P00 decays like the measured one
    cz_superop = computational_superop(channel, 2);
    auto idx = cal.config.qubit_indices(cal.gate_device);
    noise.t1_us = {cal.gate_device.qubits[idx[0]].t1_us, cal.gate_device.qubits[idx[1]].t1_us};
    noise.t_phi_us = {cal.gate_device.qubits[idx[0]].t_phi_us,
                      cal.gate_device.qubits[idx[1]].t_phi_us};
  }

  RBConfig cfg;
  cfg.m_list = m_list;
  cfg.k_sequences = k_sequences;
  cfg.seed = run.opts.seed;

  cfg.interleave_cz = false;
  RBResult ref = rb_run(cz_superop, noise, cfg);
  cfg.interleave_cz = true;
  RBResult inter = rb_run(cz_superop, noise, cfg);
  const double fidelity = interleaved_fidelity(inter.p, ref.p);

  RunSink sink{run.opts.out_dir};
  for (const auto& [name, res] : {std::pair<const char*, const RBResult&>("rb_reference.csv", ref),
                                  {"rb_interleaved.csv", inter}}) {
    CsvWriter csv({"m", "mean_p00", "sem", "k"});
    for (std::size_t i = 0; i < res.m_list.size(); ++i)
      csv.row({static_cast<double>(res.m_list[i]), res.mean_p00[i], res.sem[i],
               static_cast<double>(res.k_sequences)});
    sink.add(name, csv.ss.str());
  }
  json summary = {{"p_reference", ref.p},       {"p_interleaved", inter.p},
                  {"a_reference", ref.a},       {"b_reference", ref.b},
                  {"interleaved_fidelity", fidelity}, {"seed", run.opts.seed},
                  {"omega_sq_star_mhz2", omega_sq_star}};
  sink.add("rb_summary.json", summary.dump(2) + "\n");

  if (run.report.enabled) {
    if (noiseless)
      run.report.band(run.bands, "rb.noiseless_fidelity", fidelity);
    else
      run.report.band(run.bands, "rb.interleaved_cz_fidelity", fidelity);
  }
  run.finish(sink);
  return 0;
}

int cmd_sweep(Runner& run, int n, const std::string& param, const std::string& range_spec,
              bool recalibrate) {
  run.resolved["n"] = n;
  run.resolved["param"] = param;
  run.resolved["range"] = range_spec;
  run.resolved["recalibrate"] = recalibrate;
  auto grid = parse_range(range_spec);

  RunSink sink{run.opts.out_dir};
  CsvWriter csv({"param_value", "fidelity", "conditional_phase", "leakage"});
  CsvWriter failures({"param_value", "error"});
  int n_failed = 0;
  std::vector<double> fidelities;
  std::vector<double> omega_sq_star;

  for (double value : grid) {
    try {
      DeviceFile file = run.device_file;
      const OperatingTable& op = operating_table(file, n);
      GateConfig cfg = op.gate;
      if (param == "device.g01_scale") {
        for (const auto& label : cfg.active_labels)
          file.device.qubits[file.device.index_of(label)].g01_mhz *= value;
      } else if (param == "device.g01_mhz") {
        for (const auto& label : cfg.active_labels)
          file.device.qubits[file.device.index_of(label)].g01_mhz = value;
      } else if (param == "gate.drive_delta_mhz") {
        cfg.drive_delta_mhz = value;
      } else if (param == "gate.drive_omega_sq_mhz2") {
        cfg.drive_omega_mhz = std::sqrt(value);
      } else {
        throw ConfigError("unsupported sweep parameter path: " + param);
      }

      std::vector<std::string> warnings;
      if (recalibrate && param != "gate.drive_omega_sq_mhz2")
        cfg.drive_omega_mhz = calibrate_amplitude(file.device, cfg, kPi, &warnings);
      omega_sq_star.push_back(cfg.drive_omega_mhz * cfg.drive_omega_mhz);
      auto schedule = build_cphase_schedule(file.device, cfg, &warnings);
      auto table = extract_conditional_phases(schedule, file.device);
      cfg.compensation_z_rad = calibrate_compensation(table);
      schedule = build_cphase_schedule(file.device, cfg, &warnings);
      table = extract_conditional_phases(schedule, file.device);
      const Matrix u = schedule_computational_unitary(schedule, file.device);
      const double fidelity = unitary_operator_fidelity(u, ideal_cphase_unitary(n));
      csv.row({value, fidelity, table.conditional_phase_rad, table.max_leakage});
      fidelities.push_back(fidelity);
    } catch (const std::exception& e) {
      ++n_failed;
      failures.row_strings({fmt17(value), e.what()});
    }
  }
  sink.add("sweep.csv", csv.ss.str());
  if (n_failed > 0) sink.add("sweep_failures.csv", failures.ss.str());

  double spread = 0;
  if (!fidelities.empty()) {
    const auto [lo, hi] = std::minmax_element(fidelities.begin(), fidelities.end());
    spread = *hi - *lo;
  }
  json summary = {{"points", grid.size()},   {"failed", n_failed},
                  {"fidelity_spread", spread}, {"omega_sq_star_mhz2", omega_sq_star}};
  sink.add("sweep_summary.json", summary.dump(2) + "\n");

  if (run.report.enabled && (param == "device.g01_scale" || param == "device.g01_mhz"))
    run.report.at_most(run.bands, "sweep.g01_fidelity_spread_max", spread);
  run.finish(sink);
  return 0;
}

int cmd_noise_variance(Runner& run, double theta_d, double sigma_mhz, double gamma_per_us,
                       double duration_ns, double omega_mhz, int mc_samples) {
  run.resolved["theta_d_rad"] = theta_d;
  run.resolved["sigma_mhz"] = sigma_mhz;
  run.resolved["gamma_per_us"] = gamma_per_us;
  run.resolved["duration_ns"] = duration_ns;
  run.resolved["omega_mhz"] = omega_mhz;
  run.resolved["mc_samples"] = mc_samples;

  const double formula =
      dynamical_phase_variance(theta_d, sigma_mhz, gamma_per_us, duration_ns, omega_mhz);

  // Ornstein-Uhlenbeck amplitude noise: dOmega follows the exact AR(1) update,
  // the phase picks up -2 pi * 2 (theta_d / (2 pi Omega T)) * integral of
  // delta-Omega; theta_d = -eps T with eps proportional to Omega^2 makes the
  // phase deviation 2 theta_d * delta-Omega / Omega to first order.
  const int steps = 2000;
  const double dt = duration_ns / steps;
  const double gamma_ns = gamma_per_us * 1e-3;
  const double decay = std::exp(-gamma_ns * dt);
  const double kick = sigma_mhz * std::sqrt(1.0 - decay * decay);
  std::mt19937_64 rng(run.opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double sum = 0, sum_sq = 0;
  for (int s = 0; s < mc_samples; ++s) {
    double x = sigma_mhz * gauss(rng);  // stationary start
    double integral = 0;
    for (int i = 0; i < steps; ++i) {
      integral += x * dt;
      x = decay * x + kick * gauss(rng);
    }
    const double phase = 2.0 * theta_d * integral / (omega_mhz * duration_ns);
    sum += phase;
    sum_sq += phase * phase;
  }
  const double mean = sum / mc_samples;
  const double mc = sum_sq / mc_samples - mean * mean;
  const double rel_diff = std::abs(mc / formula - 1.0);

  const double slow_limit = 4.0 * theta_d * theta_d * sigma_mhz * sigma_mhz /
                            (omega_mhz * omega_mhz);

  RunSink sink{run.opts.out_dir};
  CsvWriter csv({"formula_rad2", "mc_rad2", "rel_diff", "slow_limit_rad2"});
  csv.row({formula, mc, rel_diff, slow_limit});
  sink.add("noise_variance.csv", csv.ss.str());

  if (run.report.enabled) run.report.at_most(run.bands, "noise_variance.mc_rel_tol", rel_diff);
  run.finish(sink);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pulse-level simulator and calibration toolkit for bus-resonator geometric "
               "controlled-phase gates"};
  app.require_subcommand(1);

  Runner run;
  app.add_option("--device", run.opts.device_path, "device JSON file");
  app.add_option("--acceptance", run.opts.acceptance_path, "acceptance bands JSON file");
  app.add_option("--out", run.opts.out_dir, "output directory (default runs/<subcommand>)");
  app.add_option("--config", run.opts.config_path, "scenario config JSON (strictly parsed)");
  app.add_option("--seed", run.opts.seed, "root RNG seed (env GEOMSIM_SEED overrides)");
  app.add_option("--jobs", run.opts.jobs, "parallel worker count (results are job-independent)");
  app.add_flag("--check", run.opts.check, "compare results against acceptance bands; exit 1 on miss");

  int n = 1, test_qubit = 0;
  std::string control_bits, omega_spec = "0:8:0.5", theta_spec = "0:6.283:0.26";
  auto* ramsey = app.add_subcommand("ramsey", "conditional Ramsey interference surface");
  ramsey->add_option("--n", n, "operating point by active-qubit count");
  ramsey->add_option("--test-qubit", test_qubit, "index within the active set");
  ramsey->add_option("--control-state", control_bits, "bits for the other active qubits");
  ramsey->add_option("--omega-sq", omega_spec, "Omega^2 grid a:b:step [MHz^2]");
  ramsey->add_option("--theta", theta_spec, "analysis-angle grid a:b:step [rad]");

  int traj_n = 2;
  double traj_omega = 2.0;
  auto* trajectory = app.add_subcommand("trajectory", "conditional resonator photon trajectories");
  trajectory->add_option("--n", traj_n, "operating point by active-qubit count");
  trajectory->add_option("--omega", traj_omega, "drive amplitude Omega/2pi [MHz]");

  int gate_n = 2;
  double gate_omega_sq = 0;
  bool full_qpt = false;
  std::string gate_mode = "lindblad";
  auto* gate = app.add_subcommand("gate", "calibrate a controlled-phase gate and report fidelity");
  gate->add_option("--n", gate_n, "1|2|3|4: operating point by active-qubit count");
  gate->add_option("--omega-sq", gate_omega_sq, "skip amplitude calibration, use this Omega^2");
  gate->add_option("--mode", gate_mode, "unitary|lindblad");
  gate->add_flag("--full-qpt", full_qpt, "full QPT for n=4 instead of the fast path");

  int qpt_n = 2, qpt_shots = 0;
  bool psd_project = false;
  std::string qpt_mode = "lindblad", qpt_confusion = "identity";
  auto* qpt_cmd = app.add_subcommand("qpt", "quantum process tomography of the calibrated gate");
  qpt_cmd->add_option("--n", qpt_n, "operating point by active-qubit count");
  qpt_cmd->add_option("--mode", qpt_mode, "unitary|lindblad");
  qpt_cmd->add_option("--shots", qpt_shots, "sampled readout shots per setting (0 = exact)");
  qpt_cmd->add_option("--confusion", qpt_confusion, "identity|representative");
  qpt_cmd->add_flag("--psd-project", psd_project, "project sampled states to the PSD cone");

  std::string m_spec = "1,3,6,10,15";
  int k_sequences = 20;
  bool noiseless = false;
  auto* rb = app.add_subcommand("rb", "interleaved randomized benchmarking of the CZ gate");
  rb->add_option("--m", m_spec, "comma-separated sequence lengths");
  rb->add_option("--k", k_sequences, "sequences per length");
  rb->add_flag("--noiseless", noiseless, "ideal CZ, no decoherence (self-test)");

  int sweep_n = 2;
  std::string sweep_param = "device.g01_scale", sweep_range = "0.9:1.1:0.05";
  bool recalibrate = true;
  auto* sweep = app.add_subcommand("sweep", "parameter sweep with per-point recalibration");
  sweep->add_option("--n", sweep_n, "operating point by active-qubit count");
  sweep->add_option("--param", sweep_param,
                    "device.g01_scale | device.g01_mhz | gate.drive_delta_mhz | "
                    "gate.drive_omega_sq_mhz2");
  sweep->add_option("--range", sweep_range, "grid a:b:step");
  sweep->add_flag("--recalibrate,!--no-recalibrate", recalibrate,
                  "re-run amplitude calibration per point");

  double theta_d = -0.1, sigma_mhz = 0.05, gamma_per_us = 1.0, duration_ns = 250.0,
         omega_mhz = 2.6458;
  int mc_samples = 10000;
  auto* nv = app.add_subcommand("noise-variance", "dynamical-phase variance under drive noise");
  nv->add_option("--theta-d", theta_d, "dynamical phase [rad]");
  nv->add_option("--sigma", sigma_mhz, "drive-noise std dev [MHz]");
  nv->add_option("--gamma", gamma_per_us, "noise correlation rate [1/us]");
  nv->add_option("--duration", duration_ns, "gate duration [ns]");
  nv->add_option("--omega", omega_mhz, "drive amplitude [MHz]");
  nv->add_option("--mc", mc_samples, "Monte-Carlo realizations");

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    int rc = 0;
    if (ramsey->parsed()) {
      run.init("ramsey");
      rc = cmd_ramsey(run, n, test_qubit, control_bits, omega_spec, theta_spec);
    } else if (trajectory->parsed()) {
      run.init("trajectory");
      rc = cmd_trajectory(run, traj_n, traj_omega);
    } else if (gate->parsed()) {
      run.init("gate");
      rc = cmd_gate(run, gate_n, gate_omega_sq, full_qpt, gate_mode);
    } else if (qpt_cmd->parsed()) {
      run.init("qpt");
      rc = cmd_qpt(run, qpt_n, qpt_mode, qpt_shots, qpt_confusion, psd_project);
    } else if (rb->parsed()) {
      run.init("rb");
      rc = cmd_rb(run, m_spec, k_sequences, noiseless);
    } else if (sweep->parsed()) {
      run.init("sweep");
      rc = cmd_sweep(run, sweep_n, sweep_param, sweep_range, recalibrate);
    } else if (nv->parsed()) {
      run.init("noise-variance");
      rc = cmd_noise_variance(run, theta_d, sigma_mhz, gamma_per_us, duration_ns, omega_mhz,
                              mc_samples);
    }
    if (rc != 0) return rc;
    if (run.report.enabled && !run.report.passed) {
      std::fprintf(stderr, "check FAILED\n");
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
