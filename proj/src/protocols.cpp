#include "geomsim/protocols.hpp"

#include <algorithm>
#include <cmath>

namespace geomsim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double wrap_to_pi(double angle_rad) {
  double w = std::remainder(angle_rad, kTwoPi);
  if (w <= -kPi) w += kTwoPi;  // remainder lands in [-pi, pi]; map -pi -> pi
  return w;
}

void GateConfig::validate(const DeviceSpec& device) const {
  device.validate();
  if (active_labels.empty()) throw ModelError("gate config needs active qubits");
  if (detuning01_mhz.size() != active_labels.size())
    throw ModelError("gate config: one 0-1 detuning per active qubit required");
  if (!anharmonicity_override_mhz.empty() &&
      anharmonicity_override_mhz.size() != active_labels.size())
    throw ModelError("gate config: anharmonicity override length mismatch");
  if (!compensation_z_rad.empty() && compensation_z_rad.size() != active_labels.size())
    throw ModelError("gate config: compensation phase list length mismatch");
  if (drive_delta_mhz == 0) throw ModelError("gate config: drive delta must be nonzero");
  if (n_fock < 2) throw ModelError("gate config: n_fock must be >= 2");
  qubit_indices(device);
  for (size_t i = 0; i < detuning01_mhz.size(); ++i)
    for (size_t j = i + 1; j < detuning01_mhz.size(); ++j)
      if (std::abs(detuning01_mhz[i] - detuning01_mhz[j]) < 6.0)
        throw ModelError("gate config: 0-1 detunings of " + active_labels[i] + " and " +
                         active_labels[j] + " collide (separation < 6 MHz)");
}

std::vector<int> GateConfig::qubit_indices(const DeviceSpec& device) const {
  std::vector<int> idx;
  idx.reserve(active_labels.size());
  for (const auto& label : active_labels) idx.push_back(device.index_of(label));
  return idx;
}

ResolvedPoint resolve_operating_point(const DeviceSpec& device, const GateConfig& config) {
  config.validate(device);
  const auto indices = config.qubit_indices(device);
  const int n = static_cast<int>(indices.size());

  ResolvedPoint out;
  out.lambda_mhz.assign(n, 0.0);
  double omega_r = device.omega_rb_mhz;
  for (int iter = 0; iter < 200; ++iter) {
    double lambda_sum = 0;
    for (int i = 0; i < n; ++i) {
      const double omega01 = omega_r + config.detuning01_mhz[i];
      out.lambda_mhz[i] =
          dispersive_shift(device.qubits[indices[i]].g01_mhz, omega01, device.omega_rb_mhz);
      lambda_sum += out.lambda_mhz[i];
    }
    const double next = device.omega_rb_mhz - lambda_sum;
    if (std::abs(next - omega_r) < 1e-12) {
      omega_r = next;
      break;
    }
    omega_r = next;
  }
  out.omega_r_mhz = omega_r;
  out.omega_d_mhz = omega_r + config.drive_delta_mhz;

  auto& pt = out.point;
  pt.active_qubits = indices;
  for (int i = 0; i < n; ++i) pt.omega01_gate_mhz.push_back(omega_r + config.detuning01_mhz[i]);
  for (int i = 0; i < n; ++i)
    pt.anharmonicity_mhz.push_back(config.anharmonicity_override_mhz.empty()
                                       ? device.qubits[indices[i]].anharmonicity_mhz
                                       : config.anharmonicity_override_mhz[i]);
  pt.drive_omega_mhz = config.drive_omega_mhz;
  pt.drive_delta_mhz = config.drive_delta_mhz;
  pt.duration_ns = config.resolved_duration_ns();
  pt.n_fock = config.n_fock;
  pt.validate(device);
  return out;
}

PulseSchedule build_cphase_schedule(const DeviceSpec& device, const GateConfig& config,
                                    std::vector<std::string>* warnings) {
  const ResolvedPoint rp = resolve_operating_point(device, config);
  const auto indices = rp.point.active_qubits;
  const int n = static_cast<int>(indices.size());

  for (int i = 0; i < n; ++i) {
    const double omega12 = rp.point.omega01_gate_mhz[i] - rp.point.anharmonicity_mhz[i];
    const double d12 = omega12 - rp.omega_r_mhz;
    if (std::abs(d12) > 60.0 && warnings)
      warnings->push_back("freeze condition: 1-2 transition of " + config.active_labels[i] +
                          " sits " + std::to_string(d12) +
                          " MHz from omega_r (outside +-60 MHz)");
  }

  PulseSchedule sched;
  sched.active_qubits = indices;
  sched.anharmonicity_mhz = rp.point.anharmonicity_mhz;
  for (int i = 0; i < n; ++i)
    sched.idle_omega01_mhz.push_back(device.qubits[indices[i]].omega01_sweet_mhz);
  sched.omega_d_mhz = rp.omega_d_mhz;
  sched.drive_delta_mhz = config.drive_delta_mhz;
  sched.n_fock = config.n_fock;

  ScheduleSegment step_in;
  step_in.omega01_mhz = rp.point.omega01_gate_mhz;

  ScheduleSegment drive;
  drive.omega01_mhz = rp.point.omega01_gate_mhz;
  drive.duration_ns = rp.point.duration_ns;
  drive.drive_omega_mhz = config.drive_omega_mhz;

  ScheduleSegment step_out;
  step_out.omega01_mhz = sched.idle_omega01_mhz;

  sched.segments.push_back(step_in);
  sched.segments.push_back(drive);
  if (!config.compensation_z_rad.empty()) {
    // physical-Z: a dedicated instantaneous correction right after the drive;
    // virtual-Z: folded into the frequency-step-back segment. Both advance
    // the same frame phases, so the propagators agree by construction.
    ScheduleSegment comp;
    auto& target =
        config.compensation == GateConfig::Compensation::PhysicalZ ? comp : step_out;
    for (int i = 0; i < n; ++i)
      if (config.compensation_z_rad[i] != 0.0)
        target.virtual_z.push_back({i, config.compensation_z_rad[i]});
    if (config.compensation == GateConfig::Compensation::PhysicalZ)
      sched.segments.push_back(comp);
  }
  sched.segments.push_back(step_out);
  return sched;
}

std::vector<double> PhaseTable::reconstruct() const {
  std::vector<double> phi = coeffs_rad;
  for (int b = 0; b < n_qubits; ++b)
    for (size_t m = 0; m < phi.size(); ++m)
      if (m & (1u << b)) phi[m] += phi[m ^ (1u << b)];
  return phi;
}

PhaseTable make_phase_table(int n_qubits, std::vector<double> phase_rad,
                            std::vector<double> leakage) {
  const int n_states = 1 << n_qubits;
  if (static_cast<int>(phase_rad.size()) != n_states ||
      static_cast<int>(leakage.size()) != n_states)
    throw ModelError("phase table: need one entry per computational state");

  PhaseTable table;
  table.n_qubits = n_qubits;
  table.phase_rad.resize(n_states);
  table.leakage = std::move(leakage);
  for (int m = 0; m < n_states; ++m) {
    table.phase_rad[m] = wrap_to_pi(phase_rad[m]);
    table.max_leakage = std::max(table.max_leakage, table.leakage[m]);
  }
  if (table.max_leakage > 0.18)
    throw ModelError("conditional-phase extraction: leakage " +
                     std::to_string(table.max_leakage) +
                     " exceeds 0.18 — adiabatic separation broke down");

  // Moebius transform: c_B = sum_{A subset B} (-1)^{|B|-|A|} phi_A
  table.coeffs_rad = table.phase_rad;
  for (int b = 0; b < n_qubits; ++b)
    for (int m = 0; m < n_states; ++m)
      if (m & (1 << b)) table.coeffs_rad[m] -= table.coeffs_rad[m ^ (1 << b)];
  table.conditional_phase_rad = wrap_to_pi(table.coeffs_rad[n_states - 1]);
  return table;
}

PhaseTable extract_conditional_phases(const PulseSchedule& schedule, const DeviceSpec& device) {
  const int n = static_cast<int>(schedule.active_qubits.size());
  const auto layout = schedule.layout();
  const int n_states = 1 << n;

  std::vector<double> phases(n_states), leakage(n_states);
  for (int mask = 0; mask < n_states; ++mask) {
    std::vector<int> levels(n + 1, 0);
    for (int q = 0; q < n; ++q) levels[q] = (mask >> q) & 1;
    auto psi0 = StateVector::basis(layout, levels);
    auto res = run_schedule(schedule, device, psi0, EvolveMode::Unitary);
    const auto& psi = std::get<StateVector>(res.final_state);
    const Complex amp = psi.amplitudes[layout.basis_index(levels)];
    phases[mask] = std::arg(amp);
    leakage[mask] = std::max(0.0, 1.0 - std::norm(amp));
  }
  return make_phase_table(n, std::move(phases), std::move(leakage));
}

namespace {

// The extracted conditional phase is wrapped to (-pi, pi], and across the
// Omega^2 bracket the true phase can pass several times around the circle.
// March upward in steps small enough that the phase moves by well under pi
// per step, unwrap by continuity, and bisect inside the crossing interval.
double bisect_on_omega_sq(const std::function<double(double)>& phase_of_omega_sq,
                          double seed_omega_sq, double target_rad) {
  const double lo = 0.25 * seed_omega_sq, hi = 4.0 * seed_omega_sq;
  // expected slope |dc/dOmega^2| ~ target/seed; aim at ~0.8 rad per step
  const double step = 0.8 * seed_omega_sq / target_rad;
  const int n_steps = std::max(4, static_cast<int>(std::ceil((hi - lo) / step)));

  double x_prev = lo;
  double c_prev = wrap_to_pi(phase_of_omega_sq(lo));
  if (std::abs(c_prev) >= target_rad)
    throw CalibrationError("amplitude calibration: bracket floor already past the target");

  double x_cross = -1, c_lo = 0, x_lo = 0;
  double growth_floor = std::abs(c_prev);
  for (int i = 1; i <= n_steps; ++i) {
    const double x = lo + (hi - lo) * i / n_steps;
    const double c = c_prev + wrap_to_pi(phase_of_omega_sq(x) - c_prev);
    if (std::abs(c) + 0.1 < growth_floor)
      throw CalibrationError(
          "amplitude calibration: conditional phase is not monotone over the bracket");
    growth_floor = std::max(growth_floor, std::abs(c));
    if (std::abs(c) >= target_rad) {
      x_cross = x;
      x_lo = x_prev;
      c_lo = c_prev;
      break;
    }
    x_prev = x;
    c_prev = c;
  }
  if (x_cross < 0)
    throw CalibrationError(
        "amplitude calibration: conditional phase never reaches the target in the bracket");

  // bisect on |c| - target with local continuity unwrapping
  double a = x_lo, b = x_cross;
  double c_ref = c_lo;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    const double cm = c_ref + wrap_to_pi(phase_of_omega_sq(mid) - c_ref);
    const double miss = std::abs(cm) - target_rad;
    if (std::abs(miss) < 1e-3 && b - a < 1e-7 * seed_omega_sq) return mid;
    if (miss < 0) {
      a = mid;
      c_ref = cm;
    } else {
      b = mid;
    }
  }
  throw CalibrationError("amplitude calibration: bisection failed to converge");
}

}  // namespace

double calibrate_amplitude_fn(const std::function<double(double)>& phase_of_omega_sq,
                              double delta_mhz, double target_rad) {
  const double seed = target_rad * delta_mhz * delta_mhz / kTwoPi;
  const double osq = bisect_on_omega_sq(phase_of_omega_sq, seed, target_rad);
  return std::sqrt(osq);
}

double calibrate_amplitude(const DeviceSpec& device, GateConfig config, double target_rad,
                           std::vector<std::string>* warnings) {
  auto phase = [&](double osq) {
    GateConfig trial = config;
    trial.drive_omega_mhz = std::sqrt(osq);
    trial.compensation_z_rad.clear();  // compensation never moves the top coefficient
    auto sched = build_cphase_schedule(device, trial, warnings);
    return extract_conditional_phases(sched, device).conditional_phase_rad;
  };
  return calibrate_amplitude_fn(phase, config.drive_delta_mhz, target_rad);
}

std::vector<double> calibrate_compensation(const PhaseTable& table) {
  std::vector<double> z(table.n_qubits, 0.0);
  for (int q = 0; q < table.n_qubits; ++q)
    z[q] = -wrap_to_pi(table.coeffs_rad[std::size_t{1} << q]);
  return z;
}

RamseySurface ramsey_experiment(const DeviceSpec& device, const GateConfig& config,
                                int test_qubit, const std::vector<int>& control_state,
                                const std::vector<double>& omega_sq_grid,
                                const std::vector<double>& theta_grid, EvolveMode mode,
                                const IntegratorOptions& opts) {
  const int n = static_cast<int>(config.active_labels.size());
  if (test_qubit < 0 || test_qubit >= n)
    throw ModelError("ramsey: test qubit index out of range");
  if (static_cast<int>(control_state.size()) != n - 1)
    throw ModelError("ramsey: control state must cover the other active qubits");
  if (omega_sq_grid.empty() || theta_grid.empty()) throw ModelError("ramsey: empty grid");

  RamseySurface surface;
  surface.omega_sq_mhz2 = omega_sq_grid;
  surface.theta_rad = theta_grid;
  surface.p1.resize(static_cast<Eigen::Index>(omega_sq_grid.size()),
                    static_cast<Eigen::Index>(theta_grid.size()));

  std::vector<int> levels(n + 1, 0);
  {
    int c = 0;
    for (int q = 0; q < n; ++q)
      if (q != test_qubit) levels[q] = control_state[c++];
  }

  // Static reference: even with the drive off, exchange coupling dresses the
  // test qubit and shifts its phase at the gate detuning. The experiment's
  // Ramsey phases are referenced to this zero-drive baseline, so subtract it.
  double ref_offset = 0;
  {
    GateConfig quiet = config;
    quiet.drive_omega_mhz = 0.0;
    quiet.compensation_z_rad.clear();
    auto sched = build_cphase_schedule(device, quiet);
    const auto layout = sched.layout();
    std::vector<int> lev0 = levels, lev1 = levels;
    lev1[test_qubit] = 1;
    Vector v = Vector::Zero(layout.dim());
    v[layout.basis_index(lev0)] = 1.0 / std::sqrt(2.0);
    v[layout.basis_index(lev1)] = 1.0 / std::sqrt(2.0);
    auto res = run_schedule(sched, device, StateVector(layout, v), EvolveMode::Unitary);
    const auto& psi = std::get<StateVector>(res.final_state);
    ref_offset = std::arg(psi.amplitudes[layout.basis_index(lev1)] *
                          std::conj(psi.amplitudes[layout.basis_index(lev0)]));
  }

  for (size_t wi = 0; wi < omega_sq_grid.size(); ++wi) {
    GateConfig point = config;
    point.drive_omega_mhz = std::sqrt(std::max(0.0, omega_sq_grid[wi]));
    auto sched = build_cphase_schedule(device, point);
    // X_{pi/2} preparation on the test qubit at the start of the gate segment
    sched.segments.front().rotations.push_back({test_qubit, 0.0, kPi / 2});
    if (ref_offset != 0.0) sched.segments.back().virtual_z.push_back({test_qubit, -ref_offset});

    const auto layout = sched.layout();
    auto psi0 = StateVector::basis(layout, levels);

    ScheduleState final_state;
    if (mode == EvolveMode::Unitary) {
      final_state = run_schedule(sched, device, psi0, mode, opts).final_state;
    } else {
      final_state =
          run_schedule(sched, device, DensityOperator::from_pure(psi0), mode, opts).final_state;
    }

    for (size_t ti = 0; ti < theta_grid.size(); ++ti) {
      double p1 = 0;
      if (mode == EvolveMode::Unitary) {
        StateVector psi = std::get<StateVector>(final_state);
        apply_qubit_rotation(psi, test_qubit, theta_grid[ti], kPi / 2);
        Trajectory probe;
        record_observables(probe, 0.0, psi);
        p1 = probe.pops[0][test_qubit][1];
      } else {
        DensityOperator rho = std::get<DensityOperator>(final_state);
        apply_qubit_rotation(rho, test_qubit, theta_grid[ti], kPi / 2);
        Trajectory probe;
        record_observables(probe, 0.0, rho);
        p1 = probe.pops[0][test_qubit][1];
      }
      surface.p1(static_cast<Eigen::Index>(wi), static_cast<Eigen::Index>(ti)) = p1;
    }
  }
  return surface;
}

RamseyFit fit_ramsey_phase(const std::vector<double>& theta, const std::vector<double>& p1,
                           const double* previous_beta) {
  if (theta.size() != p1.size()) throw ModelError("ramsey fit: grid/data length mismatch");
  if (theta.size() < 4) throw ModelError("ramsey fit: need at least 4 samples");
  const double span = *std::max_element(theta.begin(), theta.end()) -
                      *std::min_element(theta.begin(), theta.end());
  if (span < kPi) throw ModelError("ramsey fit: theta samples must span at least pi");

  // linear least squares on {1, cos(theta), sin(theta)}:
  // p1 = A + a cos(theta) + b sin(theta), with a = C cos(beta), b = -C sin(beta)
  Eigen::MatrixXd m(theta.size(), 3);
  Eigen::VectorXd y(theta.size());
  for (size_t i = 0; i < theta.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = 1.0;
    m(static_cast<Eigen::Index>(i), 1) = std::cos(theta[i]);
    m(static_cast<Eigen::Index>(i), 2) = std::sin(theta[i]);
    y[static_cast<Eigen::Index>(i)] = p1[i];
  }
  Eigen::Vector3d coef = m.colPivHouseholderQr().solve(y);

  RamseyFit fit;
  fit.offset = coef[0];
  fit.amplitude = std::hypot(coef[1], coef[2]);
  fit.beta_rad = std::atan2(-coef[2], coef[1]);
  fit.contrast = fit.offset > 0 ? fit.amplitude / fit.offset : 0.0;
  if (fit.contrast < 0.05)
    throw ModelError("ramsey fit: contrast below 0.05, phase estimate unreliable");
  if (previous_beta) {
    const double k = std::round((*previous_beta - fit.beta_rad) / kTwoPi);
    fit.beta_rad += k * kTwoPi;
    // nearest branch, allowing a half-turn step between neighbours
    while (fit.beta_rad - *previous_beta > kPi) fit.beta_rad -= kTwoPi;
    while (fit.beta_rad - *previous_beta < -kPi) fit.beta_rad += kTwoPi;
  }
  return fit;
}

std::vector<RamseyFit> fit_ramsey_family(const RamseySurface& surface) {
  std::vector<RamseyFit> fits;
  std::vector<double> row(surface.theta_rad.size());
  for (Eigen::Index wi = 0; wi < surface.p1.rows(); ++wi) {
    for (size_t ti = 0; ti < row.size(); ++ti)
      row[ti] = surface.p1(wi, static_cast<Eigen::Index>(ti));
    const double* prev = fits.empty() ? nullptr : &fits.back().beta_rad;
    fits.push_back(fit_ramsey_phase(surface.theta_rad, row, prev));
  }
  return fits;
}

}  // namespace geomsim
