#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geomsim/dynamics.hpp"

namespace geomsim {

class CalibrationError : public ModelError {
 public:
  using ModelError::ModelError;
};

struct GateConfig {
  enum class Compensation { PhysicalZ, VirtualZ };

  std::vector<std::string> active_labels;
  std::vector<double> detuning01_mhz;  // 0-1 transition above omega_r
  // per-qubit anharmonicity at the gate point; empty = take device values
  std::vector<double> anharmonicity_override_mhz;
  double drive_omega_mhz = 0;
  double drive_delta_mhz = 4.0;
  double duration_ns = 0;  // 0 resolves to 1000/delta
  Compensation compensation = Compensation::VirtualZ;
  std::vector<double> compensation_z_rad;  // empty = no compensation yet
  int n_fock = 8;

  void validate(const DeviceSpec& device) const;
  std::vector<int> qubit_indices(const DeviceSpec& device) const;
  double resolved_duration_ns() const {
    return duration_ns > 0 ? duration_ns : 1000.0 / std::abs(drive_delta_mhz);
  }
};

struct ResolvedPoint {
  GateOperatingPoint point;
  double omega_r_mhz = 0;  // all-ground conditional resonator frequency
  double omega_d_mhz = 0;
  std::vector<double> lambda_mhz;
};

// Gate frequencies are specified relative to omega_r, which itself depends on
// the dispersive shifts at those frequencies; solved by fixed-point iteration.
ResolvedPoint resolve_operating_point(const DeviceSpec& device, const GateConfig& config);

// Frequency-step + drive + compensation segment schedule for the
// n-qubit controlled-phase gate.
PulseSchedule build_cphase_schedule(const DeviceSpec& device, const GateConfig& config,
                                    std::vector<std::string>* warnings = nullptr);

struct PhaseTable {
  int n_qubits = 0;
  // bit i of the index = state of active qubit i
  std::vector<double> phase_rad;   // wrapped to (-pi, pi]
  std::vector<double> leakage;
  std::vector<double> coeffs_rad;  // subset (Moebius) decomposition, same indexing
  double conditional_phase_rad = 0;  // top-order coefficient, wrapped
  double max_leakage = 0;

  // zeta transform of the coefficients; equals phase_rad exactly
  std::vector<double> reconstruct() const;
};

// Wraps the phases, performs the subset decomposition and the leakage
// threshold check. `extract_conditional_phases` feeds simulated phases in;
// callers may inject phases of a known unitary directly.
PhaseTable make_phase_table(int n_qubits, std::vector<double> phase_rad,
                            std::vector<double> leakage);

PhaseTable extract_conditional_phases(const PulseSchedule& schedule, const DeviceSpec& device);

// Bisection on Omega^2 until the conditional phase magnitude hits the target.
double calibrate_amplitude(const DeviceSpec& device, GateConfig config,
                           double target_rad = 3.14159265358979323846,
                           std::vector<std::string>* warnings = nullptr);

// Same solver against an arbitrary conditional-phase model (used for
// closed-form cross-checks).
double calibrate_amplitude_fn(const std::function<double(double)>& phase_of_omega_sq,
                              double delta_mhz, double target_rad);

// z_q = -(linear coefficient) per active qubit
std::vector<double> calibrate_compensation(const PhaseTable& table);

struct RamseySurface {
  std::vector<double> omega_sq_mhz2;
  std::vector<double> theta_rad;
  Eigen::MatrixXd p1;  // row: omega_sq index, col: theta index
};

// Controls prepared in `control_state` (bits for the non-test active qubits,
// in active order), test qubit through an X_{pi/2}, geometric drive segment,
// compensation, then the theta_{pi/2} analysis pulse.
RamseySurface ramsey_experiment(const DeviceSpec& device, const GateConfig& config,
                                int test_qubit, const std::vector<int>& control_state,
                                const std::vector<double>& omega_sq_grid,
                                const std::vector<double>& theta_grid,
                                EvolveMode mode = EvolveMode::Unitary,
                                const IntegratorOptions& opts = {});

struct RamseyFit {
  double beta_rad = 0;
  double contrast = 0;
  double offset = 0;     // fitted A
  double amplitude = 0;  // fitted C
};

// Least squares for A + C cos(theta + beta). With `previous_beta`, the result
// is unwrapped onto the branch nearest the predecessor.
RamseyFit fit_ramsey_phase(const std::vector<double>& theta_rad, const std::vector<double>& p1,
                           const double* previous_beta = nullptr);

// Row-by-row fits with continuity unwrapping down the Omega^2 family.
std::vector<RamseyFit> fit_ramsey_family(const RamseySurface& surface);

double wrap_to_pi(double angle_rad);

}  // namespace geomsim
