#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "geomsim/core.hpp"

namespace geomsim {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// ordinary frequency [MHz] -> angular frequency [rad/ns]
inline double mhz_to_angular(double f_mhz) { return kTwoPi * f_mhz * 1e-3; }
inline double angular_to_mhz(double w) { return w / kTwoPi * 1e3; }

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QubitParams {
  std::string label;
  double omega01_sweet_mhz = 0;   // sweetpoint |0>-|1> transition
  double anharmonicity_mhz = 250; // omega01/2pi - omega12/2pi
  double g01_mhz = 0;             // |0>-|1> coupling to the bus
  double t1_us = 0;
  double t_phi_us = 0;            // Markovian pure dephasing (simulation)
  double t2_star_us = 0;          // recorded Gaussian dephasing, informational
  double crosstalk_k = 0.6;       // Omega' = k * Omega on the 1-2 transition

  double g12_mhz() const { return std::sqrt(2.0) * g01_mhz; }
  void validate() const;
};

struct DeviceSpec {
  std::vector<QubitParams> qubits;
  double omega_rb_mhz = 0;        // bus bare frequency
  double resonator_t1_us = 0;

  void validate() const;
  int index_of(const std::string& label) const;
};

struct GateOperatingPoint {
  std::vector<int> active_qubits;           // device qubit indices
  std::vector<double> omega01_gate_mhz;     // per active qubit
  std::vector<double> anharmonicity_mhz;    // per active qubit, at the gate frequency
  double drive_omega_mhz = 0;               // Omega/2pi
  double drive_delta_mhz = 4;               // delta/2pi above the all-|0> resonator frequency
  double duration_ns = 0;                   // defaults to 1000/delta
  int n_fock = 8;

  void validate(const DeviceSpec& device) const;
  HilbertLayout layout() const {
    return HilbertLayout::qubits_and_resonator(static_cast<int>(active_qubits.size()), n_fock);
  }
};

// lambda = g01^2 / (omega01 - omega_rb), dispersive-regime guard |Delta| > 3 g01
double dispersive_shift(double g01_mhz, double omega01_mhz, double omega_rb_mhz);

// omega_rb - sum(lambda_q) + 2 * sum over excited qubits of lambda_q
double conditional_resonator_frequency(const DeviceSpec& device, const GateOperatingPoint& point,
                                       const std::vector<int>& qubit_states);

// drive frequency: delta above the all-|0> conditional resonator frequency
double drive_frequency(const DeviceSpec& device, const GateOperatingPoint& point);

// Time-independent Hamiltonian in the frame co-rotating at omega_d for all
// subsystems, in angular units [rad/ns]. Includes qubit detunings, bus
// detuning, exchange couplings g01/g12, the resonator drive, and the
// crosstalk drive k*Omega on each 1-2 transition.
Operator build_drive_frame_hamiltonian(const DeviceSpec& device, const GateOperatingPoint& point);

// Variant used by the schedule executor: explicit qubit frequencies, drive
// amplitude and frame frequency.
Operator build_drive_frame_hamiltonian(const DeviceSpec& device, const GateOperatingPoint& point,
                                       const std::vector<double>& omega01_mhz,
                                       double drive_omega_mhz, double omega_d_mhz);

struct DressedPair {
  double e_plus = 0;    // MHz, relative to the |1,0> zero minus (omega_r + 2 lambda)
  double e_minus = 0;
  double theta_mix = 0; // rad, tan(theta) = 2 g12 / Delta'
  double delta_plus = 0;
  double delta_minus = 0;
};

DressedPair dressed_pair(double delta_prime_mhz, double g12_mhz, double delta_mhz = 0,
                         double lambda_mhz = 0);

struct DressedTriple {
  std::array<double, 3> e{};       // eigenenergies, ascending, relative to |11,1>
  Eigen::Matrix3d weights;         // columns: normalized eigenvectors in {|21,0>,|12,0>,|11,1>}
  std::array<double, 3> delta{};   // drive detunings
  double delta_prime_1 = 0, delta_prime_2 = 0, g1_mhz = 0, g2_mhz = 0;
};

DressedTriple dressed_triple(double delta_prime_1_mhz, double delta_prime_2_mhz, double g1_12_mhz,
                             double g2_12_mhz, double delta_mhz = 0, double lambda_sum_mhz = 0);

// Stark shift of |1,0> from off-resonant coupling to the dressed pair.
double stark_shift_single(double omega_drive_mhz, double k, const DressedPair& pair);
// Same without the perturbative-validity guard (used by the root scan).
double stark_shift_single_unguarded(double omega_drive_mhz, double k, const DressedPair& pair);

// Stark shift of |11,0> from the dressed triple.
double stark_shift_double(double omega_drive_mhz, double k1, double k2,
                          const DressedTriple& triple);

struct StarkScanPoint {
  double delta_prime_mhz;
  double epsilon_mhz;
};

class NoRootError : public ModelError {
 public:
  NoRootError(std::string msg, std::vector<StarkScanPoint> profile)
      : ModelError(std::move(msg)), scanned_profile(std::move(profile)) {}
  std::vector<StarkScanPoint> scanned_profile;
};

// Root of epsilon(Delta') = 0 in the window Delta'/2pi in [-20, 80] MHz;
// smallest-|Delta'| root when several exist.
double solve_zero_stark(const DeviceSpec& device, const GateOperatingPoint& point, int qubit_index,
                        double k);

// Stark-shift profile evaluated for a single qubit as a function of Delta',
// with the dispersive shift solved self-consistently per point.
double stark_shift_at_delta_prime(const DeviceSpec& device, const GateOperatingPoint& point,
                                  int qubit_index, double k, double delta_prime_mhz);

// theta_d = -2 pi * eps[MHz] * T[ns] * 1e-3
double dynamical_phase(double epsilon_mhz, double duration_ns);

// Eq.-S8-style phase variance under exponentially correlated drive noise.
double dynamical_phase_variance(double theta_d_rad, double sigma_mhz, double gamma_per_us,
                                double duration_ns, double omega_drive_mhz);

}  // namespace geomsim
