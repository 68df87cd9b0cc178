#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "geomsim/protocols.hpp"

namespace geomsim {

// --- measurement -----------------------------------------------------------

struct MeasurementModel {
  enum class Mode { Exact, Sampled };

  Mode mode = Mode::Exact;
  int shots = 3000;
  Eigen::Matrix3d confusion = Eigen::Matrix3d::Identity();  // row: true level
  bool psd_project = false;

  static MeasurementModel exact() { return {}; }
  static MeasurementModel sampled(int shots_, const Eigen::Matrix3d& confusion_);
  // representative assignment fidelities 0.96 / 0.85 / 0.74 for levels 0/1/2,
  // misassignment split evenly over the other two levels
  static Eigen::Matrix3d representative_confusion();

  void validate() const;
};

struct TomographyResult {
  DensityOperator rho;  // 2^n computational density matrix, unit trace
  double leakage = 0;   // weight outside the computational subspace
};

// State tomography of the computational subspace. Exact mode projects and
// renormalizes directly; sampled mode simulates per-setting shot counts pushed
// through the per-qubit confusion matrix, inverts the confusion, and
// reconstructs by linear inversion of the Pauli expectations.
TomographyResult qst(const DensityOperator& state, int n_qubits,
                     const MeasurementModel& model = {}, std::mt19937_64* rng = nullptr);

// --- process tomography ----------------------------------------------------

struct ChiMatrix {
  int n_qubits = 0;
  Matrix chi;  // 4^n x 4^n in the ordered Pauli basis {I,X,Y,Z}^(x)n
  double tp_residual = 0;  // || Tr_out(Choi) - I ||_F
  double cp_min_eig = 0;   // smallest eigenvalue of chi (Choi positivity)

  std::vector<std::string> pauli_labels() const;
};

// m-th n-qubit Pauli string; base-4 digits of m, qubit 0 most significant.
Matrix pauli_matrix(int n_qubits, int m);

// Channel under test: computational pure input (2^n), arbitrary qst-compatible
// output state.
using QuantumChannel = std::function<DensityOperator(const StateVector&)>;

// Process tomography from the product-input basis built from the single-qubit
// quartet {|0>, (|0>-i|1>)/sqrt2, (|0>+|1>)/sqrt2, |1>}: output QST per input,
// linear inversion to the superoperator, then chi in the Pauli basis.
ChiMatrix qpt(const QuantumChannel& channel, int n_qubits, const MeasurementModel& model = {},
              std::mt19937_64* rng = nullptr);

// chi_id = v v^dag with v the Pauli-decomposition coefficients of U.
ChiMatrix ideal_chi(const Matrix& unitary);

double process_fidelity(const ChiMatrix& chi_exp, const ChiMatrix& chi_id);

// Wraps a pulse schedule as a channel: embeds the computational input into the
// qutrit (x) resonator space and runs the schedule in the given mode.
QuantumChannel schedule_channel(const PulseSchedule& schedule, const DeviceSpec& device,
                                EvolveMode mode, const IntegratorOptions& opts = {});

// 2^n x 2^n matrix of computational-subspace amplitudes of the schedule
// propagator (columns: basis inputs). Not exactly unitary when leakage exists.
Matrix schedule_computational_unitary(const PulseSchedule& schedule, const DeviceSpec& device,
                                      const IntegratorOptions& opts = {});

// --- Clifford groups -------------------------------------------------------

enum class Pulse { I, X, Y, Xp, Xm, Yp, Ym };  // p/m: +-pi/2 rotations

Eigen::Matrix2cd pulse_matrix(Pulse p);

struct Clifford1 {
  Eigen::Matrix2cd u;
  std::vector<Pulse> pulses;  // application order
};

// single-qubit layer applied within a two-qubit Clifford
struct TwoQubitOp {
  bool cz = false;
  std::array<std::vector<Pulse>, 2> pulses;  // per qubit, application order
};

struct Clifford2 {
  Eigen::Matrix4cd u;
  std::vector<TwoQubitOp> ops;  // application order
  int n_single_pulses = 0;
  int n_cz = 0;
};

const std::vector<Clifford1>& clifford1_table();  // 24 elements
const std::vector<Clifford2>& clifford2_table();  // 11520 elements

// Index of the table element proportional to u; throws NumericsError if u is
// not in the group.
int clifford1_index_of(const Eigen::Matrix2cd& u);
int clifford2_index_of(const Eigen::Matrix4cd& u);

struct CliffordSample {
  int index = 0;
  Matrix u;  // 2^n
  int n_single_pulses = 0;
  int n_cz = 0;
};

CliffordSample clifford_sample(int n_qubits, std::mt19937_64& rng);

// --- randomized benchmarking -----------------------------------------------

struct RBConfig {
  std::vector<int> m_list = {1, 3, 6, 10, 15};
  int k_sequences = 20;
  std::uint64_t seed = 1;
  bool interleave_cz = false;
  double single_pulse_ns = 20.0;  // nominal single-qubit gate time
  int shots = 0;                  // 0: exact survival readout
};

// Error model for the two-qubit RB simulation. Single-qubit layers are ideal
// instantaneous unitaries followed by T1/T_phi decay for the layer duration.
struct RBNoise {
  std::array<double, 2> t1_us = {0, 0};     // 0 disables the channel
  std::array<double, 2> t_phi_us = {0, 0};
  Matrix per_clifford_error;  // optional 16x16 superoperator; empty = none

  static RBNoise none() { return {}; }
};

struct RBResult {
  std::vector<int> m_list;
  std::vector<double> mean_p00;
  std::vector<double> sem;
  int k_sequences = 0;
  double a = 0, b = 0, p = 0;  // fit of A p^m + B
};

// column-major vec convention: vec(A rho B) = (B^T (x) A) vec(rho)
Matrix ideal_cz_superop();
Matrix superop_from_chi(const ChiMatrix& chi);

// Computational-subspace superoperator of the channel with leakage kept as
// trace loss (no renormalization) — survival probabilities fed to RB decay
// the way the measured P00 does.
Matrix computational_superop(const QuantumChannel& channel, int n_qubits);

RBResult rb_run(const Matrix& cz_superop, const RBNoise& noise, const RBConfig& config);

struct RBFit {
  double a = 0, b = 0, p = 0;
};
RBFit fit_rb_decay(const std::vector<int>& m_list, const std::vector<double>& means,
                   int n_qubits);

// F = 1 - 3/4 (1 - p_gate / p_ref)
double interleaved_fidelity(double p_gate, double p_ref);

// --- Bell-state metrics ----------------------------------------------------

struct BellMetrics {
  double fidelity = 0;
  double concurrence = 0;
  double leakage = 0;
};

// X_{pi/2} on both qubits, the controlled-phase gate, then the local X_{-pi/2}
// on the second qubit that rotates the result onto (|00> + |11>)/sqrt2.
BellMetrics bell_state_metrics(const DeviceSpec& device, const GateConfig& calibrated,
                               EvolveMode mode = EvolveMode::Lindblad,
                               const IntegratorOptions& opts = {});

}  // namespace geomsim
