#pragma once

#include "geomsim/characterization.hpp"
#include "geomsim/config.hpp"

namespace geomsim {

// End-to-end calibration of one named operating point: amplitude bisection to
// the pi conditional phase, then virtual-Z compensation of the single-qubit
// phase-table coefficients.
struct CalibratedGate {
  GateConfig config;       // amplitude + compensation filled in
  DeviceSpec gate_device;  // gate-point coherence overrides applied
  double omega_sq_star = 0;
  PhaseTable table;        // after compensation
  std::vector<std::string> warnings;
};

// n = 1 has no interference reference, so the compensation is taken from the
// zero-drive schedule and the amplitude is bisected on the referenced phase.
// omega_sq_override > 0 skips the amplitude search.
CalibratedGate calibrate_gate(const DeviceFile& file, int n, double omega_sq_override = 0);

// The conditional phase is produced on |0...0>; with the linear phase-table
// coefficients zeroed by compensation, the ideal diagonal carries e^{i pi}
// exactly where [s = 0...0] + popcount(s) is odd. For n = 2 this is CZ up to
// global phase; for n >= 3 it differs from the textbook C..CZ by design.
Matrix ideal_cphase_unitary(int n);

// |Tr(U^dag M)|^2 / (d Tr(M^dag M)): coherent error within the computational
// subspace, global phase dropped and leakage norm loss factored out (leakage
// is bounded separately).
double unitary_operator_fidelity(const Matrix& m, const Matrix& ideal);

// Largest total |2> occupation over computational basis inputs: the leakage
// figure quoted for gate acceptance (residual bus photons are tracked by the
// trajectory checks instead).
double max_qutrit_occupation(const PulseSchedule& schedule, const DeviceSpec& device);

// Average state fidelity over the 2^n computational states plus the uniform
// superposition: the fast figure of merit for the four-qubit gate.
double fast_path_fidelity(const DeviceSpec& device, const CalibratedGate& cal,
                          double* leakage_max = nullptr);

}  // namespace geomsim
