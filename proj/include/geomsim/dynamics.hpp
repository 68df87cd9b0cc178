#pragma once

#include <optional>
#include <variant>
#include <vector>

#include <Eigen/SparseCore>

#include "geomsim/core.hpp"
#include "geomsim/device.hpp"

namespace geomsim {

enum class EvolveMode { Unitary, Lindblad };

// Instantaneous rotation on the {|0>,|1>} block of one active qubit, axis in
// the xy plane at `azimuth_rad` from x. Azimuths are interpreted in the
// qubit's own rotating frame; the executor folds in the accumulated frame
// phase.
struct Rotation {
  int qubit = 0;  // position within the schedule's active set
  double azimuth_rad = 0;
  double angle_rad = 0;
};

struct VirtualZ {
  int qubit = 0;
  double phase_rad = 0;  // adds phase e^{i z} to |1> (e^{2iz} to |2>)
};

struct ScheduleSegment {
  double duration_ns = 0;  // zero-duration segments carry only rotations
  std::vector<double> omega01_mhz;  // per active qubit; empty = hold previous
  double drive_omega_mhz = 0;
  std::vector<Rotation> rotations;   // applied at segment start
  std::vector<VirtualZ> virtual_z;   // applied at segment start
};

struct PulseSchedule {
  std::vector<int> active_qubits;          // device qubit indices
  std::vector<double> anharmonicity_mhz;   // per active qubit at the gate point
  std::vector<double> idle_omega01_mhz;    // frequencies outside explicit segments
  double omega_d_mhz = 0;                  // global drive/frame frequency
  double drive_delta_mhz = 0;              // informational
  int n_fock = 8;
  std::vector<ScheduleSegment> segments;

  HilbertLayout layout() const {
    return HilbertLayout::qubits_and_resonator(static_cast<int>(active_qubits.size()), n_fock);
  }
  double total_duration_ns() const;
};

struct CollapseSet {
  struct Channel {
    Operator op;
    double rate_per_us = 0;
  };
  std::vector<Channel> channels;

  // qubit relaxation 1/T1, qubit dephasing (number op) at 2/T_phi,
  // resonator decay 1/T1_r
  static CollapseSet from_device(const DeviceSpec& device, const std::vector<int>& active_qubits,
                                 const HilbertLayout& layout);
  static CollapseSet none() { return {}; }
  bool empty() const { return channels.empty(); }
};

struct Trajectory {
  std::vector<double> t_ns;
  std::vector<double> nbar;
  std::vector<Complex> a_expect;                          // drive frame
  std::vector<std::vector<std::array<double, 3>>> pops;   // [time][qubit]{P0,P1,P2}
};

struct IntegratorOptions {
  enum class Method { Auto, RK45, Krylov, Taylor };
  Method method = Method::Auto;
  double rtol = 1e-8;
  double atol = 1e-10;
  double initial_step_ns = 0.1;
  int krylov_dim = 30;
};

// alpha(t), beta(t) of the ideally driven bare cavity in the drive frame.
struct DrivenCavityValue {
  Complex alpha;
  double beta;
};
DrivenCavityValue analytic_driven_cavity(double omega_mhz, double delta_mhz, double t_ns);

// exp(-i H t)|psi> through one eigendecomposition, reusable across durations.
class UnitaryPropagator {
 public:
  explicit UnitaryPropagator(const Operator& h);
  StateVector apply(const StateVector& psi, double duration_ns) const;
  DensityOperator apply(const DensityOperator& rho, double duration_ns) const;
  const HilbertLayout& layout() const { return layout_; }

 private:
  HilbertLayout layout_;
  Matrix vecs_;
  Eigen::VectorXd vals_;
};

StateVector propagate_unitary(const Operator& h, double duration_ns, const StateVector& psi);

struct LindbladResult {
  DensityOperator final_state;
  Trajectory trajectory;
};

LindbladResult lindblad_evolve(const Operator& h, const CollapseSet& collapse,
                               const DensityOperator& rho0, const std::vector<double>& t_grid_ns,
                               const IntegratorOptions& opts = {});

// --- schedule execution ----------------------------------------------------

using ScheduleState = std::variant<StateVector, DensityOperator>;

struct ScheduleResult {
  ScheduleState final_state;  // qubit frames aligned (virtual-Z folded in)
  Trajectory trajectory;      // sampled at segment boundaries
  std::vector<double> frame_phase1;  // accumulated |1> frame phase per qubit
};

ScheduleResult run_schedule(const PulseSchedule& schedule, const DeviceSpec& device,
                            const ScheduleState& initial, EvolveMode mode,
                            const IntegratorOptions& opts = {},
                            const CollapseSet* collapse_override = nullptr);

// <n_r>(t) with the device prepared in a computational state and the drive on
// for the point's duration.
Trajectory photon_trajectory(const DeviceSpec& device, const GateOperatingPoint& point,
                             const std::vector<int>& computational_state, int n_samples = 126);

struct TruncationCheck {
  double max_observable_deviation = 0;
  double max_fidelity_deficit = 0;
};

TruncationCheck truncation_check(const DeviceSpec& device, const GateOperatingPoint& point,
                                 int n_fock_a, int n_fock_b);

// In-place rotation on the {|0>,|1>} block of one subsystem (azimuth taken
// literally, no frame folding) — building block for analysis pulses.
void apply_qubit_rotation(StateVector& psi, int qubit, double azimuth_rad, double angle_rad);
void apply_qubit_rotation(DensityOperator& rho, int qubit, double azimuth_rad, double angle_rad);

// observable record helper shared by the evolvers
void record_observables(Trajectory& traj, double t_ns, const DensityOperator& rho);
void record_observables(Trajectory& traj, double t_ns, const StateVector& psi);

}  // namespace geomsim
