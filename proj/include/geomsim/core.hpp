#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace geomsim {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Tolerance hierarchy used across the library.
namespace tol {
inline constexpr double algebra = 1e-12;      // exact algebraic identities
inline constexpr double hermiticity = 1e-10;  // Hermiticity / norms
inline constexpr double positivity = 1e-8;    // eigenvalue floors
}  // namespace tol

class LayoutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Composite qudit (x) resonator tensor space. Qubits are three-level,
// the resonator carries a Fock truncation of n_fock levels and sits last.
struct HilbertLayout {
  std::vector<int> subsystem_dims;
  int resonator_index = -1;  // -1: no resonator subsystem

  HilbertLayout() = default;
  HilbertLayout(std::vector<int> dims, int res_index);

  static HilbertLayout single(int dim) { return HilbertLayout({dim}, -1); }
  static HilbertLayout qubits_and_resonator(int n_qubits, int n_fock);

  int dim() const;
  int num_subsystems() const { return static_cast<int>(subsystem_dims.size()); }
  int num_qubits() const;

  bool operator==(const HilbertLayout& o) const {
    return subsystem_dims == o.subsystem_dims && resonator_index == o.resonator_index;
  }
  bool operator!=(const HilbertLayout& o) const { return !(*this == o); }

  // Flat index of the basis state with the given per-subsystem levels
  // (first subsystem is the most significant digit).
  int basis_index(const std::vector<int>& levels) const;
};

class Operator {
 public:
  Operator() = default;
  Operator(HilbertLayout layout, Matrix m);

  const HilbertLayout& layout() const { return layout_; }
  const Matrix& matrix() const { return mat_; }
  Matrix& matrix() { return mat_; }
  int dim() const { return static_cast<int>(mat_.rows()); }

  bool is_hermitian(double t = tol::algebra) const;
  void assert_hermitian(double t = tol::algebra) const;

  Operator adjoint() const { return Operator(layout_, mat_.adjoint()); }
  Operator operator*(const Operator& o) const;
  Operator operator+(const Operator& o) const;
  Operator operator-(const Operator& o) const;
  Operator operator*(Complex c) const { return Operator(layout_, mat_ * c); }

 private:
  HilbertLayout layout_;
  Matrix mat_;
};

struct StateVector {
  HilbertLayout layout;
  Vector amplitudes;

  StateVector() = default;
  StateVector(HilbertLayout l, Vector a);

  double norm() const { return amplitudes.norm(); }
  StateVector normalized() const;

  // Basis state |levels> with unit amplitude.
  static StateVector basis(const HilbertLayout& l, const std::vector<int>& levels);
};

struct DensityOperator {
  HilbertLayout layout;
  Matrix matrix;

  DensityOperator() = default;
  DensityOperator(HilbertLayout l, Matrix m, bool validate = true);

  static DensityOperator from_pure(const StateVector& psi);
  double trace_real() const { return matrix.trace().real(); }
  void validate() const;  // Hermiticity, trace, positivity floors
};

// --- operations ------------------------------------------------------------

// Ladder operator with sqrt(m) matrix elements at (m-1, m).
Operator lowering_op(int dim);
Operator raising_op(int dim);
Operator number_op(int dim);
Operator identity_op(int dim);

// Tensor-embed a single-subsystem operator at `site`, identity elsewhere.
Operator embed(const Operator& op, int site, const HilbertLayout& layout);

struct CoherentState {
  StateVector state;
  double tail_mass = 0;        // Poisson weight beyond the truncation
  bool truncation_warning = false;  // tail_mass > 1e-3
};

CoherentState coherent_state(Complex alpha, int n_fock);

Complex expectation(const Operator& op, const StateVector& psi);
Complex expectation(const Operator& op, const DensityOperator& rho);

DensityOperator partial_trace(const DensityOperator& rho, const std::vector<int>& keep);

struct ConcurrenceResult {
  double value = 0;
  double leakage = 0;           // weight outside the two-qubit {0,1} block
  bool leakage_warning = false; // leakage > 0.1
};

// Wootters concurrence of a two-qubit state. Qutrit inputs are projected
// onto the {|0>,|1>} block and renormalized.
ConcurrenceResult concurrence(const DensityOperator& rho);

double state_fidelity(const DensityOperator& rho, const DensityOperator& sigma);

// Project a multi-qutrit (optionally (x) resonator) state onto the
// computational {|0>,|1>}^n subspace. Returns the unnormalized 2^n x 2^n
// block; `leakage` receives the discarded weight.
Matrix computational_block(const DensityOperator& rho, double* leakage = nullptr);

}  // namespace geomsim
