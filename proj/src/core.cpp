#include "geomsim/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace geomsim {

HilbertLayout::HilbertLayout(std::vector<int> dims, int res_index)
    : subsystem_dims(std::move(dims)), resonator_index(res_index) {
  if (subsystem_dims.empty()) throw LayoutError("layout needs at least one subsystem");
  for (int i = 0; i < num_subsystems(); ++i) {
    const int d = subsystem_dims[i];
    if (i == resonator_index) {
      if (d < 2) throw LayoutError("resonator truncation must be >= 2");
    } else if (resonator_index >= 0 && d != 3) {
      // device layouts model transmons as three-level systems; layouts
      // without a resonator may carry arbitrary qudits
      throw LayoutError("qubit subsystems are three-level");
    } else if (d < 2) {
      throw LayoutError("subsystem dimension must be >= 2");
    }
  }
  if (resonator_index < -1 || resonator_index >= num_subsystems())
    throw LayoutError("resonator index out of range");
}

HilbertLayout HilbertLayout::qubits_and_resonator(int n_qubits, int n_fock) {
  std::vector<int> dims(n_qubits, 3);
  dims.push_back(n_fock);
  return HilbertLayout(std::move(dims), n_qubits);
}

int HilbertLayout::dim() const {
  int d = 1;
  for (int s : subsystem_dims) d *= s;
  return d;
}

int HilbertLayout::num_qubits() const {
  return num_subsystems() - (resonator_index >= 0 ? 1 : 0);
}

int HilbertLayout::basis_index(const std::vector<int>& levels) const {
  if (static_cast<int>(levels.size()) != num_subsystems())
    throw LayoutError("level list length does not match layout");
  int idx = 0;
  for (int i = 0; i < num_subsystems(); ++i) {
    if (levels[i] < 0 || levels[i] >= subsystem_dims[i])
      throw LayoutError("level out of range for subsystem " + std::to_string(i));
    idx = idx * subsystem_dims[i] + levels[i];
  }
  return idx;
}

Operator::Operator(HilbertLayout layout, Matrix m) : layout_(std::move(layout)), mat_(std::move(m)) {
  if (mat_.rows() != mat_.cols()) throw LayoutError("operator matrix must be square");
  if (mat_.rows() != layout_.dim()) throw LayoutError("operator dimension does not match layout");
}

bool Operator::is_hermitian(double t) const {
  return (mat_ - mat_.adjoint()).cwiseAbs().maxCoeff() <= t;
}

void Operator::assert_hermitian(double t) const {
  if (!is_hermitian(t)) throw NumericsError("operator is not Hermitian within tolerance");
}

Operator Operator::operator*(const Operator& o) const {
  if (layout_ != o.layout_) throw LayoutError("operator layout mismatch");
  return Operator(layout_, mat_ * o.mat_);
}

Operator Operator::operator+(const Operator& o) const {
  if (layout_ != o.layout_) throw LayoutError("operator layout mismatch");
  return Operator(layout_, mat_ + o.mat_);
}

Operator Operator::operator-(const Operator& o) const {
  if (layout_ != o.layout_) throw LayoutError("operator layout mismatch");
  return Operator(layout_, mat_ - o.mat_);
}

StateVector::StateVector(HilbertLayout l, Vector a) : layout(std::move(l)), amplitudes(std::move(a)) {
  if (amplitudes.size() != layout.dim()) throw LayoutError("state dimension does not match layout");
}

StateVector StateVector::normalized() const {
  const double n = norm();
  if (n < 1e-300) throw NumericsError("cannot normalize zero state");
  return StateVector(layout, amplitudes / n);
}

StateVector StateVector::basis(const HilbertLayout& l, const std::vector<int>& levels) {
  Vector v = Vector::Zero(l.dim());
  v(l.basis_index(levels)) = 1.0;
  return StateVector(l, std::move(v));
}

DensityOperator::DensityOperator(HilbertLayout l, Matrix m, bool do_validate)
    : layout(std::move(l)), matrix(std::move(m)) {
  if (matrix.rows() != matrix.cols() || matrix.rows() != layout.dim())
    throw LayoutError("density matrix dimension does not match layout");
  if (do_validate) validate();
}

DensityOperator DensityOperator::from_pure(const StateVector& psi) {
  const Vector a = psi.amplitudes;
  return DensityOperator(psi.layout, a * a.adjoint(), false);
}

void DensityOperator::validate() const {
  if ((matrix - matrix.adjoint()).cwiseAbs().maxCoeff() > tol::hermiticity)
    throw NumericsError("density operator not Hermitian within 1e-10");
  if (std::abs(matrix.trace().real() - 1.0) > 1e-8 || std::abs(matrix.trace().imag()) > 1e-8)
    throw NumericsError("density operator trace differs from 1 beyond 1e-8");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (matrix + matrix.adjoint()),
                                           Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol::positivity)
    throw NumericsError("density operator has eigenvalue below -1e-8");
}

Operator lowering_op(int dim) {
  if (dim < 2) throw LayoutError("ladder operator needs dim >= 2");
  Matrix m = Matrix::Zero(dim, dim);
  for (int k = 1; k < dim; ++k) m(k - 1, k) = std::sqrt(static_cast<double>(k));
  return Operator(HilbertLayout::single(dim), std::move(m));
}

Operator raising_op(int dim) { return lowering_op(dim).adjoint(); }

Operator number_op(int dim) {
  Matrix m = Matrix::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) m(k, k) = static_cast<double>(k);
  return Operator(HilbertLayout::single(dim), std::move(m));
}

Operator identity_op(int dim) {
  return Operator(HilbertLayout::single(dim), Matrix::Identity(dim, dim));
}

Operator embed(const Operator& op, int site, const HilbertLayout& layout) {
  const int n = layout.num_subsystems();
  if (site < 0 || site >= n) throw LayoutError("embed site out of range");
  if (op.dim() != layout.subsystem_dims[site])
    throw LayoutError("embedded operator dimension does not match subsystem");
  int left = 1, right = 1;
  for (int i = 0; i < site; ++i) left *= layout.subsystem_dims[i];
  for (int i = site + 1; i < n; ++i) right *= layout.subsystem_dims[i];
  const int d = layout.subsystem_dims[site];
  Matrix full = Matrix::Zero(layout.dim(), layout.dim());
  for (int l = 0; l < left; ++l)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        const Complex v = op.matrix()(a, b);
        if (v == Complex(0, 0)) continue;
        const int row0 = (l * d + a) * right;
        const int col0 = (l * d + b) * right;
        for (int r = 0; r < right; ++r) full(row0 + r, col0 + r) += v;
      }
  return Operator(layout, std::move(full));
}

CoherentState coherent_state(Complex alpha, int n_fock) {
  if (n_fock < 2) throw LayoutError("coherent state needs n_fock >= 2");
  HilbertLayout l({std::vector<int>{n_fock}}, 0);
  Vector v(n_fock);
  // amplitudes alpha^n / sqrt(n!), built recursively
  Complex amp = 1.0;
  for (int n = 0; n < n_fock; ++n) {
    if (n > 0) amp *= alpha / std::sqrt(static_cast<double>(n));
    v(n) = amp;
  }
  const double kept = v.squaredNorm();
  const double total = std::exp(std::norm(alpha));  // sum over the full ladder
  CoherentState out;
  out.tail_mass = std::max(0.0, 1.0 - kept / total);
  out.truncation_warning = out.tail_mass > 1e-3;
  out.state = StateVector(l, v / std::sqrt(kept));
  return out;
}

Complex expectation(const Operator& op, const StateVector& psi) {
  if (op.layout() != psi.layout) throw LayoutError("expectation: layout mismatch");
  return psi.amplitudes.dot(op.matrix() * psi.amplitudes);
}

Complex expectation(const Operator& op, const DensityOperator& rho) {
  if (op.layout() != rho.layout) throw LayoutError("expectation: layout mismatch");
  return (op.matrix() * rho.matrix).trace();
}

DensityOperator partial_trace(const DensityOperator& rho, const std::vector<int>& keep) {
  if (keep.empty()) throw LayoutError("partial_trace: keep set must be nonempty");
  const auto& dims = rho.layout.subsystem_dims;
  const int n = rho.layout.num_subsystems();
  std::vector<bool> keep_mask(n, false);
  for (int k : keep) {
    if (k < 0 || k >= n) throw LayoutError("partial_trace: subsystem index out of range");
    keep_mask[k] = true;
  }

  std::vector<int> kept_dims, traced_dims, kept_sites, traced_sites;
  for (int i = 0; i < n; ++i) {
    if (keep_mask[i]) {
      kept_dims.push_back(dims[i]);
      kept_sites.push_back(i);
    } else {
      traced_dims.push_back(dims[i]);
      traced_sites.push_back(i);
    }
  }

  int dk = 1, dt = 1;
  for (int d : kept_dims) dk *= d;
  for (int d : traced_dims) dt *= d;

  // strides of each subsystem in the flat index
  std::vector<int> stride(n, 1);
  for (int i = n - 2; i >= 0; --i) stride[i] = stride[i + 1] * dims[i + 1];

  auto flat = [&](int kept_idx, int traced_idx) {
    int idx = 0;
    for (int i = static_cast<int>(kept_sites.size()) - 1; i >= 0; --i) {
      idx += (kept_idx % kept_dims[i]) * stride[kept_sites[i]];
      kept_idx /= kept_dims[i];
    }
    for (int i = static_cast<int>(traced_sites.size()) - 1; i >= 0; --i) {
      idx += (traced_idx % traced_dims[i]) * stride[traced_sites[i]];
      traced_idx /= traced_dims[i];
    }
    return idx;
  };

  Matrix out = Matrix::Zero(dk, dk);
  for (int a = 0; a < dk; ++a)
    for (int b = 0; b < dk; ++b) {
      Complex s = 0;
      for (int t = 0; t < dt; ++t) s += rho.matrix(flat(a, t), flat(b, t));
      out(a, b) = s;
    }

  int new_res = -1;
  for (size_t i = 0; i < kept_sites.size(); ++i)
    if (kept_sites[i] == rho.layout.resonator_index) new_res = static_cast<int>(i);
  return DensityOperator(HilbertLayout(kept_dims, new_res), std::move(out), false);
}

Matrix computational_block(const DensityOperator& rho_in, double* leakage) {
  DensityOperator rho = rho_in;
  if (rho.layout.resonator_index >= 0) {
    std::vector<int> keep;
    for (int i = 0; i < rho.layout.num_subsystems(); ++i)
      if (i != rho.layout.resonator_index) keep.push_back(i);
    rho = partial_trace(rho, keep);
  }
  const int n = rho.layout.num_subsystems();
  const int d2 = 1 << n;
  auto comp_index = [&](int bits) {
    int idx = 0;
    for (int q = 0; q < n; ++q) idx = idx * 3 + ((bits >> (n - 1 - q)) & 1);
    return idx;
  };
  Matrix block(d2, d2);
  for (int a = 0; a < d2; ++a)
    for (int b = 0; b < d2; ++b) block(a, b) = rho.matrix(comp_index(a), comp_index(b));
  if (leakage) *leakage = std::max(0.0, rho.trace_real() - block.trace().real());
  return block;
}

ConcurrenceResult concurrence(const DensityOperator& rho) {
  ConcurrenceResult out;
  Matrix r;
  if (rho.layout.dim() == 4 && rho.layout.resonator_index < 0 &&
      rho.layout.num_subsystems() == 2 && rho.layout.subsystem_dims[0] == 2) {
    r = rho.matrix;  // already a plain two-qubit state
  } else {
    if (rho.layout.num_qubits() != 2) throw LayoutError("concurrence needs a two-qubit state");
    r = computational_block(rho, &out.leakage);
    const double tr = r.trace().real();
    if (tr < 1e-12) throw NumericsError("concurrence: no weight in computational subspace");
    r /= tr;
  }
  out.leakage_warning = out.leakage > 0.1;

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (r + r.adjoint()), Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-6)
    throw NumericsError("concurrence: input not positive semidefinite");

  // spin-flipped matrix R = rho (Y(x)Y) rho* (Y(x)Y)
  Matrix yy = Matrix::Zero(4, 4);
  yy(0, 3) = -1; yy(1, 2) = 1; yy(2, 1) = 1; yy(3, 0) = -1;
  Matrix R = r * yy * r.conjugate() * yy;
  Eigen::ComplexEigenSolver<Matrix> ces(R);
  std::vector<double> lam(4);
  for (int i = 0; i < 4; ++i) lam[i] = std::sqrt(std::max(0.0, ces.eigenvalues()(i).real()));
  std::sort(lam.begin(), lam.end(), std::greater<double>());
  out.value = std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
  return out;
}

double state_fidelity(const DensityOperator& rho, const DensityOperator& sigma) {
  if (rho.layout != sigma.layout) throw LayoutError("state_fidelity: layout mismatch");
  auto check_psd = [](const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-6)
      throw NumericsError("state_fidelity: input not positive semidefinite");
  };
  check_psd(rho.matrix);
  check_psd(sigma.matrix);

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho.matrix + rho.matrix.adjoint()));
  Vector sq = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().cast<Complex>();
  Matrix sqrt_rho = es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().adjoint();
  Matrix inner = sqrt_rho * sigma.matrix * sqrt_rho;
  Eigen::SelfAdjointEigenSolver<Matrix> es2(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  double s = 0;
  for (int i = 0; i < es2.eigenvalues().size(); ++i)
    s += std::sqrt(std::max(0.0, es2.eigenvalues()(i)));
  return std::min(1.0, s * s);
}

}  // namespace geomsim
