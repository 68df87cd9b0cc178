#include "geomsim/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace geomsim {

namespace {

using SparseM = Eigen::SparseMatrix<Complex>;

std::vector<int> strides_of(const HilbertLayout& layout) {
  const int n = layout.num_subsystems();
  std::vector<int> s(n, 1);
  for (int i = n - 2; i >= 0; --i) s[i] = s[i + 1] * layout.subsystem_dims[i + 1];
  return s;
}

void decode_levels(const HilbertLayout& layout, int idx, std::vector<int>& levels) {
  const int n = layout.num_subsystems();
  levels.resize(n);
  for (int i = n - 1; i >= 0; --i) {
    levels[i] = idx % layout.subsystem_dims[i];
    idx /= layout.subsystem_dims[i];
  }
}

}  // namespace

double PulseSchedule::total_duration_ns() const {
  double t = 0;
  for (const auto& s : segments) t += s.duration_ns;
  return t;
}

CollapseSet CollapseSet::from_device(const DeviceSpec& device, const std::vector<int>& active_qubits,
                                     const HilbertLayout& layout) {
  if (layout.num_qubits() != static_cast<int>(active_qubits.size()))
    throw LayoutError("collapse set: active qubit count does not match layout");
  CollapseSet set;
  for (size_t i = 0; i < active_qubits.size(); ++i) {
    const auto& q = device.qubits.at(active_qubits[i]);
    if (q.t1_us > 0 && std::isfinite(q.t1_us))
      set.channels.push_back({embed(lowering_op(3), static_cast<int>(i), layout), 1.0 / q.t1_us});
    if (q.t_phi_us > 0 && std::isfinite(q.t_phi_us))
      set.channels.push_back({embed(number_op(3), static_cast<int>(i), layout), 2.0 / q.t_phi_us});
  }
  if (layout.resonator_index >= 0 && device.resonator_t1_us > 0 &&
      std::isfinite(device.resonator_t1_us)) {
    const int nf = layout.subsystem_dims[layout.resonator_index];
    set.channels.push_back(
        {embed(lowering_op(nf), layout.resonator_index, layout), 1.0 / device.resonator_t1_us});
  }
  return set;
}

void record_observables(Trajectory& traj, double t_ns, const DensityOperator& rho) {
  const auto& layout = rho.layout;
  const int nq = layout.num_qubits();
  const int res = layout.resonator_index;
  const auto strides = strides_of(layout);
  const int d = layout.dim();

  double nbar = 0;
  Complex a_exp = 0;
  std::vector<std::array<double, 3>> pops(nq, {0, 0, 0});
  std::vector<int> levels;
  for (int i = 0; i < d; ++i) {
    decode_levels(layout, i, levels);
    const double p = rho.matrix(i, i).real();
    for (int q = 0; q < nq; ++q) pops[q][levels[q]] += p;
    if (res >= 0) {
      const int m = levels[res];
      nbar += m * p;
      // Tr(rho a) = sum over states with m >= 1 of rho(i, i - stride) sqrt(m)
      if (m >= 1) a_exp += rho.matrix(i, i - strides[res]) * std::sqrt(static_cast<double>(m));
    }
  }
  traj.t_ns.push_back(t_ns);
  traj.nbar.push_back(nbar);
  traj.a_expect.push_back(a_exp);
  traj.pops.push_back(std::move(pops));
}

void record_observables(Trajectory& traj, double t_ns, const StateVector& psi) {
  const auto& layout = psi.layout;
  const int nq = layout.num_qubits();
  const int res = layout.resonator_index;
  const auto strides = strides_of(layout);
  const int d = layout.dim();

  double nbar = 0;
  Complex a_exp = 0;
  std::vector<std::array<double, 3>> pops(nq, {0, 0, 0});
  std::vector<int> levels;
  for (int i = 0; i < d; ++i) {
    const Complex c = psi.amplitudes[i];
    if (c == Complex(0, 0)) continue;
    decode_levels(layout, i, levels);
    const double p = std::norm(c);
    for (int q = 0; q < nq; ++q) pops[q][levels[q]] += p;
    if (res >= 0) {
      const int m = levels[res];
      nbar += m * p;
      if (m >= 1)
        a_exp += std::conj(psi.amplitudes[i - strides[res]]) * c *
                 std::sqrt(static_cast<double>(m));
    }
  }
  traj.t_ns.push_back(t_ns);
  traj.nbar.push_back(nbar);
  traj.a_expect.push_back(a_exp);
  traj.pops.push_back(std::move(pops));
}

DrivenCavityValue analytic_driven_cavity(double omega_mhz, double delta_mhz, double t_ns) {
  const double w = mhz_to_angular(omega_mhz);
  const double del = mhz_to_angular(delta_mhz);
  DrivenCavityValue out;
  if (std::abs(del * t_ns) < 1e-9) {
    out.alpha = Complex(0, -w * t_ns);
    out.beta = 0;
    return out;
  }
  out.alpha = (w / del) * (1.0 - std::exp(Complex(0, del * t_ns)));
  out.beta = -(w * w / del) * (t_ns - std::sin(del * t_ns) / del);
  return out;
}

UnitaryPropagator::UnitaryPropagator(const Operator& h) : layout_(h.layout()) {
  h.assert_hermitian(tol::hermiticity);
  Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
  if (es.info() != Eigen::Success) throw NumericsError("hamiltonian eigendecomposition failed");
  vecs_ = es.eigenvectors();
  vals_ = es.eigenvalues();
}

StateVector UnitaryPropagator::apply(const StateVector& psi, double duration_ns) const {
  if (psi.layout != layout_) throw LayoutError("propagator/state layout mismatch");
  Vector coeffs = vecs_.adjoint() * psi.amplitudes;
  for (int i = 0; i < coeffs.size(); ++i)
    coeffs[i] *= std::exp(Complex(0, -vals_[i] * duration_ns));
  return StateVector(layout_, vecs_ * coeffs);
}

DensityOperator UnitaryPropagator::apply(const DensityOperator& rho, double duration_ns) const {
  if (rho.layout != layout_) throw LayoutError("propagator/state layout mismatch");
  Vector phases(vals_.size());
  for (int i = 0; i < vals_.size(); ++i) phases[i] = std::exp(Complex(0, -vals_[i] * duration_ns));
  Matrix u = vecs_ * phases.asDiagonal() * vecs_.adjoint();
  return DensityOperator(layout_, u * rho.matrix * u.adjoint(), false);
}

StateVector propagate_unitary(const Operator& h, double duration_ns, const StateVector& psi) {
  return UnitaryPropagator(h).apply(psi, duration_ns);
}

namespace {

// Lindblad right-hand side with precomputed sparse pieces:
//   drho = -i (H_eff rho - rho H_eff^dag) + sum_k gamma_k L_k rho L_k^dag,
//   H_eff = H - (i/2) sum_k gamma_k L_k^dag L_k      (angular units, 1/ns)
struct LindbladRHS {
  SparseM heff;       // non-Hermitian effective Hamiltonian
  SparseM heff_adj;
  std::vector<SparseM> jump;      // sqrt(gamma) L, rates folded in
  std::vector<SparseM> jump_adj;
  // all diagonal jumps (dephasing) folded into one elementwise sandwich:
  // sum_k (L_k rho L_k^dag)_ij = weight_ij rho_ij with weight = d d^T
  Eigen::MatrixXd diag_weight;
  bool has_diag_weight = false;
  // "monomial" jumps (embedded lowering operators, at most one nonzero per
  // row and column): sandwich evaluated as a gather product
  struct MonomialJump {
    std::vector<int> rows;      // rows carrying a nonzero
    std::vector<int> cols;      // the column of that row's entry
    std::vector<Complex> vals;
  };
  std::vector<MonomialJump> mono;
  int dim = 0;

  double gen_norm_bound = 0;  // rough 1-norm bound on the full generator [1/ns]

  LindbladRHS(const Operator& h, const CollapseSet& collapse) {
    dim = h.dim();
    Matrix heff_dense = h.matrix();
    double jump_norm_sum = 0;
    for (const auto& ch : collapse.channels) {
      if (ch.op.dim() != dim) throw LayoutError("collapse operator dimension mismatch");
      const double gamma_ns = ch.rate_per_us * 1e-3;
      heff_dense -= Complex(0, 0.5 * gamma_ns) * (ch.op.matrix().adjoint() * ch.op.matrix());
      Matrix l = std::sqrt(gamma_ns) * ch.op.matrix();
      jump_norm_sum += l.cwiseAbs().colwise().sum().maxCoeff() *
                       l.cwiseAbs().rowwise().sum().maxCoeff();
      const bool diagonal_real =
          (l - Matrix(l.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0 &&
          l.diagonal().imag().cwiseAbs().maxCoeff() == 0;
      if (diagonal_real) {
        Eigen::VectorXd d = l.diagonal().real();
        if (!has_diag_weight) {
          diag_weight = Eigen::MatrixXd::Zero(dim, dim);
          has_diag_weight = true;
        }
        diag_weight.noalias() += d * d.transpose();
        continue;
      }
      MonomialJump mj;
      bool monomial = true;
      std::vector<int> col_hits(dim, 0);
      for (int r = 0; r < dim && monomial; ++r) {
        int nz_in_row = 0;
        for (int c = 0; c < dim; ++c) {
          if (l(r, c) != Complex(0, 0)) {
            if (++nz_in_row > 1 || ++col_hits[c] > 1) {
              monomial = false;
              break;
            }
            mj.rows.push_back(r);
            mj.cols.push_back(c);
            mj.vals.push_back(l(r, c));
          }
        }
      }
      if (monomial) {
        mono.push_back(std::move(mj));
      } else {
        jump.push_back(l.sparseView(1e-300, 1.0));
        jump_adj.push_back(Matrix(l.adjoint()).sparseView(1e-300, 1.0));
      }
    }
    // centering the (real part of the) diagonal is a pure gauge shift of the
    // commutator and roughly halves the generator norm
    const double mu = heff_dense.diagonal().real().mean();
    heff_dense.diagonal().array() -= mu;
    heff = heff_dense.sparseView(1e-300, 1.0);
    heff_adj = Matrix(heff_dense.adjoint()).sparseView(1e-300, 1.0);
    gen_norm_bound = 2.0 * heff_dense.cwiseAbs().colwise().sum().maxCoeff() + jump_norm_sum;
  }

  void apply_monomials(const Matrix& rho, Matrix& out) const {
    for (const auto& mj : mono) {
      const int n = static_cast<int>(mj.rows.size());
      for (int b = 0; b < n; ++b) {
        const Complex vb = std::conj(mj.vals[b]);
        const auto rho_col = rho.col(mj.cols[b]);
        auto out_col = out.col(mj.rows[b]);
        for (int a = 0; a < n; ++a)
          out_col[mj.rows[a]] += mj.vals[a] * vb * rho_col[mj.cols[a]];
      }
    }
  }

  void apply(const Matrix& rho, Matrix& out) const {
    out.noalias() = Complex(0, -1) * (heff * rho);
    out.noalias() += Complex(0, 1) * (rho * heff_adj);
    if (has_diag_weight) out.array() += diag_weight.array() * rho.array();
    apply_monomials(rho, out);
    for (size_t k = 0; k < jump.size(); ++k)
      out.noalias() += jump[k] * (rho * jump_adj[k]);
  }

  // For Hermitian rho, heff rho = (rho heff^dag)^dag: one product and a
  // transpose instead of two products. Dense-times-sparse is the fast side of
  // Eigen's kernels, so all products keep the sparse factor on the right.
  void apply_hermitian(const Matrix& rho, Matrix& out, Matrix& scratch) const {
    scratch.noalias() = rho * heff_adj;
    out = Complex(0, 1) * scratch;
    out.noalias() += (Complex(0, 1) * scratch).adjoint();
    if (has_diag_weight) out.array() += diag_weight.array() * rho.array();
    apply_monomials(rho, out);
    for (size_t k = 0; k < jump.size(); ++k) {
      scratch.noalias() = rho * jump_adj[k];
      out.noalias() += jump[k] * scratch;
    }
  }

  // power-iteration estimate of the generator's spectral scale [1/ns]
  double spectral_scale_estimate() const {
    Matrix x = Matrix::Random(dim, dim);
    x = 0.5 * (x + x.adjoint().eval());
    Matrix y(dim, dim), scratch(dim, dim);
    double lambda = gen_norm_bound;
    for (int it = 0; it < 8; ++it) {
      const double n = x.norm();
      if (n == 0) break;
      x /= n;
      apply_hermitian(x, y, scratch);
      lambda = y.norm();
      x.swap(y);
    }
    return std::min(gen_norm_bound, 1.3 * lambda);
  }
};

// Dormand-Prince 5(4) on the density matrix.
void rk45_evolve(const LindbladRHS& rhs, Matrix& rho, double t_span, const IntegratorOptions& opts) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                          e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                          e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

  const int d = rhs.dim;
  Matrix k1(d, d), k2(d, d), k3(d, d), k4(d, d), k5(d, d), k6(d, d), k7(d, d), tmp(d, d),
      ynew(d, d), err(d, d);
  double t = 0;
  double h = std::min(opts.initial_step_ns, t_span);
  rhs.apply(rho, k1);
  int rejected_in_a_row = 0;
  while (t < t_span) {
    h = std::min(h, t_span - t);
    tmp = rho + h * a21 * k1;
    rhs.apply(tmp, k2);
    tmp = rho + h * (a31 * k1 + a32 * k2);
    rhs.apply(tmp, k3);
    tmp = rho + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs.apply(tmp, k4);
    tmp = rho + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs.apply(tmp, k5);
    tmp = rho + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs.apply(tmp, k6);
    ynew = rho + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs.apply(ynew, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    const double scale = opts.atol + opts.rtol * std::max(rho.cwiseAbs().maxCoeff(),
                                                          ynew.cwiseAbs().maxCoeff());
    const double err_norm = err.cwiseAbs().maxCoeff() / scale;
    if (err_norm <= 1.0) {
      t += h;
      rho.swap(ynew);
      k1.swap(k7);  // FSAL
      rejected_in_a_row = 0;
    } else if (++rejected_in_a_row > 60) {
      throw NumericsError("rk45: step size control failed to converge");
    }
    const double factor = 0.9 * std::pow(std::max(err_norm, 1e-10), -0.2);
    h *= std::clamp(factor, 0.2, 5.0);
    if (h < 1e-12) throw NumericsError("rk45: step size underflow");
  }
}

// Truncated-Taylor exp(h L) with segment scaling: no orthogonalization work,
// only generator applies, which makes it the cheapest option for the dense
// density matrices of the gate-sized Hilbert spaces.
void taylor_evolve(const LindbladRHS& rhs, Matrix& rho, double t_span,
                   const IntegratorOptions& opts) {
  const double theta = 9.0;  // target |h| * ||L|| per segment
  int segments =
      std::max(1, static_cast<int>(std::ceil(t_span * rhs.spectral_scale_estimate() / theta)));
  const double tol = std::max(opts.rtol, 1e-14);

  const int d = rhs.dim;
  Matrix term(d, d), next(d, d), scratch(d, d);
  int done = 0;
  while (done < segments) {
    const double h = t_span / segments;
    term = rho;
    const double rho_norm = rho.norm();
    bool converged = false;
    Matrix acc = rho;
    for (int j = 1; j <= 60; ++j) {
      rhs.apply_hermitian(term, next, scratch);
      term.swap(next);
      term *= h / j;
      acc += term;
      const double tnorm = term.norm();
      if (j >= 3 && tnorm <= 0.25 * tol * rho_norm / segments) {
        converged = true;
        break;
      }
    }
    if (!converged) {  // segment too long for the series; refine the split
      segments *= 2;
      done *= 2;
      if (segments > (1 << 24)) throw NumericsError("taylor: segment refinement diverged");
      continue;
    }
    rho.swap(acc);
    ++done;
  }
  rho = 0.5 * (rho + rho.adjoint().eval());
}

// Krylov (Arnoldi) exp(tau * L) acting on vec(rho), adaptive in tau.
void krylov_evolve(const LindbladRHS& rhs, Matrix& rho, double t_span,
                   const IntegratorOptions& opts) {
  const int d = rhs.dim;
  const int n = d * d;
  const int m_max = std::min(opts.krylov_dim, n);

  std::vector<Matrix> basis(m_max + 1, Matrix(d, d));
  Eigen::MatrixXcd hess = Eigen::MatrixXcd::Zero(m_max + 1, m_max + 1);
  Matrix w(d, d);

  auto dot = [](const Matrix& a, const Matrix& b) {
    return (a.conjugate().cwiseProduct(b)).sum();
  };

  double t = 0;
  double tau = t_span;
  const double tol_total = std::max(opts.atol, opts.rtol);
  while (t < t_span) {
    tau = std::min(tau, t_span - t);
    const double beta = rho.norm();
    if (beta == 0) return;
    basis[0] = rho / beta;
    int m = m_max;
    bool breakdown = false;
    hess.setZero();
    for (int j = 0; j < m_max; ++j) {
      rhs.apply(basis[j], w);
      for (int i = 0; i <= j; ++i) {
        const Complex hij = dot(basis[i], w);
        hess(i, j) = hij;
        w -= hij * basis[i];
      }
      // one re-orthogonalization pass for stability
      for (int i = 0; i <= j; ++i) {
        const Complex corr = dot(basis[i], w);
        hess(i, j) += corr;
        w -= corr * basis[i];
      }
      const double hnext = w.norm();
      hess(j + 1, j) = hnext;
      if (hnext < 1e-14) {
        m = j + 1;
        breakdown = true;
        break;
      }
      basis[j + 1] = w / hnext;
    }

    while (true) {
      Eigen::MatrixXcd f = (tau * hess.topLeftCorner(m, m)).exp();
      double err = 0;
      if (!breakdown)
        err = beta * std::abs(hess(m, m - 1).real()) * std::abs(f(m - 1, 0)) * tau;
      const double budget = tol_total * std::max(tau / t_span, 1e-3);
      if (breakdown || err <= budget * beta || tau < 1e-10) {
        w.setZero();
        for (int i = 0; i < m; ++i) w += (beta * f(i, 0)) * basis[i];
        rho.swap(w);
        t += tau;
        if (!breakdown && err > 0) {
          tau *= std::clamp(0.9 * std::pow(budget * beta / err, 1.0 / m), 0.3, 3.0);
        } else {
          tau *= 2.0;
        }
        break;
      }
      tau *= std::clamp(0.7 * std::pow(budget * beta / err, 1.0 / m), 0.1, 0.7);
    }
    // keep the state Hermitian against accumulated roundoff
    rho = 0.5 * (rho + rho.adjoint().eval());
  }
}

}  // namespace

LindbladResult lindblad_evolve(const Operator& h, const CollapseSet& collapse,
                               const DensityOperator& rho0, const std::vector<double>& t_grid_ns,
                               const IntegratorOptions& opts) {
  if (rho0.layout != h.layout()) throw LayoutError("lindblad: state/hamiltonian layout mismatch");
  if (t_grid_ns.empty()) throw NumericsError("lindblad: empty time grid");
  if (!std::is_sorted(t_grid_ns.begin(), t_grid_ns.end()))
    throw NumericsError("lindblad: time grid must be ascending");

  LindbladRHS rhs(h, collapse);
  const auto method = opts.method == IntegratorOptions::Method::Auto
                          ? IntegratorOptions::Method::Taylor
                          : opts.method;

  Matrix rho = rho0.matrix;
  LindbladResult out;
  double t = t_grid_ns.front();
  if (t != 0) throw NumericsError("lindblad: time grid must start at 0");
  record_observables(out.trajectory, t, rho0);
  for (size_t i = 1; i < t_grid_ns.size(); ++i) {
    const double span = t_grid_ns[i] - t;
    if (span > 0) {
      if (method == IntegratorOptions::Method::RK45)
        rk45_evolve(rhs, rho, span, opts);
      else if (method == IntegratorOptions::Method::Krylov)
        krylov_evolve(rhs, rho, span, opts);
      else
        taylor_evolve(rhs, rho, span, opts);
    }
    t = t_grid_ns[i];
    DensityOperator snap(rho0.layout, rho, false);
    record_observables(out.trajectory, t, snap);
  }
  const double trace_drift = std::abs(rho.trace().real() - 1.0) + std::abs(rho.trace().imag());
  if (trace_drift > 1e-6)
    throw NumericsError("lindblad: trace drift " + std::to_string(trace_drift) + " exceeds 1e-6");
  out.final_state = DensityOperator(rho0.layout, 0.5 * (rho + rho.adjoint().eval()), false);
  return out;
}

namespace {

// in-place R(theta, phi) = exp(-i theta/2 (cos phi X + sin phi Y)) on the
// {|0>,|1>} block of qubit q
void apply_rotation_state(StateVector& psi, int q, double azimuth, double angle) {
  const auto strides = strides_of(psi.layout);
  const int stride = strides[q];
  const int d = psi.layout.dim();
  const Complex u00 = std::cos(angle / 2);
  const Complex u01 = Complex(0, -1) * std::exp(Complex(0, -azimuth)) * std::sin(angle / 2);
  const Complex u10 = Complex(0, -1) * std::exp(Complex(0, azimuth)) * std::sin(angle / 2);
  const int dim_q = psi.layout.subsystem_dims[q];
  std::vector<int> levels;
  for (int i = 0; i < d; ++i) {
    decode_levels(psi.layout, i, levels);
    if (levels[q] != 0) continue;
    const int j = i + stride;
    const Complex a = psi.amplitudes[i];
    const Complex b = psi.amplitudes[j];
    psi.amplitudes[i] = u00 * a + u01 * b;
    psi.amplitudes[j] = u10 * a + u00 * b;
  }
  (void)dim_q;
}

void apply_rotation_rho(DensityOperator& rho, int q, double azimuth, double angle) {
  const auto strides = strides_of(rho.layout);
  const int stride = strides[q];
  const int d = rho.layout.dim();
  const Complex u00 = std::cos(angle / 2);
  const Complex u01 = Complex(0, -1) * std::exp(Complex(0, -azimuth)) * std::sin(angle / 2);
  const Complex u10 = Complex(0, -1) * std::exp(Complex(0, azimuth)) * std::sin(angle / 2);
  std::vector<int> levels;
  for (int i = 0; i < d; ++i) {
    decode_levels(rho.layout, i, levels);
    if (levels[q] != 0) continue;
    const int j = i + stride;
    const auto r0 = rho.matrix.row(i).eval();
    const auto r1 = rho.matrix.row(j).eval();
    rho.matrix.row(i) = u00 * r0 + u01 * r1;
    rho.matrix.row(j) = u10 * r0 + u00 * r1;
  }
  for (int i = 0; i < d; ++i) {
    decode_levels(rho.layout, i, levels);
    if (levels[q] != 0) continue;
    const int j = i + stride;
    const auto c0 = rho.matrix.col(i).eval();
    const auto c1 = rho.matrix.col(j).eval();
    rho.matrix.col(i) = std::conj(u00) * c0 + std::conj(u01) * c1;
    rho.matrix.col(j) = std::conj(u10) * c0 + std::conj(u00) * c1;
  }
}

Vector frame_correction_phases(const HilbertLayout& layout, const std::vector<double>& phase1,
                               const std::vector<double>& phase2) {
  const int d = layout.dim();
  const int nq = layout.num_qubits();
  Vector diag(d);
  std::vector<int> levels;
  for (int i = 0; i < d; ++i) {
    decode_levels(layout, i, levels);
    double phi = 0;
    for (int q = 0; q < nq; ++q) {
      if (levels[q] == 1) phi += phase1[q];
      if (levels[q] == 2) phi += phase2[q];
    }
    diag[i] = std::exp(Complex(0, phi));
  }
  return diag;
}

}  // namespace

void apply_qubit_rotation(StateVector& psi, int qubit, double azimuth_rad, double angle_rad) {
  apply_rotation_state(psi, qubit, azimuth_rad, angle_rad);
}

void apply_qubit_rotation(DensityOperator& rho, int qubit, double azimuth_rad, double angle_rad) {
  apply_rotation_rho(rho, qubit, azimuth_rad, angle_rad);
}

namespace {

struct PropagatorCacheEntry {
  std::vector<double> omega01;
  double drive_omega;
  UnitaryPropagator prop;
};

}  // namespace

ScheduleResult run_schedule(const PulseSchedule& schedule, const DeviceSpec& device,
                            const ScheduleState& initial, EvolveMode mode,
                            const IntegratorOptions& opts, const CollapseSet* collapse_override) {
  const int n = static_cast<int>(schedule.active_qubits.size());
  if (n == 0) throw ModelError("schedule needs active qubits");
  if (schedule.idle_omega01_mhz.size() != static_cast<size_t>(n) ||
      schedule.anharmonicity_mhz.size() != static_cast<size_t>(n))
    throw ModelError("schedule field lengths disagree");
  const HilbertLayout layout = schedule.layout();

  const bool lindblad = mode == EvolveMode::Lindblad;
  if (lindblad && !std::holds_alternative<DensityOperator>(initial))
    throw ModelError("lindblad evolution requires a density-operator initial state");
  if (!lindblad && !std::holds_alternative<StateVector>(initial))
    throw ModelError("unitary evolution requires a state-vector initial state");

  ScheduleState state = initial;
  if (lindblad) {
    if (std::get<DensityOperator>(state).layout != layout)
      throw LayoutError("schedule/state layout mismatch");
  } else if (std::get<StateVector>(state).layout != layout) {
    throw LayoutError("schedule/state layout mismatch");
  }

  CollapseSet collapse;
  if (lindblad)
    collapse = collapse_override ? *collapse_override
                                 : CollapseSet::from_device(device, schedule.active_qubits, layout);

  std::vector<double> phase1(n, 0), phase2(n, 0);
  std::vector<double> omega01 = schedule.idle_omega01_mhz;
  std::vector<PropagatorCacheEntry> cache;

  ScheduleResult out;
  double t = 0;
  if (lindblad)
    record_observables(out.trajectory, t, std::get<DensityOperator>(state));
  else
    record_observables(out.trajectory, t, std::get<StateVector>(state));

  for (const auto& seg : schedule.segments) {
    if (!seg.omega01_mhz.empty()) {
      if (seg.omega01_mhz.size() != static_cast<size_t>(n))
        throw ModelError("segment frequency list length mismatch");
      omega01 = seg.omega01_mhz;
    }

    for (const auto& vz : seg.virtual_z) {
      if (vz.qubit < 0 || vz.qubit >= n) throw ModelError("virtual-Z qubit index out of range");
      phase1[vz.qubit] += vz.phase_rad;
      phase2[vz.qubit] += 2.0 * vz.phase_rad;
    }
    for (const auto& r : seg.rotations) {
      if (r.qubit < 0 || r.qubit >= n) throw ModelError("rotation qubit index out of range");
      const double az = r.azimuth_rad - phase1[r.qubit];
      if (lindblad)
        apply_rotation_rho(std::get<DensityOperator>(state), r.qubit, az, r.angle_rad);
      else
        apply_rotation_state(std::get<StateVector>(state), r.qubit, az, r.angle_rad);
    }

    if (seg.duration_ns > 0) {
      GateOperatingPoint point;
      point.active_qubits = schedule.active_qubits;
      point.omega01_gate_mhz = omega01;
      point.anharmonicity_mhz = schedule.anharmonicity_mhz;
      point.drive_omega_mhz = seg.drive_omega_mhz;
      point.drive_delta_mhz = schedule.drive_delta_mhz != 0 ? schedule.drive_delta_mhz : 4.0;
      point.duration_ns = seg.duration_ns;
      point.n_fock = schedule.n_fock;
      const Operator h = build_drive_frame_hamiltonian(device, point, omega01,
                                                       seg.drive_omega_mhz, schedule.omega_d_mhz);
      if (lindblad) {
        auto res = lindblad_evolve(h, collapse, std::get<DensityOperator>(state),
                                   {0.0, seg.duration_ns}, opts);
        state = std::move(res.final_state);
      } else {
        const PropagatorCacheEntry* hit = nullptr;
        for (const auto& e : cache)
          if (e.omega01 == omega01 && e.drive_omega == seg.drive_omega_mhz) {
            hit = &e;
            break;
          }
        if (!hit) {
          cache.push_back({omega01, seg.drive_omega_mhz, UnitaryPropagator(h)});
          hit = &cache.back();
        }
        state = hit->prop.apply(std::get<StateVector>(state), seg.duration_ns);
      }
      for (int q = 0; q < n; ++q) {
        const double d1 = omega01[q] - schedule.omega_d_mhz;
        phase1[q] += mhz_to_angular(d1) * seg.duration_ns;
        phase2[q] += mhz_to_angular(2.0 * d1 - schedule.anharmonicity_mhz[q]) * seg.duration_ns;
      }
      t += seg.duration_ns;
    }
    if (lindblad)
      record_observables(out.trajectory, t, std::get<DensityOperator>(state));
    else
      record_observables(out.trajectory, t, std::get<StateVector>(state));
  }

  // rotate the final state into the individual qubit frames
  const Vector diag = frame_correction_phases(layout, phase1, phase2);
  if (lindblad) {
    auto& rho = std::get<DensityOperator>(state);
    rho.matrix = diag.asDiagonal() * rho.matrix * diag.conjugate().asDiagonal();
  } else {
    auto& psi = std::get<StateVector>(state);
    psi.amplitudes = diag.asDiagonal() * psi.amplitudes;
  }
  out.final_state = std::move(state);
  out.frame_phase1 = std::move(phase1);
  return out;
}

Trajectory photon_trajectory(const DeviceSpec& device, const GateOperatingPoint& point,
                             const std::vector<int>& computational_state, int n_samples) {
  if (computational_state.size() != point.active_qubits.size())
    throw ModelError("computational state length mismatch");
  for (int s : computational_state)
    if (s < 0 || s > 1) throw ModelError("computational state entries must be 0 or 1");
  GateOperatingPoint pt = point;
  if (pt.duration_ns <= 0) pt.duration_ns = 1000.0 / std::abs(pt.drive_delta_mhz);

  const Operator h = build_drive_frame_hamiltonian(device, pt);
  const HilbertLayout layout = pt.layout();
  std::vector<int> levels = computational_state;
  levels.push_back(0);
  const StateVector psi0 = StateVector::basis(layout, levels);
  UnitaryPropagator prop(h);

  Trajectory traj;
  for (int i = 0; i <= n_samples; ++i) {
    const double t = pt.duration_ns * i / n_samples;
    record_observables(traj, t, prop.apply(psi0, t));
  }
  return traj;
}

TruncationCheck truncation_check(const DeviceSpec& device, const GateOperatingPoint& point,
                                 int n_fock_a, int n_fock_b) {
  if (n_fock_a > n_fock_b) std::swap(n_fock_a, n_fock_b);
  const int nq = static_cast<int>(point.active_qubits.size());
  GateOperatingPoint pa = point, pb = point;
  pa.n_fock = n_fock_a;
  pb.n_fock = n_fock_b;
  if (pa.duration_ns <= 0) {
    pa.duration_ns = pb.duration_ns = 1000.0 / std::abs(point.drive_delta_mhz);
  }

  const Operator ha = build_drive_frame_hamiltonian(device, pa);
  const Operator hb = build_drive_frame_hamiltonian(device, pb);
  UnitaryPropagator prop_a(ha), prop_b(hb);
  const HilbertLayout la = pa.layout(), lb = pb.layout();

  TruncationCheck out;
  const int n_samples = 64;
  for (int mask = 0; mask < (1 << nq); ++mask) {
    std::vector<int> levels(nq);
    for (int q = 0; q < nq; ++q) levels[q] = (mask >> q) & 1;
    std::vector<int> lev_a = levels, lev_b = levels;
    lev_a.push_back(0);
    lev_b.push_back(0);
    const StateVector psi0a = StateVector::basis(la, lev_a);
    const StateVector psi0b = StateVector::basis(lb, lev_b);

    Trajectory ta, tb;
    StateVector fa, fb;
    for (int i = 0; i <= n_samples; ++i) {
      const double t = pa.duration_ns * i / n_samples;
      fa = prop_a.apply(psi0a, t);
      fb = prop_b.apply(psi0b, t);
      record_observables(ta, t, fa);
      record_observables(tb, t, fb);
    }
    for (size_t i = 0; i < ta.t_ns.size(); ++i) {
      out.max_observable_deviation =
          std::max(out.max_observable_deviation, std::abs(ta.nbar[i] - tb.nbar[i]));
      for (int q = 0; q < nq; ++q)
        for (int l = 0; l < 3; ++l)
          out.max_observable_deviation = std::max(
              out.max_observable_deviation, std::abs(ta.pops[i][q][l] - tb.pops[i][q][l]));
    }
    // embed the smaller-truncation state into the larger Fock space
    Vector padded = Vector::Zero(lb.dim());
    std::vector<int> lv;
    for (int i = 0; i < la.dim(); ++i) {
      decode_levels(la, i, lv);
      padded[lb.basis_index(lv)] = fa.amplitudes[i];
    }
    const double overlap = std::abs(fb.amplitudes.dot(padded));
    out.max_fidelity_deficit = std::max(out.max_fidelity_deficit, 1.0 - overlap * overlap);
  }
  return out;
}

}  // namespace geomsim
