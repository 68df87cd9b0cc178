#include "geomsim/characterization.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <unsupported/Eigen/KroneckerProduct>

namespace geomsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

int int_pow(int base, int exp) {
  int v = 1;
  for (int i = 0; i < exp; ++i) v *= base;
  return v;
}

HilbertLayout computational_layout(int n_qubits) {
  return HilbertLayout(std::vector<int>(static_cast<size_t>(n_qubits), 2), -1);
}

bool is_computational_layout(const HilbertLayout& l) {
  if (l.resonator_index >= 0) return false;
  for (int d : l.subsystem_dims)
    if (d != 2) return false;
  return true;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// --- measurement -----------------------------------------------------------

MeasurementModel MeasurementModel::sampled(int shots_, const Eigen::Matrix3d& confusion_) {
  MeasurementModel m;
  m.mode = Mode::Sampled;
  m.shots = shots_;
  m.confusion = confusion_;
  return m;
}

Eigen::Matrix3d MeasurementModel::representative_confusion() {
  const double f[3] = {0.96, 0.85, 0.74};
  Eigen::Matrix3d c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c(i, j) = (i == j) ? f[i] : 0.5 * (1.0 - f[i]);
  return c;
}

void MeasurementModel::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(confusion.row(i).sum() - 1.0) > 1e-9)
      throw ModelError("confusion matrix rows must sum to 1");
    if (confusion.row(i).minCoeff() < -1e-12)
      throw ModelError("confusion matrix entries must be nonnegative");
  }
  if (mode == Mode::Sampled && shots < 1) throw ModelError("sampled mode needs shots >= 1");
}

namespace {

// contracts a {0,1,2}^n probability vector with a 3x3 matrix along one axis:
// out[..j..] = sum_i m(j,i) in[..i..]
Eigen::VectorXd apply_axis(const Eigen::VectorXd& in, const Eigen::Matrix3d& m, int axis, int n) {
  const int stride = int_pow(3, n - 1 - axis);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(in.size());
  for (int base = 0; base < in.size(); ++base) {
    const int level = (base / stride) % 3;
    if (level != 0) continue;
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int i = 0; i < 3; ++i) acc += m(j, i) * in[base + i * stride];
      out[base + j * stride] = acc;
    }
  }
  return out;
}

Eigen::VectorXd multinomial_sample(const Eigen::VectorXd& p, int shots, std::mt19937_64& rng) {
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(p.size());
  double remaining_p = p.sum();
  int remaining_n = shots;
  for (int i = 0; i < p.size() && remaining_n > 0; ++i) {
    const double q = std::clamp(remaining_p > 0 ? p[i] / remaining_p : 0.0, 0.0, 1.0);
    std::binomial_distribution<int> bin(remaining_n, q);
    const int c = bin(rng);
    freq[i] = c;
    remaining_n -= c;
    remaining_p -= p[i];
  }
  return freq / double(shots);
}

}  // namespace

TomographyResult qst(const DensityOperator& state, int n_qubits, const MeasurementModel& model,
                     std::mt19937_64* rng) {
  if (n_qubits < 1 || n_qubits > 5) throw ModelError("qst supports 1..5 qubits");
  if (state.layout.num_qubits() != n_qubits)
    throw LayoutError("qst: state does not carry the requested qubit count");
  model.validate();

  const HilbertLayout comp_layout = computational_layout(n_qubits);
  const int d = 1 << n_qubits;

  double leakage = 0;
  Matrix block;
  if (is_computational_layout(state.layout)) {
    block = state.matrix;
  } else {
    block = computational_block(state, &leakage);
  }

  if (model.mode == MeasurementModel::Mode::Exact) {
    const double tr = block.trace().real();
    if (tr < 1e-9) throw NumericsError("qst: no weight in computational subspace");
    return {DensityOperator(comp_layout, block / tr), leakage};
  }

  if (!rng) throw ModelError("sampled tomography needs a random engine");
  Eigen::FullPivLU<Eigen::Matrix3d> lu(model.confusion);
  if (!lu.isInvertible()) throw NumericsError("confusion matrix is singular");
  const Eigen::Matrix3d ct = model.confusion.transpose();
  const Eigen::Matrix3d ct_inv = ct.inverse();

  // drop the resonator, keep the qubit registers
  DensityOperator qs = state;
  if (state.layout.resonator_index >= 0) {
    std::vector<int> keep;
    for (int i = 0; i < state.layout.num_subsystems(); ++i)
      if (i != state.layout.resonator_index) keep.push_back(i);
    qs = partial_trace(state, keep);
  }

  const int n_settings = int_pow(3, n_qubits);
  const int n_out = int_pow(3, n_qubits);
  std::vector<Eigen::VectorXd> corrected(static_cast<size_t>(n_settings));
  std::vector<int> dims = qs.layout.subsystem_dims;

  for (int s = 0; s < n_settings; ++s) {
    DensityOperator rot = qs;
    for (int q = 0; q < n_qubits; ++q) {
      const int letter = (s / int_pow(3, n_qubits - 1 - q)) % 3;
      if (letter == 0) apply_qubit_rotation(rot, q, kPi / 2, -kPi / 2);  // X basis
      else if (letter == 1) apply_qubit_rotation(rot, q, 0.0, kPi / 2);  // Y basis
    }
    Eigen::VectorXd p3 = Eigen::VectorXd::Zero(n_out);
    for (int i = 0; i < rot.layout.dim(); ++i) {
      int rem = i, idx3 = 0;
      for (int q = n_qubits - 1; q >= 0; --q) {
        const int lvl = rem % dims[static_cast<size_t>(q)];
        rem /= dims[static_cast<size_t>(q)];
        idx3 += lvl * int_pow(3, n_qubits - 1 - q);
      }
      p3[idx3] += std::max(0.0, rot.matrix(i, i).real());
    }
    p3 /= p3.sum();
    Eigen::VectorXd p_meas = p3;
    for (int q = 0; q < n_qubits; ++q) p_meas = apply_axis(p_meas, ct, q, n_qubits);
    Eigen::VectorXd freq = multinomial_sample(p_meas, model.shots, *rng);
    for (int q = 0; q < n_qubits; ++q) freq = apply_axis(freq, ct_inv, q, n_qubits);
    corrected[static_cast<size_t>(s)] = freq;
  }

  const int n_pauli = int_pow(4, n_qubits);
  Matrix rho = Matrix::Identity(d, d) / double(d);
  for (int m = 1; m < n_pauli; ++m) {
    int sidx = 0;
    std::vector<int> letters(static_cast<size_t>(n_qubits));
    for (int q = 0; q < n_qubits; ++q) {
      const int l = (m / int_pow(4, n_qubits - 1 - q)) % 4;
      letters[static_cast<size_t>(q)] = l;
      sidx += (l == 0 ? 2 : l - 1) * int_pow(3, n_qubits - 1 - q);
    }
    const Eigen::VectorXd& p_est = corrected[static_cast<size_t>(sidx)];
    double e = 0;
    for (int o = 0; o < n_out; ++o) {
      double w = 1;
      bool skip = false;
      for (int q = 0; q < n_qubits; ++q) {
        const int lvl = (o / int_pow(3, n_qubits - 1 - q)) % 3;
        if (lvl == 2) { skip = true; break; }
        if (letters[static_cast<size_t>(q)] != 0 && lvl == 1) w = -w;
      }
      if (!skip) e += w * p_est[o];
    }
    rho += (e / double(d)) * pauli_matrix(n_qubits, m);
  }
  rho = 0.5 * (rho + rho.adjoint()).eval();

  if (model.psd_project) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    if (ev.sum() < 1e-12) throw NumericsError("qst: PSD projection annihilated the state");
    ev /= ev.sum();
    rho = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  }
  return {DensityOperator(comp_layout, rho, /*validate=*/false), leakage};
}

// --- process tomography ----------------------------------------------------

Matrix pauli_matrix(int n_qubits, int m) {
  static const std::array<Matrix, 4> p1 = [] {
    std::array<Matrix, 4> p;
    for (auto& x : p) x = Matrix::Zero(2, 2);
    p[0] << 1, 0, 0, 1;
    p[1] << 0, 1, 1, 0;
    p[2] << 0, Complex(0, -1), Complex(0, 1), 0;
    p[3] << 1, 0, 0, -1;
    return p;
  }();
  Matrix out = Matrix::Identity(1, 1);
  for (int q = 0; q < n_qubits; ++q) {
    const int digit = (m / int_pow(4, n_qubits - 1 - q)) % 4;
    out = Eigen::kroneckerProduct(out, p1[static_cast<size_t>(digit)]).eval();
  }
  return out;
}

std::vector<std::string> ChiMatrix::pauli_labels() const {
  static const char letters[4] = {'I', 'X', 'Y', 'Z'};
  std::vector<std::string> out;
  const int n_pauli = int_pow(4, n_qubits);
  out.reserve(static_cast<size_t>(n_pauli));
  for (int m = 0; m < n_pauli; ++m) {
    std::string s;
    for (int q = 0; q < n_qubits; ++q)
      s += letters[(m / int_pow(4, n_qubits - 1 - q)) % 4];
    out.push_back(s);
  }
  return out;
}

namespace {

std::array<Vector, 4> input_quartet() {
  std::array<Vector, 4> q;
  for (auto& v : q) v = Vector::Zero(2);
  const double r = 1.0 / std::sqrt(2.0);
  q[0] << 1, 0;
  q[1] << r, Complex(0, -r);
  q[2] << r, r;
  q[3] << 0, 1;
  return q;
}

}  // namespace

ChiMatrix qpt(const QuantumChannel& channel, int n_qubits, const MeasurementModel& model,
              std::mt19937_64* rng) {
  if (n_qubits < 1 || n_qubits > 4) throw ModelError("qpt supports 1..4 qubits");
  const int d = 1 << n_qubits;
  const int d2 = d * d;
  const HilbertLayout comp = computational_layout(n_qubits);
  const auto quartet = input_quartet();

  Matrix b = Matrix::Zero(d2, d2);
  Matrix o = Matrix::Zero(d2, d2);
  for (int j = 0; j < d2; ++j) {
    Vector psi = Vector::Ones(1);
    for (int q = 0; q < n_qubits; ++q) {
      const int digit = (j / int_pow(4, n_qubits - 1 - q)) % 4;
      psi = Eigen::kroneckerProduct(psi, quartet[static_cast<size_t>(digit)]).eval();
    }
    const StateVector input(comp, psi);
    const Matrix rho_in = psi * psi.adjoint();
    const Matrix rho_out = qst(channel(input), n_qubits, model, rng).rho.matrix;
    b.col(j) = Eigen::Map<const Vector>(rho_in.data(), d2);
    o.col(j) = Eigen::Map<const Vector>(rho_out.data(), d2);
  }

  Eigen::FullPivLU<Matrix> lu(b);
  if (!lu.isInvertible()) throw NumericsError("qpt: input basis is not informationally complete");
  const Matrix s = o * lu.inverse();  // superoperator on column-major vec

  // Choi matrix: block (i,j) holds E(|i><j|)
  Matrix choi(d2, d2);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const Vector col = s.col(j * d + i);
      choi.block(i * d, j * d, d, d) = Eigen::Map<const Matrix>(col.data(), d, d);
    }

  // chi = V^dag Choi V / d^2 with V's columns vec(P_m)
  Matrix v(d2, d2);
  for (int m = 0; m < d2; ++m) {
    const Matrix pm = pauli_matrix(n_qubits, m);
    v.col(m) = Eigen::Map<const Vector>(pm.data(), d2);
  }
  ChiMatrix out;
  out.n_qubits = n_qubits;
  out.chi = (v.adjoint() * choi * v) / double(d2);
  out.chi = 0.5 * (out.chi + out.chi.adjoint()).eval();

  Matrix t(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) t(i, j) = choi.block(i * d, j * d, d, d).trace();
  out.tp_residual = (t - Matrix::Identity(d, d)).norm();
  Eigen::SelfAdjointEigenSolver<Matrix> es(out.chi, Eigen::EigenvaluesOnly);
  out.cp_min_eig = es.eigenvalues().minCoeff();
  return out;
}

Matrix computational_superop(const QuantumChannel& channel, int n_qubits) {
  if (n_qubits < 1 || n_qubits > 4) throw ModelError("computational_superop supports 1..4 qubits");
  const int d = 1 << n_qubits;
  const int d2 = d * d;
  const HilbertLayout comp = computational_layout(n_qubits);
  const auto quartet = input_quartet();

  Matrix b = Matrix::Zero(d2, d2);
  Matrix o = Matrix::Zero(d2, d2);
  for (int j = 0; j < d2; ++j) {
    Vector psi = Vector::Ones(1);
    for (int q = 0; q < n_qubits; ++q) {
      const int digit = (j / int_pow(4, n_qubits - 1 - q)) % 4;
      psi = Eigen::kroneckerProduct(psi, quartet[static_cast<size_t>(digit)]).eval();
    }
    const Matrix rho_in = psi * psi.adjoint();
    const Matrix rho_out = computational_block(channel(StateVector(comp, psi)));
    b.col(j) = Eigen::Map<const Vector>(rho_in.data(), d2);
    o.col(j) = Eigen::Map<const Vector>(rho_out.data(), d2);
  }
  Eigen::FullPivLU<Matrix> lu(b);
  if (!lu.isInvertible())
    throw NumericsError("computational_superop: input basis is not informationally complete");
  return o * lu.inverse();
}

ChiMatrix ideal_chi(const Matrix& unitary) {
  const int d = static_cast<int>(unitary.rows());
  int n = 0;
  while ((1 << n) < d) ++n;
  if ((1 << n) != d || unitary.cols() != d) throw ModelError("ideal_chi needs a 2^n square matrix");
  if ((unitary.adjoint() * unitary - Matrix::Identity(d, d)).norm() > 1e-8 * std::sqrt(double(d)))
    throw ModelError("ideal_chi: input is not unitary");
  const int d2 = d * d;
  Vector c(d2);
  for (int m = 0; m < d2; ++m) c[m] = (pauli_matrix(n, m) * unitary).trace() / double(d);
  ChiMatrix out;
  out.n_qubits = n;
  out.chi = c * c.adjoint();
  out.tp_residual = 0;
  out.cp_min_eig = 0;
  return out;
}

double process_fidelity(const ChiMatrix& chi_exp, const ChiMatrix& chi_id) {
  if (chi_exp.n_qubits != chi_id.n_qubits) throw LayoutError("process_fidelity: size mismatch");
  const Complex f = (chi_id.chi * chi_exp.chi).trace();
  if (std::abs(f.imag()) > 1e-8) throw NumericsError("process_fidelity: imaginary residue");
  return f.real();
}

// --- schedule channels -----------------------------------------------------

namespace {

StateVector embed_computational(const StateVector& comp, const HilbertLayout& full, int n_qubits) {
  Vector v = Vector::Zero(full.dim());
  std::vector<int> levels(static_cast<size_t>(full.num_subsystems()), 0);
  for (int c = 0; c < comp.amplitudes.size(); ++c) {
    for (int q = 0; q < n_qubits; ++q)
      levels[static_cast<size_t>(q)] = (c >> (n_qubits - 1 - q)) & 1;
    v[full.basis_index(levels)] = comp.amplitudes[c];
  }
  return {full, v};
}

}  // namespace

QuantumChannel schedule_channel(const PulseSchedule& schedule, const DeviceSpec& device,
                                EvolveMode mode, const IntegratorOptions& opts) {
  const int n = static_cast<int>(schedule.active_qubits.size());
  return [schedule, &device, mode, opts, n](const StateVector& input) {
    if (!is_computational_layout(input.layout) || input.amplitudes.size() != (1 << n))
      throw LayoutError("schedule channel expects a computational input state");
    const StateVector full = embed_computational(input, schedule.layout(), n);
    if (mode == EvolveMode::Unitary) {
      auto res = run_schedule(schedule, device, full, mode, opts);
      return DensityOperator::from_pure(std::get<StateVector>(res.final_state));
    }
    auto res = run_schedule(schedule, device, DensityOperator::from_pure(full), mode, opts);
    return std::get<DensityOperator>(res.final_state);
  };
}

Matrix schedule_computational_unitary(const PulseSchedule& schedule, const DeviceSpec& device,
                                      const IntegratorOptions& opts) {
  const int n = static_cast<int>(schedule.active_qubits.size());
  const int d = 1 << n;
  const HilbertLayout full = schedule.layout();
  const HilbertLayout comp = computational_layout(n);
  Matrix u(d, d);
  std::vector<int> levels(static_cast<size_t>(full.num_subsystems()), 0);
  for (int c = 0; c < d; ++c) {
    Vector e = Vector::Zero(d);
    e[c] = 1;
    const StateVector in = embed_computational(StateVector(comp, e), full, n);
    auto res = run_schedule(schedule, device, in, EvolveMode::Unitary, opts);
    const auto& out = std::get<StateVector>(res.final_state);
    for (int r = 0; r < d; ++r) {
      for (int q = 0; q < n; ++q) levels[static_cast<size_t>(q)] = (r >> (n - 1 - q)) & 1;
      u(r, c) = out.amplitudes[full.basis_index(levels)];
    }
  }
  return u;
}

// --- Clifford groups -------------------------------------------------------

Eigen::Matrix2cd pulse_matrix(Pulse p) {
  auto rot = [](double azimuth, double angle) {
    Eigen::Matrix2cd x, y;
    x << 0, 1, 1, 0;
    y << 0, Complex(0, -1), Complex(0, 1), 0;
    const Eigen::Matrix2cd axis = std::cos(azimuth) * x + std::sin(azimuth) * y;
    return (std::cos(angle / 2) * Eigen::Matrix2cd::Identity() -
            Complex(0, 1) * std::sin(angle / 2) * axis)
        .eval();
  };
  switch (p) {
    case Pulse::I: return Eigen::Matrix2cd::Identity();
    case Pulse::X: return rot(0, kPi);
    case Pulse::Y: return rot(kPi / 2, kPi);
    case Pulse::Xp: return rot(0, kPi / 2);
    case Pulse::Xm: return rot(0, -kPi / 2);
    case Pulse::Yp: return rot(kPi / 2, kPi / 2);
    case Pulse::Ym: return rot(kPi / 2, -kPi / 2);
  }
  throw ModelError("unknown pulse");
}

namespace {

Eigen::Matrix2cd pulse_product(const std::vector<Pulse>& seq) {
  Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
  for (Pulse p : seq) m = pulse_matrix(p) * m;  // application order
  return m;
}

template <typename Mat>
std::string canonical_key(const Mat& m_in) {
  Mat m = m_in;
  bool normalized = false;
  for (int r = 0; r < m.rows() && !normalized; ++r)
    for (int c = 0; c < m.cols(); ++c)
      if (std::abs(m(r, c)) > 0.3) {
        m *= std::abs(m(r, c)) / m(r, c);
        normalized = true;
        break;
      }
  std::string key;
  key.reserve(static_cast<size_t>(m.size()) * 8);
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const auto push = [&key](double x) {
        const std::int32_t q = static_cast<std::int32_t>(std::lround(x * 1e6));
        key.append(reinterpret_cast<const char*>(&q), sizeof(q));
      };
      push(m(r, c).real());
      push(m(r, c).imag());
    }
  return key;
}

// 24 single-qubit Cliffords as pulse sequences in application order
const std::vector<std::vector<Pulse>>& clifford1_sequences() {
  using P = Pulse;
  static const std::vector<std::vector<Pulse>> seqs = {
      {P::I},        {P::X},        {P::Y},          {P::X, P::Y},
      {P::Yp, P::Xp}, {P::Ym, P::Xp}, {P::Yp, P::Xm}, {P::Ym, P::Xm},
      {P::Xp, P::Yp}, {P::Xm, P::Yp}, {P::Xp, P::Ym}, {P::Xm, P::Ym},
      {P::Xp},       {P::Xm},       {P::Yp},         {P::Ym},
      {P::Xp, P::Yp, P::Xm}, {P::Xp, P::Ym, P::Xm},
      {P::Yp, P::X}, {P::Ym, P::X}, {P::Xp, P::Y},   {P::Xm, P::Y},
      {P::Xp, P::Yp, P::Xp}, {P::Xm, P::Yp, P::Xm}};
  return seqs;
}

struct Clifford1Tables {
  std::vector<Clifford1> table;
  std::unordered_map<std::string, int> index;
};

const Clifford1Tables& c1_tables() {
  static const Clifford1Tables tables = [] {
    Clifford1Tables t;
    for (const auto& seq : clifford1_sequences()) {
      Clifford1 c;
      c.pulses = seq;
      c.u = pulse_product(seq);
      t.index.emplace(canonical_key(c.u), static_cast<int>(t.table.size()));
      t.table.push_back(std::move(c));
    }
    if (t.index.size() != 24)
      throw NumericsError("single-qubit Clifford table construction failed");
    return t;
  }();
  return tables;
}

struct Clifford2Tables {
  std::vector<Clifford2> table;
  std::unordered_map<std::string, int> index;
};

Eigen::Matrix4cd op_matrix(const TwoQubitOp& op) {
  static const Eigen::Matrix4cd cz = Eigen::Vector4cd(1, 1, 1, -1).asDiagonal();
  if (op.cz) return cz;
  return Eigen::kroneckerProduct(pulse_product(op.pulses[0]), pulse_product(op.pulses[1]));
}

const Clifford2Tables& c2_tables() {
  static const Clifford2Tables tables = [] {
    using P = Pulse;
    // axis-cycling set {I, A, A^2} and its Y/2-shifted copy
    const std::vector<std::vector<Pulse>> s1 = {{P::I}, {P::Xp, P::Yp}, {P::Ym, P::Xm}};
    const std::vector<std::vector<Pulse>> s1b = {{P::Yp}, {P::Xp, P::Y}, {P::Ym, P::Xm, P::Yp}};
    const TwoQubitOp cz_op{true, {}};
    const TwoQubitOp mid3{false, {std::vector<Pulse>{P::Yp}, std::vector<Pulse>{P::Xm}}};
    const TwoQubitOp mid4a{false, {std::vector<Pulse>{P::Ym}, std::vector<Pulse>{P::Yp}}};
    const TwoQubitOp mid4b{false, {std::vector<Pulse>{P::Yp}, std::vector<Pulse>{P::Ym}}};

    Clifford2Tables t;
    t.table.reserve(11520);
    const auto& c1 = c1_tables().table;
    auto add = [&t](std::vector<TwoQubitOp> ops) {
      Clifford2 c;
      c.ops = std::move(ops);
      Eigen::Matrix4cd u = Eigen::Matrix4cd::Identity();
      for (const auto& op : c.ops) {
        u = op_matrix(op) * u;
        if (op.cz) ++c.n_cz;
        else c.n_single_pulses += static_cast<int>(op.pulses[0].size() + op.pulses[1].size());
      }
      c.u = u;
      t.index.emplace(canonical_key(u), static_cast<int>(t.table.size()));
      t.table.push_back(std::move(c));
    };

    for (size_t ia = 0; ia < c1.size(); ++ia)
      for (size_t ib = 0; ib < c1.size(); ++ib) {
        const TwoQubitOp base{false, {c1[ia].pulses, c1[ib].pulses}};
        add({base});
        for (const auto& sa : s1)
          for (const auto& sb : s1b) {
            const TwoQubitOp slayer{false, {sa, sb}};
            add({base, cz_op, slayer});
            add({base, cz_op, mid3, cz_op, slayer});
          }
        add({base, cz_op, mid4a, cz_op, mid4b, cz_op, mid4b});
      }
    if (t.table.size() != 11520 || t.index.size() != 11520)
      throw NumericsError("two-qubit Clifford table construction failed");
    return t;
  }();
  return tables;
}

}  // namespace

const std::vector<Clifford1>& clifford1_table() { return c1_tables().table; }
const std::vector<Clifford2>& clifford2_table() { return c2_tables().table; }

int clifford1_index_of(const Eigen::Matrix2cd& u) {
  const auto& idx = c1_tables().index;
  auto it = idx.find(canonical_key(u));
  if (it == idx.end()) throw NumericsError("matrix is not a single-qubit Clifford");
  return it->second;
}

int clifford2_index_of(const Eigen::Matrix4cd& u) {
  const auto& idx = c2_tables().index;
  auto it = idx.find(canonical_key(u));
  if (it == idx.end()) throw NumericsError("matrix is not a two-qubit Clifford");
  return it->second;
}

CliffordSample clifford_sample(int n_qubits, std::mt19937_64& rng) {
  CliffordSample out;
  if (n_qubits == 1) {
    const auto& t = clifford1_table();
    std::uniform_int_distribution<int> pick(0, static_cast<int>(t.size()) - 1);
    out.index = pick(rng);
    out.u = t[static_cast<size_t>(out.index)].u;
    out.n_single_pulses = static_cast<int>(t[static_cast<size_t>(out.index)].pulses.size());
    out.n_cz = 0;
  } else if (n_qubits == 2) {
    const auto& t = clifford2_table();
    std::uniform_int_distribution<int> pick(0, static_cast<int>(t.size()) - 1);
    out.index = pick(rng);
    out.u = t[static_cast<size_t>(out.index)].u;
    out.n_single_pulses = t[static_cast<size_t>(out.index)].n_single_pulses;
    out.n_cz = t[static_cast<size_t>(out.index)].n_cz;
  } else {
    throw ModelError("clifford_sample supports 1 or 2 qubits");
  }
  return out;
}

// --- randomized benchmarking -----------------------------------------------

Matrix ideal_cz_superop() {
  const Eigen::Matrix4cd cz = Eigen::Vector4cd(1, 1, 1, -1).asDiagonal();
  return Eigen::kroneckerProduct(cz.conjugate(), cz);
}

Matrix superop_from_chi(const ChiMatrix& chi) {
  const int d = 1 << chi.n_qubits;
  const int d2 = d * d;
  Matrix s = Matrix::Zero(d2, d2);
  std::vector<Matrix> paulis;
  paulis.reserve(static_cast<size_t>(d2));
  for (int m = 0; m < d2; ++m) paulis.push_back(pauli_matrix(chi.n_qubits, m));
  for (int m = 0; m < d2; ++m)
    for (int n = 0; n < d2; ++n) {
      const Complex c = chi.chi(m, n);
      if (std::abs(c) < 1e-15) continue;
      s += c * Eigen::kroneckerProduct(paulis[static_cast<size_t>(n)].transpose(),
                                       paulis[static_cast<size_t>(m)]);
    }
  return s;
}

namespace {

// amplitude damping + pure dephasing on one qubit of a two-qubit density
void apply_qubit_decay(Eigen::Matrix4cd& rho, int q, double t_ns, double t1_us, double t_phi_us) {
  if (t_ns <= 0 || (t1_us <= 0 && t_phi_us <= 0)) return;
  const double t_us = t_ns * 1e-3;
  const double g = t1_us > 0 ? 1.0 - std::exp(-t_us / t1_us) : 0.0;
  const double keep = std::sqrt(1.0 - g) * (t_phi_us > 0 ? std::exp(-t_us / t_phi_us) : 1.0);
  const int stride = q == 0 ? 2 : 1;
  const int other = q == 0 ? 1 : 2;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const int i0 = a * other, j0 = b * other;
      const int i1 = i0 + stride, j1 = j0 + stride;
      const Complex r00 = rho(i0, j0), r01 = rho(i0, j1);
      const Complex r10 = rho(i1, j0), r11 = rho(i1, j1);
      rho(i0, j0) = r00 + g * r11;
      rho(i1, j1) = (1.0 - g) * r11;
      rho(i0, j1) = keep * r01;
      rho(i1, j0) = keep * r10;
    }
}

void apply_superop(Eigen::Matrix4cd& rho, const Matrix& s) {
  Eigen::Map<Eigen::Vector<Complex, 16>> v(rho.data());
  v = (s * v).eval();
}

struct RBSimContext {
  const Matrix* cz;
  const RBNoise* noise;
  double pulse_ns;
};

void apply_clifford_ops(Eigen::Matrix4cd& rho, const Clifford2& c, const RBSimContext& ctx) {
  for (const auto& op : c.ops) {
    if (op.cz) {
      apply_superop(rho, *ctx.cz);
      continue;
    }
    const Eigen::Matrix4cd layer =
        Eigen::kroneckerProduct(pulse_product(op.pulses[0]), pulse_product(op.pulses[1]));
    rho = layer * rho * layer.adjoint();
    const double dur =
        ctx.pulse_ns * static_cast<double>(std::max(op.pulses[0].size(), op.pulses[1].size()));
    for (int q = 0; q < 2; ++q)
      apply_qubit_decay(rho, q, dur, ctx.noise->t1_us[static_cast<size_t>(q)],
                        ctx.noise->t_phi_us[static_cast<size_t>(q)]);
  }
}

}  // namespace

RBFit fit_rb_decay(const std::vector<int>& m_list, const std::vector<double>& means,
                   int n_qubits) {
  if (m_list.size() != means.size() || m_list.empty())
    throw ModelError("rb fit needs matching, nonempty data");
  const double floor_b = 1.0 / double(1 << (2 * n_qubits));
  const double lo = *std::min_element(means.begin(), means.end());
  const double hi = *std::max_element(means.begin(), means.end());
  if (hi - lo < 1e-6) {
    const double mean = std::accumulate(means.begin(), means.end(), 0.0) / double(means.size());
    return {mean - floor_b, floor_b, 1.0};
  }
  const auto sse_of = [&](double p, double* a_out, double* b_out) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(m_list.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(m_list.size()));
    for (size_t i = 0; i < m_list.size(); ++i) {
      x(static_cast<Eigen::Index>(i), 0) = std::pow(p, m_list[i]);
      x(static_cast<Eigen::Index>(i), 1) = 1.0;
      y(static_cast<Eigen::Index>(i)) = means[i];
    }
    const Eigen::Vector2d ab = x.colPivHouseholderQr().solve(y);
    if (a_out) *a_out = ab[0];
    if (b_out) *b_out = ab[1];
    return (x * ab - y).squaredNorm();
  };
  double best_p = 0.5, best_sse = std::numeric_limits<double>::infinity();
  double span = 1.0, center = 0.5;
  for (int round = 0; round < 4; ++round) {
    const int steps = 400;
    for (int i = 0; i <= steps; ++i) {
      const double p = std::clamp(center - span / 2 + span * i / steps, 1e-4, 1.0);
      const double sse = sse_of(p, nullptr, nullptr);
      if (sse < best_sse) {
        best_sse = sse;
        best_p = p;
      }
    }
    center = best_p;
    span = 2.0 * span / steps;
  }
  if (best_p <= 2e-3)
    throw NumericsError("rb fit did not converge: decay rate at search boundary");
  RBFit fit;
  fit.p = best_p;
  sse_of(best_p, &fit.a, &fit.b);
  return fit;
}

RBResult rb_run(const Matrix& cz_superop, const RBNoise& noise, const RBConfig& config) {
  if (config.m_list.empty()) throw ModelError("rb needs sequence lengths");
  if (config.k_sequences < 2) throw ModelError("rb needs at least 2 sequences per length");
  if (cz_superop.rows() != 16 || cz_superop.cols() != 16)
    throw LayoutError("rb expects a 16x16 CZ superoperator");
  const bool has_error = noise.per_clifford_error.size() > 0;
  if (has_error && (noise.per_clifford_error.rows() != 16 || noise.per_clifford_error.cols() != 16))
    throw LayoutError("per-Clifford error must be a 16x16 superoperator");

  static const Eigen::Matrix4cd cz_ideal = Eigen::Vector4cd(1, 1, 1, -1).asDiagonal();
  const auto& table = clifford2_table();
  const RBSimContext ctx{&cz_superop, &noise, config.single_pulse_ns};

  RBResult out;
  out.m_list = config.m_list;
  out.k_sequences = config.k_sequences;
  for (size_t mi = 0; mi < config.m_list.size(); ++mi) {
    const int m = config.m_list[mi];
    if (m < 1) throw ModelError("rb sequence lengths must be positive");
    double sum = 0, sumsq = 0;
    for (int k = 0; k < config.k_sequences; ++k) {
      std::mt19937_64 rng(splitmix64(
          config.seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(mi) * 1000003ULL +
                                                 static_cast<std::uint64_t>(k) + 1ULL)));
      std::uniform_int_distribution<int> pick(0, static_cast<int>(table.size()) - 1);
      Eigen::Matrix4cd rho = Eigen::Matrix4cd::Zero();
      rho(0, 0) = 1;
      Eigen::Matrix4cd ideal = Eigen::Matrix4cd::Identity();
      for (int step = 0; step < m; ++step) {
        const Clifford2& c = table[static_cast<size_t>(pick(rng))];
        apply_clifford_ops(rho, c, ctx);
        ideal = c.u * ideal;
        if (has_error) apply_superop(rho, noise.per_clifford_error);
        if (config.interleave_cz) {
          apply_superop(rho, cz_superop);
          ideal = cz_ideal * ideal;
        }
      }
      const int ridx = clifford2_index_of(ideal.adjoint());
      apply_clifford_ops(rho, table[static_cast<size_t>(ridx)], ctx);
      double p00 = std::clamp(rho(0, 0).real(), 0.0, 1.0);
      if (config.shots > 0) {
        std::binomial_distribution<int> bin(config.shots, p00);
        p00 = double(bin(rng)) / double(config.shots);
      }
      sum += p00;
      sumsq += p00 * p00;
    }
    const double n = double(config.k_sequences);
    const double mean = sum / n;
    const double var = std::max(0.0, sumsq / n - mean * mean);
    out.mean_p00.push_back(mean);
    out.sem.push_back(std::sqrt(var / n));
  }
  const RBFit fit = fit_rb_decay(out.m_list, out.mean_p00, 2);
  out.a = fit.a;
  out.b = fit.b;
  out.p = fit.p;
  return out;
}

double interleaved_fidelity(double p_gate, double p_ref) {
  if (p_ref <= 0) throw ModelError("reference decay must be positive");
  return 1.0 - 0.75 * (1.0 - p_gate / p_ref);
}

// --- Bell-state metrics ----------------------------------------------------

BellMetrics bell_state_metrics(const DeviceSpec& device, const GateConfig& calibrated,
                               EvolveMode mode, const IntegratorOptions& opts) {
  if (calibrated.active_labels.size() != 2)
    throw ModelError("bell metrics need a two-qubit gate");
  if (calibrated.compensation_z_rad.empty())
    throw CalibrationError("bell metrics need a compensated (calibrated) gate");
  PulseSchedule schedule = build_cphase_schedule(device, calibrated);
  auto& prep = schedule.segments.front().rotations;
  prep.insert(prep.begin(), {Rotation{0, 0.0, kPi / 2}, Rotation{1, 0.0, kPi / 2}});

  const StateVector ground = StateVector::basis(schedule.layout(),
                                                std::vector<int>(3, 0));
  DensityOperator final_rho;
  if (mode == EvolveMode::Unitary) {
    auto res = run_schedule(schedule, device, ground, mode, opts);
    auto psi = std::get<StateVector>(res.final_state);
    apply_qubit_rotation(psi, 1, 0.0, -kPi / 2);
    final_rho = DensityOperator::from_pure(psi);
  } else {
    auto res = run_schedule(schedule, device, DensityOperator::from_pure(ground), mode, opts);
    final_rho = std::get<DensityOperator>(res.final_state);
    apply_qubit_rotation(final_rho, 1, 0.0, -kPi / 2);
  }

  BellMetrics out;
  Matrix block = computational_block(final_rho, &out.leakage);
  const double tr = block.trace().real();
  if (tr < 1e-9) throw NumericsError("bell metrics: no computational weight");
  const HilbertLayout comp = computational_layout(2);
  const DensityOperator rho(comp, block / tr, /*validate=*/false);

  Vector bell = Vector::Zero(4);
  bell[0] = bell[3] = 1.0 / std::sqrt(2.0);
  out.fidelity = state_fidelity(rho, DensityOperator::from_pure(StateVector(comp, bell)));
  out.concurrence = concurrence(rho).value;
  return out;
}

}  // namespace geomsim
