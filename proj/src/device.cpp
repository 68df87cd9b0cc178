#include "geomsim/device.hpp"

#include <algorithm>
#include <cmath>

namespace geomsim {

void QubitParams::validate() const {
  if (t1_us <= 0 || t_phi_us <= 0) throw ModelError(label + ": coherence times must be positive");
  if (g01_mhz <= 0) throw ModelError(label + ": g01 must be positive");
  if (anharmonicity_mhz <= 0) throw ModelError(label + ": anharmonicity must be positive");
}

void DeviceSpec::validate() const {
  if (qubits.empty()) throw ModelError("device needs at least one qubit");
  if (omega_rb_mhz <= 0) throw ModelError("bus bare frequency must be positive");
  for (const auto& q : qubits) q.validate();
  for (size_t i = 0; i < qubits.size(); ++i)
    for (size_t j = i + 1; j < qubits.size(); ++j)
      if (qubits[i].label == qubits[j].label) throw ModelError("duplicate qubit label");
}

int DeviceSpec::index_of(const std::string& label) const {
  for (size_t i = 0; i < qubits.size(); ++i)
    if (qubits[i].label == label) return static_cast<int>(i);
  throw ModelError("unknown qubit label: " + label);
}

void GateOperatingPoint::validate(const DeviceSpec& device) const {
  if (drive_delta_mhz == 0) throw ModelError("drive detuning delta must be nonzero");
  if (duration_ns <= 0) throw ModelError("gate duration must be positive");
  if (active_qubits.empty()) throw ModelError("operating point needs active qubits");
  if (omega01_gate_mhz.size() != active_qubits.size() ||
      anharmonicity_mhz.size() != active_qubits.size())
    throw ModelError("operating point field lengths disagree");
  for (size_t i = 0; i < active_qubits.size(); ++i) {
    const int q = active_qubits[i];
    if (q < 0 || q >= static_cast<int>(device.qubits.size()))
      throw ModelError("active qubit index out of range");
    if (omega01_gate_mhz[i] <= device.omega_rb_mhz)
      throw ModelError("gate frequencies must be blue-detuned from the bus");
  }
  if (n_fock < 2) throw ModelError("n_fock must be >= 2");
}

double dispersive_shift(double g01_mhz, double omega01_mhz, double omega_rb_mhz) {
  const double delta = omega01_mhz - omega_rb_mhz;
  if (g01_mhz == 0) return 0;
  if (std::abs(delta) <= 3.0 * std::abs(g01_mhz))
    throw ModelError("dispersive regime violated: |omega01 - omega_rb| <= 3 g01");
  return g01_mhz * g01_mhz / delta;
}

double conditional_resonator_frequency(const DeviceSpec& device, const GateOperatingPoint& point,
                                       const std::vector<int>& qubit_states) {
  if (qubit_states.size() != point.active_qubits.size())
    throw ModelError("qubit state list length mismatch");
  double omega = device.omega_rb_mhz;
  for (size_t i = 0; i < point.active_qubits.size(); ++i) {
    const auto& q = device.qubits[point.active_qubits[i]];
    const double lam = dispersive_shift(q.g01_mhz, point.omega01_gate_mhz[i], device.omega_rb_mhz);
    omega -= lam;
    if (qubit_states[i] == 1) omega += 2.0 * lam;
  }
  return omega;
}

double drive_frequency(const DeviceSpec& device, const GateOperatingPoint& point) {
  const std::vector<int> ground(point.active_qubits.size(), 0);
  return conditional_resonator_frequency(device, point, ground) + point.drive_delta_mhz;
}

Operator build_drive_frame_hamiltonian(const DeviceSpec& device, const GateOperatingPoint& point,
                                       const std::vector<double>& omega01_mhz,
                                       double drive_omega_mhz, double omega_d_mhz) {
  point.validate(device);
  const int n = static_cast<int>(point.active_qubits.size());
  const int nf = point.n_fock;
  const HilbertLayout layout = point.layout();
  const int d = layout.dim();

  Matrix h = Matrix::Zero(d, d);

  std::vector<int> levels(n + 1);
  auto decode = [&](int idx) {
    levels[n] = idx % nf;
    idx /= nf;
    for (int q = n - 1; q >= 0; --q) {
      levels[q] = idx % 3;
      idx /= 3;
    }
  };
  auto encode = [&]() {
    int idx = 0;
    for (int q = 0; q < n; ++q) idx = idx * 3 + levels[q];
    return idx * nf + levels[n];
  };

  for (int j = 0; j < d; ++j) {
    decode(j);
    const int m = levels[n];

    double diag = (device.omega_rb_mhz - omega_d_mhz) * m;
    for (int q = 0; q < n; ++q) {
      const double w01 = omega01_mhz[q];
      const double w12 = w01 - point.anharmonicity_mhz[q];
      if (levels[q] == 1) diag += w01 - omega_d_mhz;
      if (levels[q] == 2) diag += w01 + w12 - 2.0 * omega_d_mhz;
    }
    h(j, j) += diag;

    // resonator drive Omega (a + a^dag): only the lowering part here,
    // the raising part enters through the added conjugate below
    if (m >= 1) {
      levels[n] = m - 1;
      h(encode(), j) += drive_omega_mhz * std::sqrt(static_cast<double>(m));
      levels[n] = m;
    }

    for (int q = 0; q < n; ++q) {
      const auto& par = device.qubits[point.active_qubits[q]];
      // exchange: a |1><0| and a |2><1|
      if (m >= 1 && levels[q] == 0) {
        levels[q] = 1;
        levels[n] = m - 1;
        h(encode(), j) += par.g01_mhz * std::sqrt(static_cast<double>(m));
        levels[q] = 0;
        levels[n] = m;
      }
      if (m >= 1 && levels[q] == 1) {
        levels[q] = 2;
        levels[n] = m - 1;
        h(encode(), j) += par.g12_mhz() * std::sqrt(static_cast<double>(m));
        levels[q] = 1;
        levels[n] = m;
      }
      // crosstalk drive k Omega |2><1|
      if (levels[q] == 1) {
        levels[q] = 2;
        h(encode(), j) += par.crosstalk_k * drive_omega_mhz;
        levels[q] = 1;
      }
    }
  }

  Matrix offdiag = h;
  offdiag.diagonal().setZero();
  h += offdiag.adjoint().eval();
  h *= mhz_to_angular(1.0);  // MHz -> rad/ns
  return Operator(layout, std::move(h));
}

Operator build_drive_frame_hamiltonian(const DeviceSpec& device, const GateOperatingPoint& point) {
  return build_drive_frame_hamiltonian(device, point, point.omega01_gate_mhz,
                                       point.drive_omega_mhz, drive_frequency(device, point));
}

DressedPair dressed_pair(double delta_prime_mhz, double g12_mhz, double delta_mhz,
                         double lambda_mhz) {
  if (g12_mhz <= 0) throw ModelError("dressed_pair: g12 must be positive");
  DressedPair out;
  const double root = std::sqrt(4.0 * g12_mhz * g12_mhz + delta_prime_mhz * delta_prime_mhz);
  out.e_plus = 0.5 * (delta_prime_mhz + root);
  out.e_minus = 0.5 * (delta_prime_mhz - root);
  out.theta_mix = std::atan2(2.0 * g12_mhz, delta_prime_mhz);
  out.delta_plus = delta_mhz - 2.0 * lambda_mhz - out.e_plus;
  out.delta_minus = delta_mhz - 2.0 * lambda_mhz - out.e_minus;
  return out;
}

DressedTriple dressed_triple(double dp1, double dp2, double g1, double g2, double delta_mhz,
                             double lambda_sum_mhz) {
  if (g1 <= 0 || g2 <= 0) throw ModelError("dressed_triple: couplings must be positive");

  // characteristic polynomial of [[dp1,0,g1],[0,dp2,g2],[g1,g2,0]]
  const double A = -(dp1 + dp2);
  const double B = dp1 * dp2 - g1 * g1 - g2 * g2;
  const double C = dp1 * g2 * g2 + dp2 * g1 * g1;
  const double p = B - A * A / 3.0;
  const double q = 2.0 * A * A * A / 27.0 - A * B / 3.0 + C;
  const double shift = (dp1 + dp2) / 3.0;

  const Complex lam = std::sqrt(Complex(q * q / 4.0 + p * p * p / 27.0, 0.0));
  const Complex u = std::pow(-q / 2.0 + lam, 1.0 / 3.0);
  const Complex v = std::pow(-q / 2.0 - lam, 1.0 / 3.0);
  const Complex eta(-0.5, 0.5 * std::sqrt(3.0));

  std::array<Complex, 3> roots = {u + v, eta * u + eta * eta * v, eta * eta * u + eta * v};
  std::array<double, 3> e{};
  const double scale = std::max({std::abs(dp1), std::abs(dp2), g1, g2, 1.0});
  for (int k = 0; k < 3; ++k) {
    if (std::abs(roots[k].imag()) > 1e-9 * scale)
      throw ModelError("dressed_triple: cubic branch produced a complex eigenvalue");
    e[k] = roots[k].real() + shift;
  }
  std::sort(e.begin(), e.end());

  // cross-validation against a numeric eigensolve guards the branch bookkeeping
  Eigen::Matrix3d m;
  m << dp1, 0, g1, 0, dp2, g2, g1, g2, 0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(e[k] - es.eigenvalues()(k)) > 1e-9 * scale)
      throw ModelError("dressed_triple: closed-form roots disagree with eigensolve");
  }

  DressedTriple out;
  out.e = e;
  out.delta_prime_1 = dp1;
  out.delta_prime_2 = dp2;
  out.g1_mhz = g1;
  out.g2_mhz = g2;
  for (int k = 0; k < 3; ++k) {
    const double ek = e[k];
    Eigen::Vector3d w(1.0, (ek * (ek - dp1) - g1 * g1) / (g1 * g2), (ek - dp1) / g1);
    out.weights.col(k) = w / w.norm();
    out.delta[k] = delta_mhz - 2.0 * lambda_sum_mhz - ek;
  }
  return out;
}

double stark_shift_single_unguarded(double omega, double k, const DressedPair& pair) {
  const double c = std::cos(pair.theta_mix / 2.0);
  const double s = std::sin(pair.theta_mix / 2.0);
  const double plus = k * c + s;
  const double minus = k * s - c;
  return omega * omega * (plus * plus / pair.delta_plus + minus * minus / pair.delta_minus);
}

double stark_shift_single(double omega, double k, const DressedPair& pair) {
  const double drive = std::max(std::abs(omega), std::abs(k * omega));
  if (std::min(std::abs(pair.delta_plus), std::abs(pair.delta_minus)) < 5.0 * drive)
    throw ModelError("stark_shift_single: |delta_pm| >= 5 max(Omega, k Omega) violated");
  return stark_shift_single_unguarded(omega, k, pair);
}

double stark_shift_double(double omega, double k1, double k2, const DressedTriple& t) {
  const double drive = std::max({std::abs(omega), std::abs(k1 * omega), std::abs(k2 * omega)});
  double eps = 0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(t.delta[k]) < 5.0 * drive)
      throw ModelError("stark_shift_double: |delta_k| >= 5 max(Omega, Omega'_j) violated");
    const double amp = t.weights(0, k) * k1 * omega + t.weights(1, k) * k2 * omega +
                       t.weights(2, k) * omega;
    eps += amp * amp / t.delta[k];
  }
  return eps;
}

double stark_shift_at_delta_prime(const DeviceSpec& device, const GateOperatingPoint& point,
                                  int qubit_index, double k, double dp) {
  size_t slot = 0;
  for (; slot < point.active_qubits.size(); ++slot)
    if (point.active_qubits[slot] == qubit_index) break;
  if (slot == point.active_qubits.size())
    throw ModelError("stark profile: qubit is not active at this operating point");
  const auto& par = device.qubits[qubit_index];
  const double anh = point.anharmonicity_mhz[slot];
  const double g = par.g01_mhz;
  // Delta' = Delta - anh - g^2/Delta solved for the qubit-bus detuning Delta
  const double b = dp + anh;
  const double big_delta = 0.5 * (b + std::sqrt(b * b + 4.0 * g * g));
  const double lambda = g * g / big_delta;
  const DressedPair pair = dressed_pair(dp, par.g12_mhz(), point.drive_delta_mhz, lambda);
  return stark_shift_single_unguarded(point.drive_omega_mhz, k, pair);
}

double solve_zero_stark(const DeviceSpec& device, const GateOperatingPoint& point, int qubit_index,
                        double k) {
  const double lo = -20.0, hi = 80.0, step = 0.25;
  auto eps = [&](double dp) {
    return stark_shift_at_delta_prime(device, point, qubit_index, k, dp);
  };

  std::vector<StarkScanPoint> profile;
  std::vector<double> roots;
  double prev_dp = lo, prev_eps = eps(lo);
  profile.push_back({prev_dp, prev_eps});
  for (double dp = lo + step; dp <= hi + 1e-9; dp += step) {
    const double e = eps(dp);
    profile.push_back({dp, e});
    if (std::isfinite(prev_eps) && std::isfinite(e) && prev_eps * e < 0) {
      double a = prev_dp, b = dp, fa = prev_eps;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = eps(mid);
        if (fa * fm <= 0) {
          b = mid;
        } else {
          a = mid;
          fa = fm;
        }
      }
      const double root = 0.5 * (a + b);
      if (std::abs(eps(root)) < 1e-6) roots.push_back(root);
    }
    prev_dp = dp;
    prev_eps = e;
  }
  if (roots.empty())
    throw NoRootError("solve_zero_stark: no sign change of epsilon in the scan window",
                      std::move(profile));
  return *std::min_element(roots.begin(), roots.end(),
                           [](double a, double b) { return std::abs(a) < std::abs(b); });
}

double dynamical_phase(double epsilon_mhz, double duration_ns) {
  return -kTwoPi * epsilon_mhz * duration_ns * 1e-3;
}

double dynamical_phase_variance(double theta_d, double sigma_mhz, double gamma_per_us,
                                double duration_ns, double omega_mhz) {
  if (omega_mhz <= 0) throw ModelError("phase variance: Omega must be positive");
  const double x = gamma_per_us * duration_ns * 1e-3;  // Gamma * T
  double factor;
  if (x < 1e-4) {
    factor = 0.5 - x / 6.0 + x * x / 24.0;  // series of 1/x + (e^{-x}-1)/x^2
  } else {
    factor = 1.0 / x + (std::expm1(-x)) / (x * x);
  }
  const double ratio = sigma_mhz / omega_mhz;
  return theta_d * theta_d * 8.0 * ratio * ratio * factor;
}

}  // namespace geomsim
