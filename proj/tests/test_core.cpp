#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "geomsim/core.hpp"

using namespace geomsim;

namespace {

StateVector bell_phi_plus() {
  HilbertLayout l({2, 2}, -1);
  Vector v = Vector::Zero(4);
  v[0] = v[3] = 1.0 / std::sqrt(2.0);
  return StateVector(l, v);
}

Matrix random_density(int d, std::mt19937& rng) {
  std::normal_distribution<double> g;
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = Complex(g(rng), g(rng));
  Matrix rho = a * a.adjoint();
  return rho / rho.trace().real();
}

}  // namespace

TEST_CASE("layout indexing round trip") {
  auto l = HilbertLayout::qubits_and_resonator(3, 8);
  CHECK(l.dim() == 27 * 8);
  CHECK(l.num_qubits() == 3);
  CHECK(l.resonator_index == 3);
  CHECK(l.basis_index({0, 0, 0, 0}) == 0);
  CHECK(l.basis_index({0, 0, 0, 5}) == 5);
  CHECK(l.basis_index({0, 0, 1, 0}) == 8);
  CHECK(l.basis_index({1, 0, 0, 0}) == 72);
  CHECK(l.basis_index({2, 1, 2, 7}) == 2 * 72 + 1 * 24 + 2 * 8 + 7);
  CHECK_THROWS_AS(l.basis_index({0, 0, 0}), LayoutError);
  CHECK_THROWS_AS(l.basis_index({0, 0, 0, 8}), LayoutError);
}

TEST_CASE("ladder operator algebra in the truncated space") {
  const int nf = 6;
  Matrix a = lowering_op(nf).matrix();
  Matrix ad = raising_op(nf).matrix();
  CHECK((ad - a.adjoint()).norm() == doctest::Approx(0).epsilon(tol::algebra));
  // [a, a^dag] = I everywhere except the truncation corner, which holds -(nf-1)
  Matrix comm = a * ad - ad * a;
  Matrix expected = Matrix::Identity(nf, nf);
  expected(nf - 1, nf - 1) = -(nf - 1);
  CHECK((comm - expected).norm() == doctest::Approx(0).epsilon(tol::algebra));
  CHECK((number_op(nf).matrix() - ad * a).norm() == doctest::Approx(0).epsilon(tol::algebra));
  CHECK(std::abs(a(2, 3) - std::sqrt(3.0)) < tol::algebra);
}

TEST_CASE("embed places operators on the right subsystem") {
  auto l = HilbertLayout::qubits_and_resonator(2, 4);
  auto n_res = embed(number_op(4), l.resonator_index, l);
  auto n_q0 = embed(number_op(3), 0, l);
  // commuting embeddings
  Matrix c = n_res.matrix() * n_q0.matrix() - n_q0.matrix() * n_res.matrix();
  CHECK(c.norm() == doctest::Approx(0).epsilon(tol::algebra));
  // expectation on a product basis state
  auto psi = StateVector::basis(l, {2, 1, 3});
  CHECK(expectation(n_res, psi).real() == doctest::Approx(3.0));
  CHECK(expectation(n_q0, psi).real() == doctest::Approx(2.0));
  CHECK(expectation(embed(number_op(3), 1, l), psi).real() == doctest::Approx(1.0));
}

TEST_CASE("spectral oracle: expectation on an eigenvector is the eigenvalue") {
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  const int d = 12;
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
  m = (m + Matrix(m.adjoint())).eval();
  Operator op(HilbertLayout::single(d), m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  for (int k = 0; k < d; ++k) {
    StateVector psi(HilbertLayout::single(d), es.eigenvectors().col(k));
    CHECK(expectation(op, psi).real() == doctest::Approx(es.eigenvalues()[k]).epsilon(1e-10));
    auto rho = DensityOperator::from_pure(psi);
    CHECK(expectation(op, rho).real() == doctest::Approx(es.eigenvalues()[k]).epsilon(1e-10));
  }
}

TEST_CASE("coherent state amplitudes and truncation bookkeeping") {
  const Complex alpha(0.9, -0.4);
  auto cs = coherent_state(alpha, 24);
  CHECK(!cs.truncation_warning);
  CHECK(cs.state.norm() == doctest::Approx(1.0).epsilon(1e-12));
  // Poisson statistics against closed forms
  Operator n(cs.state.layout, number_op(24).matrix());
  CHECK(expectation(n, cs.state).real() == doctest::Approx(std::norm(alpha)).epsilon(1e-10));
  Operator a(cs.state.layout, lowering_op(24).matrix());
  Complex a_exp = expectation(a, cs.state);
  CHECK(std::abs(a_exp - alpha) < 1e-9);
  // amplitude ratio c_{n+1}/c_n = alpha/sqrt(n+1)
  const auto& amp = cs.state.amplitudes;
  CHECK(std::abs(amp[3] / amp[2] - alpha / std::sqrt(3.0)) < 1e-12);

  // tail mass: Poisson weight above the truncation
  auto tight = coherent_state(2.0, 4);
  double nbar = 4.0;
  double cum = 0, fact = 1;
  for (int k = 0; k < 4; ++k) {
    if (k > 0) fact *= k;
    cum += std::exp(-nbar) * std::pow(nbar, k) / fact;
  }
  CHECK(tight.tail_mass == doctest::Approx(1.0 - cum).epsilon(1e-9));
  CHECK(tight.truncation_warning);
}

TEST_CASE("partial trace factorizes product states and preserves trace") {
  std::mt19937 rng(11);
  HilbertLayout l({3, 3, 4}, 2);
  Matrix ra = random_density(3, rng), rb = random_density(3, rng), rc = random_density(4, rng);
  Matrix full = Matrix::Zero(36, 36);
  for (int i = 0; i < 36; ++i)
    for (int j = 0; j < 36; ++j) {
      int ia = i / 12, ib = (i / 4) % 3, ic = i % 4;
      int ja = j / 12, jb = (j / 4) % 3, jc = j % 4;
      full(i, j) = ra(ia, ja) * rb(ib, jb) * rc(ic, jc);
    }
  DensityOperator rho(l, full);
  auto keep0 = partial_trace(rho, {0});
  CHECK((keep0.matrix - ra).norm() < 1e-10);
  auto keep02 = partial_trace(rho, {0, 2});
  CHECK(keep02.trace_real() == doctest::Approx(1.0).epsilon(1e-10));
  Matrix prod02 = Matrix::Zero(12, 12);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      prod02(i, j) = ra(i / 4, j / 4) * rc(i % 4, j % 4);
  CHECK((keep02.matrix - prod02).norm() < 1e-10);

  // entangled case: Bell state reduces to maximal mixture
  auto bell = DensityOperator::from_pure(bell_phi_plus());
  auto red = partial_trace(bell, {0});
  CHECK((red.matrix - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-12);
}

TEST_CASE("concurrence: Werner family oracle") {
  auto bell = DensityOperator::from_pure(bell_phi_plus());
  for (double p : {0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0}) {
    Matrix w = p * bell.matrix + (1.0 - p) * 0.25 * Matrix::Identity(4, 4);
    DensityOperator rho(bell.layout, w);
    double expected = std::max(0.0, (3.0 * p - 1.0) / 2.0);
    auto res = concurrence(rho);
    CHECK(res.value == doctest::Approx(expected).epsilon(1e-9));
    CHECK(res.leakage == doctest::Approx(0.0));
  }
  // separable product state
  auto prod = DensityOperator::from_pure(StateVector::basis(HilbertLayout({2, 2}, -1), {0, 1}));
  CHECK(concurrence(prod).value == doctest::Approx(0.0));
}

TEST_CASE("concurrence: qutrit input is projected with leakage accounting") {
  HilbertLayout l({3, 3}, -1);
  Vector v = Vector::Zero(9);
  const double leak = 0.2;
  v[l.basis_index({0, 0})] = std::sqrt((1 - leak) / 2);
  v[l.basis_index({1, 1})] = std::sqrt((1 - leak) / 2);
  v[l.basis_index({2, 0})] = std::sqrt(leak);
  auto res = concurrence(DensityOperator::from_pure(StateVector(l, v)));
  CHECK(res.value == doctest::Approx(1.0).epsilon(1e-9));  // renormalized Bell
  CHECK(res.leakage == doctest::Approx(leak).epsilon(1e-9));
  CHECK(res.leakage_warning);
}

TEST_CASE("state fidelity") {
  HilbertLayout l = HilbertLayout::single(3);
  Vector v0 = Vector::Zero(3), v1 = Vector::Zero(3);
  v0[0] = 1;
  v1[0] = std::sqrt(0.7);
  v1[1] = std::sqrt(0.3);
  auto r0 = DensityOperator::from_pure(StateVector(l, v0));
  auto r1 = DensityOperator::from_pure(StateVector(l, v1));
  CHECK(state_fidelity(r0, r1) == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(state_fidelity(r1, r1) == doctest::Approx(1.0).epsilon(1e-9));
  // pure vs mixed: F = <psi|rho|psi>
  std::mt19937 rng(3);
  Matrix mixed = random_density(3, rng);
  DensityOperator rho(l, mixed);
  double direct = (v1.adjoint() * mixed * v1)(0).real();
  CHECK(state_fidelity(r1, rho) == doctest::Approx(direct).epsilon(1e-8));
  // symmetry
  CHECK(state_fidelity(rho, r1) == doctest::Approx(direct).epsilon(1e-8));
}

TEST_CASE("computational block extracts the qubit subspace") {
  auto l = HilbertLayout::qubits_and_resonator(2, 3);
  Vector v = Vector::Zero(l.dim());
  v[l.basis_index({0, 1, 0})] = std::sqrt(0.5);
  v[l.basis_index({1, 0, 0})] = std::sqrt(0.3);
  v[l.basis_index({2, 0, 0})] = std::sqrt(0.1);  // qutrit leakage
  v[l.basis_index({0, 0, 1})] = std::sqrt(0.1);  // photon left in the bus
  auto rho = DensityOperator::from_pure(StateVector(l, v));
  double leakage = -1;
  Matrix block = computational_block(rho, &leakage);
  CHECK(block.rows() == 4);
  CHECK(block(1, 1).real() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(block(2, 2).real() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(std::abs(block(1, 2) - std::sqrt(0.15)) < 1e-12);
  // the stray photon is traced into |00>, only the qutrit |2> weight leaks
  CHECK(block(0, 0).real() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(block.trace().real() == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(leakage == doctest::Approx(0.1).epsilon(1e-12));
}
