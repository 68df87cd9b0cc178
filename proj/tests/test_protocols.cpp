#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "geomsim/protocols.hpp"

using namespace geomsim;

namespace {

constexpr double kPi = 3.14159265358979323846;

DeviceSpec table_device() {
  DeviceSpec d;
  d.omega_rb_mhz = 5585.0;
  d.resonator_t1_us = 13.0;
  const char* labels[5] = {"Q1", "Q2", "Q3", "Q4", "Q5"};
  const double sweet[5] = {6031, 6036, 6039, 6012, 6036};
  const double g[5] = {20.9, 20.6, 20.1, 18.8, 19.8};
  const double t1[5] = {14.8, 6.3, 18.3, 17.2, 8.7};
  const double t2[5] = {13.2, 3.5, 10.0, 23.8, 13.0};
  const double anh[5] = {245.0, 242.0, 245.0, 243.0, 244.0};
  for (int i = 0; i < 5; ++i) {
    QubitParams q;
    q.label = labels[i];
    q.omega01_sweet_mhz = sweet[i];
    q.anharmonicity_mhz = anh[i];
    q.g01_mhz = g[i];
    q.t1_us = t1[i];
    q.t2_star_us = t2[i];
    q.t_phi_us = 15.0;
    d.qubits.push_back(q);
  }
  return d;
}

// CZ on Q1/Q5: 0-1 transitions 264 and 285 MHz above omega_r,
// 1-2 transitions at 19 and 41 MHz
GateConfig cz_config(double omega_mhz) {
  GateConfig c;
  c.active_labels = {"Q1", "Q5"};
  c.detuning01_mhz = {264.0, 285.0};
  c.anharmonicity_override_mhz = {264.0 - 19.0, 285.0 - 41.0};
  c.drive_omega_mhz = omega_mhz;
  c.drive_delta_mhz = 4.0;
  c.n_fock = 8;
  return c;
}

GateConfig q3_config(double omega_mhz) {
  GateConfig c;
  c.active_labels = {"Q3"};
  c.detuning01_mhz = {284.0};
  c.anharmonicity_override_mhz = {284.0 - 39.0};
  c.drive_omega_mhz = omega_mhz;
  c.drive_delta_mhz = 4.0;
  c.n_fock = 8;
  return c;
}

}  // namespace

TEST_CASE("wrap_to_pi maps onto (-pi, pi]") {
  CHECK(wrap_to_pi(0.0) == 0.0);
  CHECK(wrap_to_pi(kPi) == doctest::Approx(kPi));
  CHECK(wrap_to_pi(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_to_pi(3 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_to_pi(kPi + 0.1) == doctest::Approx(-kPi + 0.1));
  CHECK(wrap_to_pi(-7.0) == doctest::Approx(-7.0 + kTwoPi));
}

TEST_CASE("operating point resolves omega_r self-consistently") {
  auto dev = table_device();
  auto cfg = cz_config(2.65);
  auto rp = resolve_operating_point(dev, cfg);

  // detunings measured from the resolved omega_r
  CHECK(rp.point.omega01_gate_mhz[0] - rp.omega_r_mhz == doctest::Approx(264.0).epsilon(1e-12));
  CHECK(rp.point.omega01_gate_mhz[1] - rp.omega_r_mhz == doctest::Approx(285.0).epsilon(1e-12));
  // fixed point: the all-ground conditional frequency reproduces omega_r
  CHECK(conditional_resonator_frequency(dev, rp.point, {0, 0}) ==
        doctest::Approx(rp.omega_r_mhz).epsilon(1e-12));
  CHECK(rp.omega_d_mhz == doctest::Approx(rp.omega_r_mhz + 4.0));
  CHECK(rp.omega_r_mhz < dev.omega_rb_mhz);  // pulled down by both lambdas

  // collision guard
  auto bad = cfg;
  bad.detuning01_mhz = {264.0, 269.0};
  CHECK_THROWS_AS(resolve_operating_point(dev, bad), ModelError);
}

TEST_CASE("schedule carries freeze warnings when 1-2 transitions stray") {
  auto dev = table_device();
  auto cfg = q3_config(2.0);
  std::vector<std::string> warnings;
  auto sched = build_cphase_schedule(dev, cfg, &warnings);
  CHECK(warnings.empty());
  CHECK(sched.segments.size() == 3);  // step-in, drive, step-out
  CHECK(sched.segments[1].duration_ns == doctest::Approx(250.0));

  auto far = cfg;
  far.detuning01_mhz = {350.0};  // 1-2 lands 105 MHz above omega_r
  build_cphase_schedule(dev, far, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("freeze") != std::string::npos);
}

TEST_CASE("phase table decomposition: ideal gates and exact reconstruction") {
  // textbook CZ: phase pi on |11>
  auto cz = make_phase_table(2, {0, 0, 0, kPi}, {0, 0, 0, 0});
  CHECK(cz.conditional_phase_rad == doctest::Approx(kPi));
  CHECK(cz.coeffs_rad[1] == doctest::Approx(0.0));
  CHECK(cz.coeffs_rad[2] == doctest::Approx(0.0));

  // gate convention used here: phase pi on |00> — same top coefficient
  auto cz_paper = make_phase_table(2, {kPi, 0, 0, 0}, {0, 0, 0, 0});
  CHECK(cz_paper.conditional_phase_rad == doctest::Approx(kPi));

  // identity
  auto id = make_phase_table(2, {0, 0, 0, 0}, {0, 0, 0, 0});
  CHECK(id.conditional_phase_rad == 0.0);
  for (double c : id.coeffs_rad) CHECK(c == 0.0);

  // random 3-qubit table: subset-sum oracle for every coefficient, and the
  // zeta transform reproduces the inputs exactly
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<double> phases(8);
  for (auto& p : phases) p = u(rng);
  auto t = make_phase_table(3, phases, std::vector<double>(8, 0.0));
  for (int b = 0; b < 8; ++b) {
    double expected = 0;
    for (int a = 0; a < 8; ++a)
      if ((a & b) == a) expected += ((__builtin_popcount(b ^ a) % 2) ? -1.0 : 1.0) * phases[a];
    CHECK(t.coeffs_rad[b] == doctest::Approx(expected).epsilon(1e-12));
  }
  auto rebuilt = t.reconstruct();
  for (int m = 0; m < 8; ++m) CHECK(rebuilt[m] == doctest::Approx(phases[m]).epsilon(1e-12));

  // leakage threshold
  CHECK_THROWS_AS(make_phase_table(1, {0, 0}, {0.0, 0.2}), ModelError);
}

TEST_CASE("zero-drive schedule has (near) zero conditional phase") {
  auto dev = table_device();
  auto sched = build_cphase_schedule(dev, cz_config(0.0));
  auto table = extract_conditional_phases(sched, dev);
  // no drive, no geometric phase; the residual bus-mediated ZZ over 250 ns is
  // ~0.1 rad and the sudden frequency steps leave ~(g/Delta)^2 hybridization
  CHECK(std::abs(table.conditional_phase_rad) < 0.2);
  CHECK(table.max_leakage < 0.05);
}

TEST_CASE("toy-model amplitude calibration inverts the closed form") {
  // beta = -2 pi Omega^2 / delta^2
  auto beta4 = [](double osq) { return -kTwoPi * osq / 16.0; };
  const double omega = calibrate_amplitude_fn(beta4, 4.0, kPi);
  CHECK(omega == doctest::Approx(std::sqrt(8.0)).epsilon(1e-6));

  auto beta8 = [](double osq) { return -kTwoPi * osq / 64.0; };
  const double omega_wide = calibrate_amplitude_fn(beta8, 8.0, kPi);
  CHECK(omega_wide * omega_wide == doctest::Approx(4.0 * 8.0).epsilon(1e-5));

  // a phase that never reaches the target fails loudly
  auto flat = [](double) { return -0.3; };
  CHECK_THROWS_AS(calibrate_amplitude_fn(flat, 4.0, kPi), CalibrationError);
}

TEST_CASE("CZ amplitude calibration lands near the reported drive power") {
  auto dev = table_device();
  auto cfg = cz_config(0.0);
  const double omega = calibrate_amplitude(dev, cfg);
  const double osq = omega * omega;
  CHECK(osq > 5.5);
  CHECK(osq < 8.5);

  // calibrated gate: conditional phase is pi within the stated tolerance
  cfg.drive_omega_mhz = omega;
  auto table = extract_conditional_phases(build_cphase_schedule(dev, cfg), dev);
  CHECK(std::abs(std::abs(table.conditional_phase_rad) - kPi) < 1e-3);
}

TEST_CASE("compensation zeroes the local coefficients and is idempotent") {
  auto dev = table_device();
  auto cfg = cz_config(0.0);
  cfg.drive_omega_mhz = calibrate_amplitude(dev, cfg);

  auto table = extract_conditional_phases(build_cphase_schedule(dev, cfg), dev);
  auto z = calibrate_compensation(table);
  CHECK(z.size() == 2);

  cfg.compensation_z_rad = z;
  auto compensated = extract_conditional_phases(build_cphase_schedule(dev, cfg), dev);
  CHECK(std::abs(wrap_to_pi(compensated.coeffs_rad[1])) < 1e-6);
  CHECK(std::abs(wrap_to_pi(compensated.coeffs_rad[2])) < 1e-6);
  CHECK(std::abs(std::abs(compensated.conditional_phase_rad) - kPi) < 1e-3);

  // second round has nothing left to correct
  auto z2 = calibrate_compensation(compensated);
  CHECK(std::abs(z2[0]) < 1e-6);
  CHECK(std::abs(z2[1]) < 1e-6);

  // synthetic: a purely local table compensates to exactly zero
  auto local = make_phase_table(2, {0.0, 0.4, -0.9, 0.4 - 0.9}, {0, 0, 0, 0});
  auto zl = calibrate_compensation(local);
  CHECK(zl[0] == doctest::Approx(-0.4));
  CHECK(zl[1] == doctest::Approx(0.9));
  CHECK(local.conditional_phase_rad == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("virtual-Z and physical-Z schedules act identically") {
  auto dev = table_device();
  auto cfg = cz_config(2.65);
  cfg.compensation_z_rad = {0.8, -1.3};

  cfg.compensation = GateConfig::Compensation::VirtualZ;
  auto sv = build_cphase_schedule(dev, cfg);
  cfg.compensation = GateConfig::Compensation::PhysicalZ;
  auto sp = build_cphase_schedule(dev, cfg);

  const auto layout = sv.layout();
  Vector v = Vector::Zero(layout.dim());
  v[layout.basis_index({0, 0, 0})] = 0.5;
  v[layout.basis_index({0, 1, 0})] = 0.5;
  v[layout.basis_index({1, 0, 0})] = 0.5;
  v[layout.basis_index({1, 1, 0})] = 0.5;
  StateVector psi0(layout, v);

  auto a = std::get<StateVector>(run_schedule(sv, dev, psi0, EvolveMode::Unitary).final_state);
  auto b = std::get<StateVector>(run_schedule(sp, dev, psi0, EvolveMode::Unitary).final_state);
  Complex overlap = a.amplitudes.dot(b.amplitudes);
  CHECK(std::abs(overlap) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK((a.amplitudes - b.amplitudes).norm() < 1e-9);  // identical, not just equal up to phase
}

TEST_CASE("ramsey with zero drive gives the bare interference fringe") {
  auto dev = table_device();
  auto cfg = q3_config(0.0);
  std::vector<double> thetas;
  for (int i = 0; i < 12; ++i) thetas.push_back(kTwoPi * i / 12);
  auto surface = ramsey_experiment(dev, cfg, 0, {}, {0.0}, thetas);
  // pointwise: hybridization with the bus costs ~(g/Delta)^2 of contrast
  std::vector<double> row(thetas.size());
  for (size_t i = 0; i < thetas.size(); ++i) {
    row[i] = surface.p1(0, static_cast<Eigen::Index>(i));
    CHECK(row[i] == doctest::Approx(0.5 * (1 + std::cos(thetas[i]))).epsilon(0.01));
  }
  // the phase itself is referenced out exactly
  auto fit = fit_ramsey_phase(thetas, row);
  CHECK(std::abs(fit.beta_rad) < 1e-6);
  CHECK(fit.contrast > 0.98);
}

TEST_CASE("ramsey phase at Omega = 2 MHz sits near -pi/2") {
  auto dev = table_device();
  auto cfg = q3_config(0.0);
  std::vector<double> thetas;
  for (int i = 0; i < 16; ++i) thetas.push_back(kTwoPi * i / 16);
  auto surface = ramsey_experiment(dev, cfg, 0, {}, {4.0}, thetas);
  std::vector<double> row(thetas.size());
  for (size_t i = 0; i < row.size(); ++i) row[i] = surface.p1(0, static_cast<Eigen::Index>(i));
  auto fit = fit_ramsey_phase(thetas, row);
  // beta = -2 pi (Omega/delta)^2 = -pi/2, with small stark corrections
  CHECK(fit.beta_rad == doctest::Approx(-kPi / 2).epsilon(0.05));
  CHECK(fit.contrast > 0.9);
}

TEST_CASE("geometric phase law: -beta linear in Omega^2 with slope 2pi/delta^2") {
  auto dev = table_device();
  auto cfg = q3_config(0.0);
  std::vector<double> thetas;
  for (int i = 0; i < 16; ++i) thetas.push_back(kTwoPi * i / 16);
  std::vector<double> osq = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
  auto surface = ramsey_experiment(dev, cfg, 0, {}, osq, thetas);
  auto fits = fit_ramsey_family(surface);

  // least-squares slope of -beta against Omega^2
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(osq.size());
  for (size_t i = 0; i < osq.size(); ++i) {
    sx += osq[i];
    sy += -fits[i].beta_rad;
    sxx += osq[i] * osq[i];
    sxy += osq[i] * -fits[i].beta_rad;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double expected = kTwoPi / 16.0;
  CHECK(std::abs(slope - expected) / expected < 0.05);
  // family unwrapping keeps the sequence monotone past the branch cut
  for (size_t i = 1; i < fits.size(); ++i) CHECK(fits[i].beta_rad < fits[i - 1].beta_rad + 1e-9);
}

TEST_CASE("ramsey fit: exact curve, noise robustness, contrast guard") {
  std::vector<double> thetas;
  for (int i = 0; i < 24; ++i) thetas.push_back(kTwoPi * i / 24);

  std::vector<double> clean(thetas.size());
  for (size_t i = 0; i < thetas.size(); ++i)
    clean[i] = 0.5 * (1 + std::cos(thetas[i] - kPi / 3));
  auto fit = fit_ramsey_phase(thetas, clean);
  CHECK(fit.beta_rad == doctest::Approx(-kPi / 3).epsilon(1e-9));
  CHECK(fit.contrast == doctest::Approx(1.0).epsilon(1e-9));

  // Monte-Carlo noise study: sigma = 0.02 additive noise
  std::mt19937 rng(7);
  std::normal_distribution<double> gauss(0.0, 0.02);
  int within = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> noisy = clean;
    for (auto& p : noisy) p += gauss(rng);
    auto f = fit_ramsey_phase(thetas, noisy);
    if (std::abs(f.beta_rad - (-kPi / 3)) < 0.05) ++within;
  }
  CHECK(within >= trials * 95 / 100);

  // flat data: no contrast
  std::vector<double> flat(thetas.size(), 0.5);
  CHECK_THROWS_AS(fit_ramsey_phase(thetas, flat), ModelError);

  // insufficient span
  std::vector<double> short_thetas = {0.0, 0.5, 1.0, 1.5};
  std::vector<double> short_p1 = {1.0, 0.9, 0.7, 0.5};
  CHECK_THROWS_AS(fit_ramsey_phase(short_thetas, short_p1), ModelError);
}

TEST_CASE("control qubit in |1> suppresses the geometric phase") {
  auto dev = table_device();
  auto cfg = cz_config(0.0);
  std::vector<double> thetas;
  for (int i = 0; i < 16; ++i) thetas.push_back(kTwoPi * i / 16);
  const std::vector<double> osq = {7.0};

  auto s0 = ramsey_experiment(dev, cfg, 0, {0}, osq, thetas);
  auto s1 = ramsey_experiment(dev, cfg, 0, {1}, osq, thetas);
  std::vector<double> r0(thetas.size()), r1(thetas.size());
  for (size_t i = 0; i < thetas.size(); ++i) {
    r0[i] = s0.p1(0, static_cast<Eigen::Index>(i));
    r1[i] = s1.p1(0, static_cast<Eigen::Index>(i));
  }
  auto f0 = fit_ramsey_phase(thetas, r0);
  auto f1 = fit_ramsey_phase(thetas, r1);
  // control |0>: full geometric phase ~ -pi; control |1>: small dynamical residue
  CHECK(std::abs(f0.beta_rad) > 2.0);
  CHECK(std::abs(f1.beta_rad) < 0.6);
}
