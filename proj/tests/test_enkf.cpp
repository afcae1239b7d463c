#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "dualenkf/enkf.hpp"
#include "dualenkf/generators.hpp"
#include "dualenkf/metrics.hpp"
#include "dualenkf/riccati.hpp"
#include "dualenkf/simulator.hpp"
#include "helpers.hpp"

using namespace dualenkf;
using testing::scalar;
using testing::scalar_problem;

namespace {

std::string csv(const EnkfOutput& out) {
  std::ostringstream os;
  write_csv(os, out);
  return os.str();
}

}  // namespace

TEST_CASE("sample_terminal: identity covariance by the law of large numbers") {
  const auto ens = sample_terminal(100000, Matrix::Identity(3, 3), 1, 0);
  const auto mom = empirical_moments(ens, Matrix::Identity(3, 3));
  CHECK((mom.covariance - Matrix::Identity(3, 3)).norm() < 0.02);
}

TEST_CASE("sample_terminal: per-coordinate variances within 3 standard errors") {
  Matrix S = Matrix::Zero(2, 2);
  S.diagonal() << 4, 1;
  const int n = 20000;
  const auto mom = empirical_moments(sample_terminal(n, S, 2, 0), Matrix::Identity(2, 2));
  for (int i = 0; i < 2; ++i) {
    const double se = S(i, i) * std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(mom.covariance(i, i) - S(i, i)) < 3 * se);
  }
}

TEST_CASE("sample_terminal: deterministic and SPD-checked") {
  const auto a = sample_terminal(50, Matrix::Identity(4, 4), 9, 3);
  const auto b = sample_terminal(50, Matrix::Identity(4, 4), 9, 3);
  CHECK(a.particles == b.particles);
  CHECK(a.step_index == 3);
  CHECK_THROWS_AS(sample_terminal(10, -Matrix::Identity(2, 2), 1, 0), NumericalError);
}

TEST_CASE("empirical_moments examples") {
  Ensemble ens;
  ens.particles = Matrix(1, 2);
  ens.particles << 1, 3;
  auto mom = empirical_moments(ens, scalar(1));
  CHECK(mom.mean(0) == 2.0);
  CHECK(mom.covariance(0, 0) == 2.0);

  ens.particles = Matrix::Constant(3, 5, 0.7);
  mom = empirical_moments(ens, Matrix::Identity(3, 3));
  CHECK(mom.covariance.norm() == 0.0);
  CHECK(mom.cross.norm() == 0.0);

  ens.particles = Matrix(1, 1);
  CHECK_THROWS_AS(empirical_moments(ens, scalar(1)), DegenerateEnsembleError);
}

TEST_CASE("empirical_moments: L = S Cᵀ") {
  const auto ens = sample_terminal(300, Matrix::Identity(5, 5), 4, 0);
  RandomStream rs(4, Channel::Generator, 99, 0);
  Matrix C(3, 5);
  for (Eigen::Index i = 0; i < C.size(); ++i) C(i) = rs.normal();
  const auto mom = empirical_moments(ens, C);
  const Matrix expected = mom.covariance * C.transpose();
  CHECK((mom.cross - expected).norm() <= 1e-12 * expected.norm());
}

TEST_CASE("exploration_covariance examples") {
  auto p = gen_spring_mass_damper(2, 0.1);
  p.cost.R = 2.0 * Matrix::Identity(2, 2);
  CHECK((exploration_covariance(p) - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-15);
  CHECK(exploration_covariance(scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, -0.8))(0, 0) ==
        doctest::Approx(1.25));
  auto q = with_cost_kind(gen_spring_mass_damper(2, 0.1), CostKind::LEQG, 1.0);
  CHECK((exploration_covariance(q) - Matrix::Identity(2, 2)).norm() < 1e-15);
}

TEST_CASE("mean_field_term examples") {
  const Vector zero = Vector::Zero(1);
  for (const auto& p : {scalar_problem(0, 1, 1, 1, 1, 1), scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, 0.5),
                        scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, -0.5)})
    CHECK(mean_field_term(zero, zero, scalar(2), p).norm() == 0.0);

  Vector z(1), n(1);
  z << 1;
  n << 0;
  // ½·S·C·C·(z+n) + ½·Σ·S⁻¹·(z−n) = ½·2 + ½·½
  CHECK(mean_field_term(z, n, scalar(2), scalar_problem(0, 1, 1, 1, 1, 1))(0) == doctest::Approx(1.25));
  // σ = 0 drops the correction
  CHECK(mean_field_term(z, n, scalar(2), scalar_problem(0, 1, 1, 1, 1, 0))(0) == doctest::Approx(1.0));
  // θ = 0.5: (|θ|/2)·S·(z+n) + Σ·S⁻¹·(z−n) = 0.5 + 0.5
  CHECK(mean_field_term(z, n, scalar(2), scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, 0.5))(0) ==
        doctest::Approx(1.0));
  // θ = −0.5: correction vanishes
  CHECK(mean_field_term(z, n, scalar(2), scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, -0.5))(0) ==
        doctest::Approx(0.5));
}

TEST_CASE("simulator_step examples") {
  const auto p = scalar_problem(1, 1, 1, 1, 1, 0);
  RandomStream rs(1, Channel::Process, 0, 0);
  Vector x(1), a(1);
  x << 2;
  a << -1;
  CHECK(simulator_step(x, a, 0.1, rs, p.dynamics)(0) == doctest::Approx(0.1));
}

TEST_CASE("simulator: zero-state increments have covariance σσᵀτ") {
  const auto p = gen_spring_mass_damper(1, 0.5);
  const Simulator sim(p.dynamics);
  const int n = 100000;
  const double tau = 0.1;
  Matrix draws(2, n);
  for (int i = 0; i < n; ++i) {
    RandomStream rs(3, Channel::Process, static_cast<std::uint64_t>(i), 0);
    draws.col(i) = sim.step(Vector::Zero(2), Vector::Zero(1), tau, rs);
  }
  CHECK(sim.calls() == static_cast<std::uint64_t>(n));
  const Vector mean = draws.rowwise().mean();
  const Matrix cov = (draws.colwise() - mean) * (draws.colwise() - mean).transpose() / (n - 1);
  const Matrix expected = p.dynamics.noise_covariance() * tau;
  CHECK(mean.norm() < 4 * std::sqrt(expected.trace() / n));
  CHECK((cov - expected).norm() < 0.02 * expected.norm());
}

TEST_CASE("run_offline: N = d + 1 is accepted, N = d is rejected") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  EnkfConfig c;
  c.particles = 5;
  c.horizon = 1.0;
  c.step = 0.02;
  CHECK_NOTHROW(run_offline(p, c));
  c.particles = 4;
  CHECK_THROWS_AS(run_offline(p, c), std::invalid_argument);
}

TEST_CASE("run_offline: output layout and terminal condition") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  EnkfConfig c;
  c.particles = 200;
  c.horizon = 1.0;
  c.step = 0.02;
  const auto out = run_offline(p, c);
  REQUIRE(out.size() == 51);
  CHECK(out.times.front() == 0.0);
  CHECK(out.times.back() == doctest::Approx(1.0));
  CHECK(out.final_ensemble.step_index == 0);
  CHECK(out.final_ensemble.size() == 200);
  for (std::size_t k = 0; k < out.size(); ++k) {
    CHECK((out.covariances[k] - out.covariances[k].transpose()).norm() == 0.0);
    REQUIRE(out.primal[k].has_value());
  }
  CHECK(out.stats.simulator_calls == 200u * 50u);
}

TEST_CASE("run_offline: thread count does not change a single bit") {
  const auto p = gen_random_canonical(6, 2, 0.2);
  EnkfConfig c;
  c.particles = 101;
  c.horizon = 2.0;
  c.step = 0.02;
  c.seed = 42;
  const std::string one = csv(run_offline(p, c));
  c.threads = 3;
  CHECK(csv(run_offline(p, c)) == one);
  c.seed = 43;
  CHECK(csv(run_offline(p, c)) != one);
}

TEST_CASE("run_offline: exchangeability under relabelled substreams") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  EnkfConfig c;
  c.particles = 40;
  c.horizon = 1.0;
  c.step = 0.02;
  c.seed = 5;
  std::vector<std::uint64_t> ids(40), rev(40);
  std::iota(ids.begin(), ids.end(), 0);
  std::copy(ids.rbegin(), ids.rend(), rev.begin());
  const auto a = run_offline(p, c, ids);
  const auto b = run_offline(p, c, rev);
  for (int i = 0; i < 40; ++i)
    CHECK((a.final_ensemble.particles.col(i) - b.final_ensemble.particles.col(39 - i)).norm() <=
          1e-9 * a.final_ensemble.particles.col(i).norm());
  for (std::size_t k = 0; k < a.size(); k += 10) {
    CHECK(testing::rel_diff(b.covariances[k], a.covariances[k]) < 1e-10);
    CHECK(testing::rel_diff(*b.primal[k], *a.primal[k]) < 1e-10);
  }
}

TEST_CASE("run_offline: risk-seeking path never inverts the covariance") {
  const auto p = with_cost_kind(gen_spring_mass_damper(2, 0.1), CostKind::LEQG, -0.8);
  EnkfConfig c;
  c.particles = 100;
  c.horizon = 2.0;
  const auto out = run_offline(p, c);
  CHECK(out.stats.covariance_inversions == 0u);
  const auto q = gen_spring_mass_damper(2, 0.1);
  CHECK(run_offline(q, c).stats.covariance_inversions == 100u);
}

TEST_CASE("run_offline tracks the dual DRE (LQG and both LEQG signs)") {
  for (const auto& [kind, theta] : {std::pair{CostKind::LQG, 0.0}, {CostKind::LEQG, 1.1}, {CostKind::LEQG, -0.8}}) {
    const auto p = with_cost_kind(gen_spring_mass_damper(2, 0.1), kind, theta);
    EnkfConfig c;
    c.particles = 2000;
    c.horizon = 5.0;
    c.seed = 11;
    const auto out = run_offline(p, c);
    const auto S = solve_dual_dre(p, 5.0, 2e-3);
    double worst = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k)
      worst = std::max(worst, frob_error(out.covariances[k], S.at_time(out.times[k]), true));
    CHECK(worst < 0.15);
  }
}

TEST_CASE("mean-field covariance oracle: squared error falls like 1/N") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  const auto S = solve_dual_dre(p, 4.0, 2e-3);
  std::vector<double> ns, mse;
  for (int n : {250, 1000, 4000}) {
    double sum = 0.0;
    const int seeds = 50;
    for (int s = 0; s < seeds; ++s) {
      EnkfConfig c;
      c.particles = n;
      c.horizon = 4.0;
      c.seed = 1000 + static_cast<std::uint64_t>(s);
      const auto out = run_offline(p, c);
      double worst = 0.0;
      for (std::size_t k = 0; k < out.size(); ++k)
        worst = std::max(worst, (out.covariances[k] - S.at_time(out.times[k])).squaredNorm());
      sum += worst;
    }
    ns.push_back(n);
    mse.push_back(sum / seeds);
  }
  CHECK(mse[1] < mse[0]);
  CHECK(mse[2] < mse[1]);
  const auto fit = fit_scaling(ns, mse);
  CHECK(fit.slope > -1.35);
  CHECK(fit.slope < -0.65);
}

TEST_CASE("snapshot round trip is exact") {
  const auto p = gen_spring_mass_damper(1, 0.1);
  EnkfConfig c;
  c.particles = 20;
  c.horizon = 0.2;
  const auto out = run_offline(p, c);
  std::stringstream ss;
  write_snapshot(ss, out);
  const auto back = read_snapshot(ss);
  CHECK(csv(back) == csv(out));
  CHECK(back.times == out.times);
  std::stringstream bad("not a snapshot");
  CHECK_THROWS(read_snapshot(bad));
}
