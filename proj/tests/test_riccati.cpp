#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dualenkf/generators.hpp"
#include "dualenkf/linalg.hpp"
#include "dualenkf/riccati.hpp"
#include "helpers.hpp"

using namespace dualenkf;
using testing::scalar;
using testing::scalar_problem;

TEST_CASE("ricc_op examples") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  CHECK((ricc_op(Matrix::Zero(4, 4), p) - p.cost.C.transpose() * p.cost.C).norm() == 0.0);
  CHECK(ricc_op(scalar(1), scalar_problem(0, 1, 1, 1, 1))(0, 0) == 0.0);
  const double root = 1 + std::sqrt(2.0);
  CHECK(std::abs(ricc_op(scalar(root), scalar_problem(1, 1, 1, 1, 1))(0, 0)) < 1e-14);
}

TEST_CASE("ricc_op LEQG row uses D − θΣ") {
  // A=0, B=C=R=σ=1, θ=0.5: 1 − Λ²(1 − 0.5)
  const auto p = scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, 0.5);
  CHECK(ricc_op(scalar(2), p)(0, 0) == doctest::Approx(1 - 4 * 0.5));
}

TEST_CASE("dual_ricc_op examples") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  const Matrix D = p.dynamics.B * p.dynamics.B.transpose();
  CHECK((dual_ricc_op(Matrix::Zero(4, 4), p) + D).norm() == 0.0);
  const double s_bar = std::sqrt(2.0) - 1;
  CHECK(std::abs(dual_ricc_op(scalar(s_bar), scalar_problem(1, 1, 1, 1, 1))(0, 0)) < 1e-15);
  // θ = −1: −(1/|θ|)(1 + 1) + |θ|Λ² = Λ² − 2
  const auto q = scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, -1);
  CHECK(std::abs(dual_ricc_op(scalar(std::sqrt(2.0)), q)(0, 0)) < 1e-15);
}

TEST_CASE("operators reject mismatched shapes") {
  CHECK_THROWS_AS(ricc_op(Matrix::Zero(2, 2), scalar_problem(0, 1, 1, 1, 1)), DimensionError);
  CHECK_THROWS_AS(dual_ricc_op(Matrix::Zero(2, 2), scalar_problem(0, 1, 1, 1, 1)), DimensionError);
}

TEST_CASE("solve_dre: starting at the fixed point stays there") {
  const auto traj = solve_dre(scalar_problem(0, 1, 1, 1, 1), 2.0, 0.01);
  CHECK(traj.kind == RiccatiKind::Primal);
  for (const auto& v : traj.values) CHECK(v(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("solve_dre: closed-form coth solution") {
  // −Ṗ = 1 − P², P_1 = 2  ⇒  P_t = coth(1 − t + arcoth 2).
  const auto p = scalar_problem(0, 1, 1, 1, 2);
  const auto traj = solve_dre(p, 1.0, 1e-3);
  const double arcoth2 = std::atanh(0.5);
  CHECK(traj.front()(0, 0) == doctest::Approx(1.0 / std::tanh(1.0 + arcoth2)).epsilon(1e-12));
  CHECK(std::abs(traj.front()(0, 0) - 1.0944) < 1e-4);
  for (std::size_t k = 0; k < traj.size(); k += 97)
    CHECK(std::abs(traj.values[k](0, 0) - 1.0 / std::tanh(1.0 - traj.times[k] + arcoth2)) < 1e-12);
  CHECK(traj.times.back() == doctest::Approx(1.0));
  CHECK(traj.back()(0, 0) == 2.0);
  CHECK(traj.step == doctest::Approx(1e-3));
}

TEST_CASE("solve_dre: fourth-order self-convergence") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  auto gap = [&](double tau) {
    const auto a = solve_dre(p, 2.0, tau), b = solve_dre(p, 2.0, tau / 2);
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, (a.values[k] - b.values[2 * k]).norm());
    return worst;
  };
  const double ratio = gap(0.1) / gap(0.05);
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("solve_dre: finite difference matches the operator to O(τ)") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  for (double tau : {0.01, 0.005}) {
    const auto traj = solve_dre(p, 1.0, tau);
    const std::size_t k = traj.size() / 2;
    const Matrix fd = (traj.values[k] - traj.values[k + 1]) / tau;
    const Matrix op = ricc_op(traj.values[k], p);
    CHECK((fd - op).norm() / op.norm() < 10 * tau);
  }
}

TEST_CASE("solve_dre: loss of definiteness names the time") {
  // −Ṗ = 1 − P² from P_T = −2 escapes to −∞ in finite backward time.
  try {
    solve_dre(scalar_problem(0, 1, 1, 1, -2), 5.0, 1e-3);
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    CHECK(e.time() >= 0.0);
    CHECK(e.time() < 5.0);
  }
}

TEST_CASE("step_count rejects steps that do not divide the horizon") {
  CHECK(step_count(10.0, 0.02) == 500);
  CHECK_THROWS_AS(step_count(1.0, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(solve_dre(scalar_problem(0, 1, 1, 1, 1), 1.0, 0.3), std::invalid_argument);
}

TEST_CASE("dual DRE is the inverse of the DRE (scalar coth example)") {
  const auto p = scalar_problem(0, 1, 1, 1, 2);
  const auto P = solve_dre(p, 1.0, 1e-3);
  const auto S = solve_dual_dre(p, 1.0, 1e-3);
  CHECK(S.kind == RiccatiKind::Dual);
  CHECK(S.back()(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  for (std::size_t k = 0; k < P.size(); ++k) CHECK(std::abs(S.values[k](0, 0) * P.values[k](0, 0) - 1.0) < 1e-8);
}

TEST_CASE("duality holds for LQG and both LEQG signs on the 2-mass chain") {
  for (const auto& [kind, theta] : {std::pair{CostKind::LQG, 0.0}, {CostKind::LEQG, 1.1}, {CostKind::LEQG, -0.8}}) {
    const auto p = with_cost_kind(gen_spring_mass_damper(2, 0.1), kind, theta);
    const auto P = solve_dre(p, 5.0, 2e-3);
    const auto S = solve_dual_dre(p, 5.0, 2e-3);
    CHECK((S.back() - dual_terminal(p)).norm() == 0.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < P.size(); ++k)
      worst = std::max(worst, testing::rel_diff(p_to_s(P.values[k], p), S.values[k]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("LEQG terminal dual condition is (|θ|G)⁻¹") {
  const auto p = scalar_problem(0, 1, 1, 1, 2, 1, CostKind::LEQG, -0.8);
  CHECK(dual_terminal(p)(0, 0) == doctest::Approx(1.0 / (0.8 * 2.0)));
}

TEST_CASE("dual DRE, θ = −1: S_0 approaches √2 for a long horizon") {
  const auto p = scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, -1);
  const auto S = solve_dual_dre(p, 20.0, 1e-2);
  CHECK(S.front()(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("solve_are: scalar closed form and residual certificate") {
  AreOptions o;
  o.tol = 1e-8;
  const auto sol = solve_are(scalar_problem(1, 1, 1, 1, 1), o);
  CHECK(std::abs(sol.P_bar(0, 0) - (1 + std::sqrt(2.0))) < 1e-8);
  CHECK(sol.residual < 1e-8);
  CHECK(sol.horizon_used > 0.0);
}

TEST_CASE("solve_are: spring-mass-damper residual below tolerance, eventually decreasing") {
  const auto p = gen_spring_mass_damper(2, 0.1);
  const auto sol = solve_are(p);
  CHECK(sol.residual < 1e-10);
  CHECK(ricc_op(sol.P_bar, p).norm() == doctest::Approx(sol.residual));
  CHECK(linalg::is_spd(sol.P_bar));
  const auto& h = sol.residual_history;
  REQUIRE(h.size() >= 2);
  CHECK(h.back() < h[h.size() - 2]);
}

TEST_CASE("solve_are reports non-convergence with the last residual") {
  AreOptions o;
  o.tol = 1e-300;  // unreachable
  o.horizon_cap = 4.0;
  try {
    solve_are(scalar_problem(0, 0.1, 1, 1, 1), o);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() >= 0.0);
  }
}

TEST_CASE("s_to_p / p_to_s") {
  const auto lqg = gen_spring_mass_damper(2, 0.1);
  CHECK((s_to_p(Matrix::Identity(4, 4), lqg) - Matrix::Identity(4, 4)).norm() < 1e-15);
  const auto leqg = scalar_problem(0, 1, 1, 1, 1, 1, CostKind::LEQG, -0.8);
  CHECK(s_to_p(scalar(2.5), leqg)(0, 0) == doctest::Approx(0.5));
  const Matrix S = solve_dual_dre(lqg, 1.0, 1e-2).front();
  CHECK(testing::rel_diff(p_to_s(s_to_p(S, lqg), lqg), S) < 1e-12);
  CHECK_THROWS_AS(s_to_p(-Matrix::Identity(4, 4), lqg), NumericalError);
}

TEST_CASE("trajectory CSV is (t, i, j, value) in row-major order") {
  LqProblem p = gen_spring_mass_damper(1, 0.1);
  const auto traj = solve_dre(p, 0.02, 0.01);
  std::ostringstream os;
  write_csv(os, traj);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,i,j,value");
  std::getline(is, line);
  CHECK(line.rfind("0,0,0,", 0) == 0);
  std::getline(is, line);
  CHECK(line.rfind("0,0,1,", 0) == 0);
  int rows = 2;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3 * 4);
}
