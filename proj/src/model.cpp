#include "dualenkf/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dualenkf/linalg.hpp"

namespace dualenkf {

namespace {

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void expect_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " has shape " << shape(m) << ", expected " << rows << "x" << cols;
    throw DimensionError(os.str());
  }
}

// Tolerance for semidefinite checks, relative to the matrix scale.
double psd_tolerance(const Matrix& m) { return 1e-10 * std::max(1.0, m.norm()); }

Check definiteness_check(const char* name, const Matrix& m) {
  Check c;
  c.name = name;
  c.margin = linalg::min_eigenvalue(m);
  c.passed = linalg::is_spd(m) && c.margin > 0.0;
  if (!c.passed) c.detail = "not positive definite (smallest eigenvalue " + std::to_string(c.margin) + ")";
  return c;
}

}  // namespace

Matrix LinearDynamics::noise_covariance() const { return linalg::symmetrize(sigma * sigma.transpose()); }

double CostModel::scale() const { return risk_sensitive() ? std::abs(theta) : 1.0; }

double CostModel::running_cost(const Vector& x, const Vector& a) const {
  return 0.5 * (C * x).squaredNorm() + 0.5 * a.dot(R * a);
}

void LqProblem::check_dimensions() const {
  const Eigen::Index d = dynamics.A.rows();
  if (d == 0) throw DimensionError("A is empty");
  expect_shape(dynamics.A, d, d, "A");
  if (dynamics.B.rows() != d || dynamics.B.cols() == 0)
    throw DimensionError("B has shape " + shape(dynamics.B) + ", expected " + std::to_string(d) + " rows");
  if (dynamics.sigma.rows() != d)
    throw DimensionError("sigma has shape " + shape(dynamics.sigma) + ", expected " + std::to_string(d) + " rows");
  const Eigen::Index m = dynamics.B.cols();
  if (cost.C.cols() != d || cost.C.rows() == 0)
    throw DimensionError("C has shape " + shape(cost.C) + ", expected " + std::to_string(d) + " columns");
  expect_shape(cost.R, m, m, "R");
  expect_shape(cost.G, d, d, "G");
  if (cost.kind == CostKind::LEQG && (cost.theta == 0.0 || !std::isfinite(cost.theta)))
    throw DimensionError("LEQG requires a finite nonzero theta");
  if (horizon.kind == HorizonKind::Finite && !(horizon.T > 0.0))
    throw DimensionError("finite horizon requires T > 0");
}

LqProblem with_cost_kind(LqProblem problem, CostKind kind, double theta) {
  problem.cost.kind = kind;
  problem.cost.theta = kind == CostKind::LEQG ? theta : 0.0;
  return problem;
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.advisory || c.passed; });
}

const Check* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

std::string ValidationReport::first_failure() const {
  for (const auto& c : checks)
    if (!c.advisory && !c.passed) return c.name;
  return {};
}

ValidationReport validate(const LqProblem& problem) {
  problem.check_dimensions();
  const auto& dyn = problem.dynamics;
  const auto& cost = problem.cost;
  const Eigen::Index d = problem.state_dim();
  ValidationReport report;

  {
    Check c;
    c.name = checks::kControllable;
    const auto rank = linalg::numerical_rank(linalg::controllability_matrix(dyn.A, dyn.B, true));
    c.passed = rank.rank == d;
    c.margin = rank.rank == 0 ? 0.0 : rank.smallest_retained / rank.largest;
    c.detail = "rank " + std::to_string(rank.rank) + " of " + std::to_string(d);
    report.checks.push_back(c);
  }

  report.checks.push_back(definiteness_check(checks::kStateCostPd, cost.C.transpose() * cost.C));
  report.checks.push_back(definiteness_check(checks::kControlCostPd, cost.R));
  report.checks.push_back(definiteness_check(checks::kTerminalCostPd, cost.G));

  const bool r_ok = report.find(checks::kControlCostPd)->passed;
  if (cost.kind == CostKind::LEQG && r_ok) {
    // Required semidefinite; strict definiteness fails for every benchmark
    // whose B has fewer columns than rows, so that case is only a warning.
    const Matrix m = risk_adjusted_input_matrix(problem);
    Check c;
    c.name = checks::kRiskFeasible;
    c.margin = linalg::min_eigenvalue(m);
    c.passed = c.margin >= -psd_tolerance(m);
    if (!c.passed) {
      c.detail = "BR^-1B' - theta*Sigma is indefinite (smallest eigenvalue " + std::to_string(c.margin) + ")";
    } else if (!linalg::is_spd(m)) {
      report.warnings.push_back("BR^-1B' - theta*Sigma is only semidefinite");
    }
    report.checks.push_back(c);
  }

  {
    Check c;
    c.name = checks::kObservable;
    c.advisory = true;
    const auto rank = linalg::numerical_rank(linalg::observability_matrix(dyn.A, cost.C, true));
    c.passed = rank.rank == d;
    c.margin = rank.rank == 0 ? 0.0 : rank.smallest_retained / rank.largest;
    c.detail = "rank " + std::to_string(rank.rank) + " of " + std::to_string(d);
    if (!c.passed || c.margin < 1e-8) report.warnings.push_back("(A,C) observability is marginal: " + c.detail);
    report.checks.push_back(c);
  }
  return report;
}

void require_valid(const LqProblem& problem) {
  const auto report = validate(problem);
  if (!report.ok()) {
    const auto* failed = report.find(report.first_failure());
    throw std::invalid_argument("problem violates assumption " + failed->name +
                                (failed->detail.empty() ? "" : ": " + failed->detail));
  }
}

EffectiveMatrices effective_matrices(const LqProblem& problem) {
  problem.check_dimensions();
  const auto& B = problem.dynamics.B;
  const Matrix r_inv_bt = problem.cost.R.llt().solve(B.transpose());
  return {linalg::symmetrize(B * r_inv_bt), problem.dynamics.noise_covariance()};
}

Matrix risk_adjusted_input_matrix(const LqProblem& problem) {
  auto [D, Sigma] = effective_matrices(problem);
  if (problem.cost.kind == CostKind::LEQG) return linalg::symmetrize(D - problem.cost.theta * Sigma);
  return D;
}

}  // namespace dualenkf
