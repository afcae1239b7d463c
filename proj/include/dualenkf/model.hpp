#pragma once

#include <string>
#include <vector>

#include "dualenkf/types.hpp"

namespace dualenkf {

/// dX = (AX + BU)dt + σ dW.
struct LinearDynamics {
  Matrix A;      // d×d drift
  Matrix B;      // d×m input gain
  Matrix sigma;  // d×q noise gain

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
  Eigen::Index noise_dim() const { return sigma.cols(); }

  /// Σ = σσᵀ, symmetrized.
  Matrix noise_covariance() const;
};

enum class CostKind { LQG, LEQG };

/// Running cost ½|Cx|² + ½|a|²_R, terminal cost ½|x|²_G. theta is the risk
/// parameter and is only meaningful for LEQG (nonzero there).
struct CostModel {
  Matrix C;
  Matrix R;
  Matrix G;
  CostKind kind = CostKind::LQG;
  double theta = 0.0;

  bool risk_sensitive() const { return kind == CostKind::LEQG; }
  /// |θ| for LEQG, 1 for LQG. Scales the primal/dual conversion.
  double scale() const;

  double running_cost(const Vector& x, const Vector& a) const;
};

enum class HorizonKind { Finite, Average };

struct Horizon {
  HorizonKind kind = HorizonKind::Average;
  double T = 0.0;  // seconds, used when kind == Finite

  static Horizon finite(double T) { return {HorizonKind::Finite, T}; }
  static Horizon average() { return {HorizonKind::Average, 0.0}; }
};

struct LqProblem {
  LinearDynamics dynamics;
  CostModel cost;
  Horizon horizon;

  Eigen::Index state_dim() const { return dynamics.state_dim(); }
  Eigen::Index input_dim() const { return dynamics.input_dim(); }

  /// Shape checks only. Throws DimensionError.
  void check_dimensions() const;
};

/// Same problem with a different cost kind / risk parameter.
LqProblem with_cost_kind(LqProblem problem, CostKind kind, double theta = 0.0);

struct Check {
  std::string name;
  bool passed = false;
  double margin = 0.0;
  bool advisory = false;  // advisory checks never fail the report
  std::string detail;
};

struct ValidationReport {
  std::vector<Check> checks;
  std::vector<std::string> warnings;

  /// True iff every non-advisory check passed.
  bool ok() const;
  const Check* find(const std::string& name) const;
  /// Name of the first failing non-advisory check, empty when ok().
  std::string first_failure() const;
};

/// Check names used in ValidationReport.
namespace checks {
inline constexpr const char* kControllable = "controllable(A,B)";
inline constexpr const char* kStateCostPd = "CtC>0";
inline constexpr const char* kControlCostPd = "R>0";
inline constexpr const char* kTerminalCostPd = "G>0";
inline constexpr const char* kRiskFeasible = "BR^-1Bt-theta*Sigma>=0";
inline constexpr const char* kObservable = "observable(A,C)";
}  // namespace checks

/// Tests the standing assumptions (controllability, cost definiteness, LEQG
/// feasibility). Throws DimensionError on inconsistent shapes; assumption
/// failures are reported, not thrown.
ValidationReport validate(const LqProblem& problem);

/// Throws std::invalid_argument naming the first failing clause.
void require_valid(const LqProblem& problem);

struct EffectiveMatrices {
  Matrix D;      // B R⁻¹ Bᵀ
  Matrix Sigma;  // σσᵀ
};

EffectiveMatrices effective_matrices(const LqProblem& problem);

/// D − θΣ for LEQG, D for LQG.
Matrix risk_adjusted_input_matrix(const LqProblem& problem);

}  // namespace dualenkf
