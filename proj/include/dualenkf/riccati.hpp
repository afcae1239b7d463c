#pragma once

#include <iosfwd>
#include <vector>

#include "dualenkf/model.hpp"

namespace dualenkf {

/// 𝒟(Λ) = AᵀΛ + ΛA + CᵀC − Λ(D − θΣ)Λ  (θΣ term only for LEQG).
Matrix ricc_op(const Matrix& lambda, const LqProblem& problem);

/// 𝒟†(Λ) = AΛ + ΛAᵀ − (D − θΣ)/s + s·ΛCᵀCΛ with s = |θ| (LEQG) or 1 (LQG).
Matrix dual_ricc_op(const Matrix& lambda, const LqProblem& problem);

enum class RiccatiKind { Primal, Dual };

/// Solution of a Riccati ODE on a uniform grid t_0 = 0 < ... < t_K = T.
struct RiccatiTrajectory {
  RiccatiKind kind = RiccatiKind::Primal;
  double step = 0.0;
  std::vector<double> times;
  std::vector<Matrix> values;

  std::size_t size() const { return times.size(); }
  const Matrix& front() const { return values.front(); }
  const Matrix& back() const { return values.back(); }
  /// Value at the grid point nearest to t.
  const Matrix& at_time(double t) const;
};

/// Loss of definiteness during backward integration.
class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, double time) : NumericalError(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Horizon doubling exhausted the cap before the residual fell under tol.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual) : NumericalError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Number of uniform steps of size tau covering T. Throws std::invalid_argument
/// if T is not an integer multiple of tau within rounding.
long step_count(double T, double tau);

/// −Ṗ = 𝒟(P), P_T = G, classical RK4 backward in time.
RiccatiTrajectory solve_dre(const LqProblem& problem, double T, double tau_ref);

/// Ṡ = 𝒟†(S), S_T = (sG)⁻¹, integrated backward; S_t = p_to_s(P_t).
RiccatiTrajectory solve_dual_dre(const LqProblem& problem, double T, double tau_ref);

struct AreSolution {
  Matrix P_bar;
  double residual = 0.0;      // ‖𝒟(P̄)‖_F
  double horizon_used = 0.0;  // total backward integration time
  std::vector<double> residual_history;  // residual at each horizon doubling
};

struct AreOptions {
  double tol = 1e-10;  // raised to the roundoff level of 𝒟(P) when ‖P‖ is large
  double tau_ref = 2e-3;
  double initial_horizon = 1.0;
  double horizon_cap = 1e3;
};

/// P̄ with 𝒟(P̄) = 0, by integrating the DRE from P = G over a doubling horizon.
/// Once close, Newton steps on the Lyapunov linearization finish the job.
AreSolution solve_are(const LqProblem& problem, const AreOptions& options = {});

/// LQG: S⁻¹. LEQG: (|θ|S)⁻¹.
Matrix s_to_p(const Matrix& S, const LqProblem& problem);
/// LQG: P⁻¹. LEQG: (|θ|P)⁻¹.
Matrix p_to_s(const Matrix& P, const LqProblem& problem);

/// Terminal condition of the dual DRE.
Matrix dual_terminal(const LqProblem& problem);

/// Rows (t, i, j, value), row-major matrix order, with header.
void write_csv(std::ostream& os, const RiccatiTrajectory& trajectory);

}  // namespace dualenkf
