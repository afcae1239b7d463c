#include "dualenkf/riccati.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "dualenkf/format.hpp"
#include "dualenkf/linalg.hpp"
#include "dualenkf/metrics.hpp"

namespace dualenkf {

namespace {

constexpr long kSpdCheckInterval = 100;

// Shared pieces of both operators, computed once per solve.
struct RiccatiCoefficients {
  Matrix A;
  Matrix CtC;
  Matrix input;  // D − θΣ (or D)
  double scale = 1.0;
};

RiccatiCoefficients coefficients(const LqProblem& problem) {
  problem.check_dimensions();
  return {problem.dynamics.A, linalg::symmetrize(problem.cost.C.transpose() * problem.cost.C),
          risk_adjusted_input_matrix(problem), problem.cost.scale()};
}

Matrix primal_rhs(const Matrix& p, const RiccatiCoefficients& c) {
  Matrix out = c.A.transpose() * p + p * c.A + c.CtC - p * c.input * p;
  return linalg::symmetrize(out);
}

Matrix dual_rhs(const Matrix& s, const RiccatiCoefficients& c) {
  Matrix out = c.A * s + s * c.A.transpose() - c.input / c.scale + c.scale * (s * c.CtC * s);
  return linalg::symmetrize(out);
}

// One RK4 step of dX/ds = f(X) in reversed time s = T − t.
template <typename F>
Matrix rk4(const Matrix& x, double h, F&& f) {
  const Matrix k1 = f(x);
  const Matrix k2 = f(x + 0.5 * h * k1);
  const Matrix k3 = f(x + 0.5 * h * k2);
  const Matrix k4 = f(x + h * k3);
  return linalg::symmetrize(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

template <typename F>
RiccatiTrajectory integrate_backward(RiccatiKind kind, const Matrix& terminal, double T, double tau, F&& reversed_rhs) {
  const long steps = step_count(T, tau);
  RiccatiTrajectory traj;
  traj.kind = kind;
  traj.step = T / static_cast<double>(steps);
  traj.times.resize(steps + 1);
  traj.values.resize(steps + 1);
  for (long k = 0; k <= steps; ++k) traj.times[k] = static_cast<double>(k) * traj.step;
  traj.values[steps] = linalg::symmetrize(terminal);
  for (long k = steps; k > 0; --k) {
    traj.values[k - 1] = rk4(traj.values[k], traj.step, reversed_rhs);
    const bool check = (steps - k + 1) % kSpdCheckInterval == 0 || k == 1;
    if (check && (!traj.values[k - 1].allFinite() || !linalg::is_spd(traj.values[k - 1]))) {
      std::ostringstream os;
      os << (kind == RiccatiKind::Primal ? "DRE" : "dual DRE") << " lost positive definiteness at t = "
         << traj.times[k - 1];
      throw IntegrationError(os.str(), traj.times[k - 1]);
    }
  }
  return traj;
}

// Size of the terms in 𝒟(P); residuals below a few ulps of it are roundoff.
double residual_floor(const Matrix& p, const RiccatiCoefficients& c) {
  const double scale = 2.0 * c.A.norm() * p.norm() + c.CtC.norm() + p.norm() * p.norm() * c.input.norm();
  return 16.0 * std::numeric_limits<double>::epsilon() * scale;
}

// Newton–Kleinman refinement: (A − MP)ᵀX + X(A − MP) + 𝒟(P) = 0, P ← P + X.
// Returns the improved iterate, or nothing if a step fails to help.
std::optional<Matrix> newton_polish(Matrix p, const RiccatiCoefficients& c, double tol) {
  double residual = primal_rhs(p, c).norm();
  for (int it = 0; it < 20 && residual > tol; ++it) {
    Matrix next;
    try {
      next = linalg::symmetrize(p + solve_lyapunov(c.A - c.input * p, primal_rhs(p, c)));
    } catch (const std::exception&) {
      return std::nullopt;
    }
    const double r = primal_rhs(next, c).norm();
    if (!(r < residual) || !linalg::is_spd(next)) break;
    p = std::move(next);
    residual = r;
  }
  return p;
}

}  // namespace

Matrix ricc_op(const Matrix& lambda, const LqProblem& problem) {
  const auto c = coefficients(problem);
  if (lambda.rows() != c.A.rows() || lambda.cols() != c.A.cols()) throw DimensionError("ricc_op: Lambda shape mismatch");
  return primal_rhs(lambda, c);
}

Matrix dual_ricc_op(const Matrix& lambda, const LqProblem& problem) {
  const auto c = coefficients(problem);
  if (lambda.rows() != c.A.rows() || lambda.cols() != c.A.cols())
    throw DimensionError("dual_ricc_op: Lambda shape mismatch");
  return dual_rhs(lambda, c);
}

const Matrix& RiccatiTrajectory::at_time(double t) const {
  long k = std::lround(t / step);
  k = std::clamp(k, 0L, static_cast<long>(values.size()) - 1);
  return values[static_cast<std::size_t>(k)];
}

long step_count(double T, double tau) {
  if (!(T > 0.0) || !(tau > 0.0)) throw std::invalid_argument("horizon and step must be positive");
  const double ratio = T / tau;
  const long steps = std::lround(ratio);
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-6 * std::max(1.0, ratio))
    throw std::invalid_argument("step " + format_number(tau) + " does not divide horizon " + format_number(T));
  return steps;
}

RiccatiTrajectory solve_dre(const LqProblem& problem, double T, double tau_ref) {
  const auto c = coefficients(problem);
  return integrate_backward(RiccatiKind::Primal, problem.cost.G, T, tau_ref,
                            [&](const Matrix& p) { return primal_rhs(p, c); });
}

RiccatiTrajectory solve_dual_dre(const LqProblem& problem, double T, double tau_ref) {
  const auto c = coefficients(problem);
  return integrate_backward(RiccatiKind::Dual, dual_terminal(problem), T, tau_ref,
                            [&](const Matrix& s) -> Matrix { return -dual_rhs(s, c); });
}

AreSolution solve_are(const LqProblem& problem, const AreOptions& options) {
  const auto c = coefficients(problem);
  auto rhs = [&](const Matrix& p) { return primal_rhs(p, c); };
  AreSolution out;
  Matrix p = linalg::symmetrize(problem.cost.G);
  double elapsed = 0.0;
  double chunk = options.initial_horizon;
  double residual = rhs(p).norm();
  while (true) {
    const long steps = std::max(1L, std::lround(chunk / options.tau_ref));
    for (long k = 1; k <= steps; ++k) {
      p = rk4(p, options.tau_ref, rhs);
      if ((k % kSpdCheckInterval == 0 || k == steps) && (!p.allFinite() || !linalg::is_spd(p)))
        throw IntegrationError("DRE lost positive definiteness while solving the ARE", -(elapsed + k * options.tau_ref));
    }
    elapsed += steps * options.tau_ref;
    residual = rhs(p).norm();
    if (residual < 1e-3 * std::max(1.0, p.norm())) {
      if (auto polished = newton_polish(p, c, options.tol)) {
        p = std::move(*polished);
        residual = rhs(p).norm();
      }
      out.residual_history.push_back(residual);
      if (residual < std::max(options.tol, residual_floor(p, c))) break;
    } else {
      out.residual_history.push_back(residual);
      if (residual < options.tol) break;
    }
    if (elapsed >= options.horizon_cap) {
      throw ConvergenceError("ARE did not converge within horizon " + format_number(elapsed) +
                                 " (residual " + format_number(residual) + ")",
                             residual);
    }
    // Doubling: the next chunk brings the total horizon to 2×elapsed.
    chunk = std::min(elapsed, options.horizon_cap - elapsed);
  }
  out.P_bar = p;
  out.residual = residual;
  out.horizon_used = elapsed;
  return out;
}

Matrix s_to_p(const Matrix& S, const LqProblem& problem) {
  auto inv = linalg::spd_inverse(problem.cost.scale() * S);
  if (!inv) throw NumericalError("s_to_p: input is not symmetric positive definite");
  return *inv;
}

Matrix p_to_s(const Matrix& P, const LqProblem& problem) {
  auto inv = linalg::spd_inverse(problem.cost.scale() * P);
  if (!inv) throw NumericalError("p_to_s: input is not symmetric positive definite");
  return *inv;
}

Matrix dual_terminal(const LqProblem& problem) { return p_to_s(problem.cost.G, problem); }

void write_csv(std::ostream& os, const RiccatiTrajectory& trajectory) {
  os << "t,i,j,value\n";
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    const Matrix& m = trajectory.values[k];
    const std::string t = format_number(trajectory.times[k]);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) os << t << ',' << i << ',' << j << ',' << format_number(m(i, j)) << '\n';
  }
}

}  // namespace dualenkf
