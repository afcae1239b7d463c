#pragma once

#include <complex>
#include <string>
#include <vector>

#include "dualenkf/control.hpp"
#include "dualenkf/model.hpp"
#include "dualenkf/riccati.hpp"

namespace dualenkf {

enum class NormKind { Frobenius, RelativeFrobenius };

struct ErrorSeries {
  std::vector<double> times;
  std::vector<double> values;
  NormKind norm = NormKind::Frobenius;
};

/// ‖M̂ − M‖_F, divided by ‖M‖_F when relative. Throws std::domain_error for
/// a relative error against a zero reference.
double frob_error(const Matrix& estimate, const Matrix& reference, bool relative = false);

struct MseEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t runs = 0;
};

/// Mean squared Frobenius error over runs and its standard error
/// (sample sd/√runs). Relative mode divides each squared error by ‖M‖²_F.
MseEstimate mse_over_runs(const std::vector<Matrix>& runs, const Matrix& reference, bool relative = false);

struct ScalingReport {
  std::vector<double> n_values;
  std::vector<double> mse;
  std::vector<double> standard_error;  // may be empty
  double slope = 0.0;
  double intercept = 0.0;
  double slope_half_width = 0.0;  // 95% confidence half-width from residuals
};

/// OLS of log MSE on log N. Needs ≥ 3 distinct N and positive MSE.
ScalingReport fit_scaling(const std::vector<double>& n_values, const std::vector<double>& mse,
                          const std::vector<double>& standard_error = {});

struct DecayFit {
  double rate = 0.0;  // λ̂
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t window_begin = 0;  // indices into the input, [begin, end)
  std::size_t window_end = 0;
  std::vector<std::string> warnings;
};

struct DecayWindow {
  double lower_fraction = 0.2;  // of the (T − t) range
  double upper_fraction = 0.8;
};

/// Least-squares slope of log(error) against time-to-go s = T − t over the
/// window. rate = −slope/2 for squared errors, −slope otherwise. A window
/// that is not monotonically decreasing is shrunk to its widest decreasing
/// run with a warning. Needs ≥ 10 points in the fitted window.
DecayFit fit_decay_rate(const std::vector<double>& time_to_go, const std::vector<double>& error, bool squared = false,
                        const DecayWindow& window = {});

/// Index range variant: fit exactly over [begin, end).
DecayFit fit_decay_rate_range(const std::vector<double>& time_to_go, const std::vector<double>& error, bool squared,
                              std::size_t begin, std::size_t end);

/// Eigenvalues of A + BK.
struct Spectrum {
  std::vector<std::complex<double>> eigenvalues;
  bool hurwitz = false;
  double max_real = 0.0;
};

Spectrum closed_loop_spectrum(const LqProblem& problem, const Matrix& K);
Spectrum open_loop_spectrum(const LqProblem& problem);

class StabilityError : public NumericalError {
 public:
  StabilityError(const std::string& what, std::vector<std::complex<double>> offending)
      : NumericalError(what), offending_(std::move(offending)) {}
  const std::vector<std::complex<double>>& offending() const { return offending_; }

 private:
  std::vector<std::complex<double>> offending_;
};

/// X with MᵀX + XM + Q = 0 for Hurwitz M. Kronecker solve for small d,
/// complex Schur (Bartels–Stewart) beyond.
Matrix solve_lyapunov(const Matrix& M, const Matrix& Q);
/// Always the vectorized Kronecker route.
Matrix solve_lyapunov_kronecker(const Matrix& M, const Matrix& Q);
/// Always the Schur route.
Matrix solve_lyapunov_schur(const Matrix& M, const Matrix& Q);

/// Stationary LQG cost of u = Kx: Tr(XΣ) with (A+BK)ᵀX + X(A+BK) + CᵀC + KᵀRK = 0.
/// This is the long-run average of |Cx|² + |u|²_R, i.e. twice the average of
/// the ½-weighted running cost c(x, u). Throws StabilityError if A + BK is
/// not Hurwitz.
double average_cost_lyapunov(const LqProblem& problem, const Matrix& K);

/// Long-run average of |CX|² + |U|²_R (same units as average_cost_lyapunov)
/// under u = Kx from Euler–Maruyama rollouts started at 0, after a burn-in.
/// Mean and standard error over runs.
MseEstimate average_cost_monte_carlo(const LqProblem& problem, const Matrix& K, double horizon, double burn_in,
                                     double tau, int runs, std::uint64_t seed);

/// θ⁻¹ log E exp(θ ∫c dt) estimated in the log domain (running-max shift)
/// over finite-horizon rollouts of u = K_t x.
double leqg_cost_monte_carlo(const LqProblem& problem, const GainSchedule& gains, const Vector& x0, double T,
                             double tau, int runs, std::uint64_t seed);

enum class CostMethod { Lyapunov, MonteCarlo };

struct CostReport {
  double cost = 0.0;          // c^alg
  double optimal_cost = 0.0;  // c^opt
  CostMethod method = CostMethod::Lyapunov;
  double relative_cost = 0.0;  // ε^cost
  double relative_gain = 0.0;  // ε^gain
};

/// Average-cost comparison of K_alg against K̄ from P̄.
CostReport relative_cost_and_gain(const Matrix& K_alg, const LqProblem& problem, const AreSolution& reference);

/// Finite horizon: ε^gain = (1/T)∫‖K_t^alg − K_t‖/‖K_t‖ dt (trapezoid on the
/// grid). The reference schedule must share the grid of K_alg.
double time_averaged_relative_gain(const GainSchedule& K_alg, const GainSchedule& K_opt);

}  // namespace dualenkf
