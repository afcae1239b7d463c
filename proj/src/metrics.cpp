#include "dualenkf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "dualenkf/format.hpp"
#include "dualenkf/linalg.hpp"
#include "dualenkf/simulator.hpp"

namespace dualenkf {

namespace {

constexpr Eigen::Index kKroneckerMaxDim = 24;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r_squared = 0.0;
};

LineFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  if (x.size() > 2) f.slope_se = std::sqrt(sse / (n - 2.0) / sxx);
  f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, false);
  std::vector<std::complex<double>> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  return out;
}

Spectrum make_spectrum(const Matrix& m) {
  Spectrum s;
  s.eigenvalues = eigenvalues(m);
  s.max_real = s.eigenvalues.empty() ? 0.0 : s.eigenvalues.front().real();
  s.hurwitz = !s.eigenvalues.empty() && s.max_real < 0.0;
  return s;
}

}  // namespace

double frob_error(const Matrix& estimate, const Matrix& reference, bool relative) {
  if (estimate.rows() != reference.rows() || estimate.cols() != reference.cols())
    throw DimensionError("frob_error: shape mismatch");
  const double err = (estimate - reference).norm();
  if (!relative) return err;
  const double base = reference.norm();
  if (base == 0.0) throw std::domain_error("relative error against a zero reference");
  return err / base;
}

MseEstimate mse_over_runs(const std::vector<Matrix>& runs, const Matrix& reference, bool relative) {
  if (runs.size() < 2) throw std::invalid_argument("mse_over_runs needs at least two runs");
  std::vector<double> sq;
  sq.reserve(runs.size());
  for (const auto& r : runs) {
    const double e = frob_error(r, reference, relative);
    sq.push_back(e * e);
  }
  MseEstimate out;
  out.runs = runs.size();
  const auto n = static_cast<double>(sq.size());
  out.mean = std::accumulate(sq.begin(), sq.end(), 0.0) / n;
  double var = 0.0;
  for (double v : sq) var += (v - out.mean) * (v - out.mean);
  var /= (n - 1.0);
  out.standard_error = std::sqrt(var / n);
  return out;
}

ScalingReport fit_scaling(const std::vector<double>& n_values, const std::vector<double>& mse,
                          const std::vector<double>& standard_error) {
  if (n_values.size() != mse.size()) throw std::invalid_argument("fit_scaling: size mismatch");
  std::vector<double> distinct = n_values;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) throw std::invalid_argument("fit_scaling needs at least three distinct N values");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < mse.size(); ++i) {
    if (!(mse[i] > 0.0) || !(n_values[i] > 0.0)) throw std::domain_error("fit_scaling: nonpositive value in log domain");
    lx.push_back(std::log(n_values[i]));
    ly.push_back(std::log(mse[i]));
  }
  const auto fit = ols(lx, ly);
  ScalingReport r;
  r.n_values = n_values;
  r.mse = mse;
  r.standard_error = standard_error;
  r.slope = fit.slope;
  r.intercept = fit.intercept;
  if (lx.size() > 2) {
    boost::math::students_t dist(static_cast<double>(lx.size() - 2));
    r.slope_half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * fit.slope_se;
  }
  return r;
}

DecayFit fit_decay_rate_range(const std::vector<double>& time_to_go, const std::vector<double>& error, bool squared,
                              std::size_t begin, std::size_t end) {
  if (time_to_go.size() != error.size()) throw std::invalid_argument("fit_decay_rate: size mismatch");
  if (end > error.size() || begin >= end) throw std::invalid_argument("fit_decay_rate: empty window");
  if (end - begin < 10) throw std::invalid_argument("fit_decay_rate needs at least 10 points in the window");
  std::vector<double> x, y;
  for (std::size_t i = begin; i < end; ++i) {
    if (!(error[i] > 0.0)) throw std::domain_error("fit_decay_rate: nonpositive error in log domain");
    x.push_back(time_to_go[i]);
    y.push_back(std::log(error[i]));
  }
  const auto fit = ols(x, y);
  DecayFit out;
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  out.r_squared = fit.r_squared;
  out.rate = squared ? -fit.slope / 2.0 : -fit.slope;
  out.window_begin = begin;
  out.window_end = end;
  return out;
}

DecayFit fit_decay_rate(const std::vector<double>& time_to_go, const std::vector<double>& error, bool squared,
                        const DecayWindow& window) {
  if (time_to_go.size() != error.size() || time_to_go.size() < 2) throw std::invalid_argument("fit_decay_rate: bad input");
  // Work in increasing time-to-go order.
  std::vector<std::size_t> order(time_to_go.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time_to_go[a] < time_to_go[b]; });
  std::vector<double> s, e;
  for (auto i : order) {
    s.push_back(time_to_go[i]);
    e.push_back(error[i]);
  }
  const double lo = s.front() + window.lower_fraction * (s.back() - s.front());
  const double hi = s.front() + window.upper_fraction * (s.back() - s.front());
  std::size_t begin = std::lower_bound(s.begin(), s.end(), lo) - s.begin();
  std::size_t end = std::upper_bound(s.begin(), s.end(), hi) - s.begin();

  std::vector<std::string> warnings;
  bool monotone = true;
  for (std::size_t i = begin; i + 1 < end; ++i)
    if (e[i + 1] > e[i]) monotone = false;
  if (!monotone) {
    std::size_t best_begin = begin, best_len = 0, run_begin = begin;
    for (std::size_t i = begin; i < end; ++i) {
      if (i > begin && e[i] > e[i - 1]) run_begin = i;
      if (i + 1 - run_begin > best_len) {
        best_len = i + 1 - run_begin;
        best_begin = run_begin;
      }
    }
    warnings.push_back("fit window is not monotone; using widest decreasing sub-window [" +
                       format_number(s[best_begin]) + ", " + format_number(s[best_begin + best_len - 1]) + "]");
    begin = best_begin;
    end = best_begin + best_len;
  }
  auto fit = fit_decay_rate_range(s, e, squared, begin, end);
  fit.window_begin = begin;
  fit.window_end = end;
  fit.warnings = std::move(warnings);
  return fit;
}

Spectrum closed_loop_spectrum(const LqProblem& problem, const Matrix& K) {
  problem.check_dimensions();
  if (K.rows() != problem.input_dim() || K.cols() != problem.state_dim())
    throw DimensionError("closed_loop_spectrum: K shape");
  return make_spectrum(problem.dynamics.A + problem.dynamics.B * K);
}

Spectrum open_loop_spectrum(const LqProblem& problem) { return make_spectrum(problem.dynamics.A); }

Matrix solve_lyapunov_kronecker(const Matrix& M, const Matrix& Q) {
  const Eigen::Index d = M.rows();
  const Matrix I = Matrix::Identity(d, d);
  // Column-major vec: vec(MᵀX) = (I⊗Mᵀ)vec X, vec(XM) = (Mᵀ⊗I)vec X.
  Matrix op = Matrix::Zero(d * d, d * d);
  const Matrix Mt = M.transpose();
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      op.block(i * d, j * d, d, d) += I(i, j) * Mt;
      op.block(i * d, j * d, d, d) += Mt(i, j) * I;
    }
  const Vector rhs = -Eigen::Map<const Vector>(Q.data(), d * d);
  const Vector x = op.partialPivLu().solve(rhs);
  return linalg::symmetrize(Eigen::Map<const Matrix>(x.data(), d, d));
}

Matrix solve_lyapunov_schur(const Matrix& M, const Matrix& Q) {
  using CMatrix = Eigen::MatrixXcd;
  using CVector = Eigen::VectorXcd;
  const Eigen::Index d = M.rows();
  // Mᵀ = U T Uᴴ, M = U Tᴴ Uᴴ (M real). Then T Y + Y Tᴴ = F with Y = UᴴXU, F = −UᴴQU.
  Eigen::ComplexSchur<CMatrix> schur(M.transpose().cast<std::complex<double>>());
  const CMatrix& T = schur.matrixT();
  const CMatrix& U = schur.matrixU();
  const CMatrix F = -(U.adjoint() * Q.cast<std::complex<double>>() * U);
  CMatrix Y = CMatrix::Zero(d, d);
  for (Eigen::Index j = d - 1; j >= 0; --j) {
    CVector rhs = F.col(j);
    for (Eigen::Index k = j + 1; k < d; ++k) rhs -= std::conj(T(j, k)) * Y.col(k);
    CMatrix lhs = T;
    lhs.diagonal().array() += std::conj(T(j, j));
    Y.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
  }
  return linalg::symmetrize((U * Y * U.adjoint()).real());
}

Matrix solve_lyapunov(const Matrix& M, const Matrix& Q) {
  if (M.rows() != M.cols() || Q.rows() != M.rows() || Q.cols() != M.cols())
    throw DimensionError("solve_lyapunov: shape mismatch");
  return M.rows() <= kKroneckerMaxDim ? solve_lyapunov_kronecker(M, Q) : solve_lyapunov_schur(M, Q);
}

double average_cost_lyapunov(const LqProblem& problem, const Matrix& K) {
  const auto spectrum = closed_loop_spectrum(problem, K);
  if (!spectrum.hurwitz) {
    std::vector<std::complex<double>> bad;
    for (const auto& ev : spectrum.eigenvalues)
      if (ev.real() >= 0.0) bad.push_back(ev);
    std::string msg = "closed loop is not Hurwitz; unstable eigenvalues:";
    for (const auto& ev : bad) msg += " (" + format_number(ev.real()) + (ev.imag() >= 0 ? "+" : "") + format_number(ev.imag()) + "i)";
    throw StabilityError(msg, bad);
  }
  const Matrix closed = problem.dynamics.A + problem.dynamics.B * K;
  const Matrix& C = problem.cost.C;
  const Matrix Q = linalg::symmetrize(C.transpose() * C + K.transpose() * problem.cost.R * K);
  const Matrix X = solve_lyapunov(closed, Q);
  return (X * problem.dynamics.noise_covariance()).trace();
}

MseEstimate average_cost_monte_carlo(const LqProblem& problem, const Matrix& K, double horizon, double burn_in,
                                     double tau, int runs, std::uint64_t seed) {
  if (runs < 2) throw std::invalid_argument("average_cost_monte_carlo needs at least two runs");
  const long steps = step_count(horizon, tau);
  const long burn = std::lround(burn_in / tau);
  if (burn >= steps) throw std::invalid_argument("burn-in must be shorter than the horizon");
  const Simulator plant(problem.dynamics);
  const Matrix& C = problem.cost.C;
  const Matrix& R = problem.cost.R;
  std::vector<double> averages;
  for (int r = 0; r < runs; ++r) {
    Vector x = Vector::Zero(problem.state_dim());
    double acc = 0.0;
    for (long k = 0; k < steps; ++k) {
      const Vector u = K * x;
      if (k >= burn) acc += (C * x).squaredNorm() + u.dot(R * u);
      RandomStream stream(seed, Channel::Rollout, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k));
      x += plant.step(x, u, tau, stream);
    }
    averages.push_back(acc / static_cast<double>(steps - burn));
  }
  MseEstimate out;
  out.runs = averages.size();
  const auto n = static_cast<double>(averages.size());
  out.mean = std::accumulate(averages.begin(), averages.end(), 0.0) / n;
  double var = 0.0;
  for (double v : averages) var += (v - out.mean) * (v - out.mean);
  out.standard_error = std::sqrt(var / (n - 1.0) / n);
  return out;
}

double leqg_cost_monte_carlo(const LqProblem& problem, const GainSchedule& gains, const Vector& x0, double T,
                             double tau, int runs, std::uint64_t seed) {
  if (problem.cost.kind != CostKind::LEQG) throw std::invalid_argument("leqg_cost_monte_carlo needs an LEQG problem");
  if (runs < 1) throw std::invalid_argument("leqg_cost_monte_carlo needs at least one run");
  const double theta = problem.cost.theta;
  const long steps = step_count(T, tau);
  const Simulator plant(problem.dynamics);
  std::vector<double> exponents;
  exponents.reserve(static_cast<std::size_t>(runs));
  for (int r = 0; r < runs; ++r) {
    Vector x = x0;
    double total = 0.0;
    for (long k = 0; k < steps; ++k) {
      const Vector u = gains.at(k) * x;
      total += problem.cost.running_cost(x, u) * tau;
      RandomStream stream(seed, Channel::Rollout, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k));
      x += plant.step(x, u, tau, stream);
    }
    total += 0.5 * x.dot(problem.cost.G * x);
    exponents.push_back(theta * total);
  }
  // log mean exp with the running maximum factored out.
  const double shift = *std::max_element(exponents.begin(), exponents.end());
  double acc = 0.0;
  for (double e : exponents) acc += std::exp(e - shift);
  return (shift + std::log(acc / static_cast<double>(runs))) / theta;
}

CostReport relative_cost_and_gain(const Matrix& K_alg, const LqProblem& problem, const AreSolution& reference) {
  const Matrix K_opt = gain_from_p(reference.P_bar, problem);
  CostReport r;
  r.relative_gain = frob_error(K_alg, K_opt, true);
  if (problem.cost.kind == CostKind::LQG) {
    r.method = CostMethod::Lyapunov;
    r.optimal_cost = average_cost_lyapunov(problem, K_opt);
    r.cost = average_cost_lyapunov(problem, K_alg);
  } else {
    // Risk-sensitive average cost: J_T/T from a long finite-horizon estimate.
    constexpr double kHorizon = 20.0;
    constexpr double kStep = 0.01;
    constexpr int kRuns = 400;
    const Vector x0 = Vector::Zero(problem.state_dim());
    r.method = CostMethod::MonteCarlo;
    r.optimal_cost = leqg_cost_monte_carlo(problem, GainSchedule::constant(K_opt), x0, kHorizon, kStep, kRuns, 1) / kHorizon;
    r.cost = leqg_cost_monte_carlo(problem, GainSchedule::constant(K_alg), x0, kHorizon, kStep, kRuns, 1) / kHorizon;
  }
  if (r.optimal_cost == 0.0) {
    r.relative_cost = r.cost == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    r.relative_cost = (r.cost - r.optimal_cost) / r.optimal_cost;
  }
  return r;
}

double time_averaged_relative_gain(const GainSchedule& K_alg, const GainSchedule& K_opt) {
  const long n = static_cast<long>(std::max(K_alg.gains.size(), K_opt.gains.size()));
  if (n == 1) return frob_error(K_alg.at(0), K_opt.at(0), true);
  // Trapezoid rule on a uniform grid; the 1/T and step cancel.
  double acc = 0.0;
  for (long k = 0; k < n; ++k) {
    const double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
    acc += w * frob_error(K_alg.at(k), K_opt.at(k), true);
  }
  return acc / static_cast<double>(n - 1);
}

}  // namespace dualenkf
