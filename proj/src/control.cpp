#include "dualenkf/control.hpp"

#include <cmath>
#include <ostream>

#include "dualenkf/format.hpp"
#include "dualenkf/riccati.hpp"

namespace dualenkf {

namespace {

constexpr double kDivergenceThreshold = 1e12;

const Matrix& pick(const std::vector<Matrix>& seq, bool stationary, long k) {
  if (stationary || seq.size() == 1) return seq.front();
  k = std::clamp(k, 0L, static_cast<long>(seq.size()) - 1);
  return seq[static_cast<std::size_t>(k)];
}

}  // namespace

GainSchedule GainSchedule::constant(Matrix gain) {
  GainSchedule g;
  g.gains.push_back(std::move(gain));
  g.stationary = true;
  return g;
}

const Matrix& GainSchedule::at(long k) const { return pick(gains, stationary, k); }

Matrix gain_from_p(const Matrix& P, const LqProblem& problem) {
  problem.check_dimensions();
  if (P.rows() != problem.state_dim() || P.cols() != problem.state_dim()) throw DimensionError("gain_from_p: P shape");
  return -problem.cost.R.llt().solve(problem.dynamics.B.transpose() * P);
}

GainSchedule gains_from_enkf(const EnkfOutput& output, const LqProblem& problem) {
  if (output.size() == 0) throw std::invalid_argument("empty EnKF output");
  GainSchedule g;
  g.step = output.size() > 1 ? output.times[1] - output.times[0] : 0.0;
  if (problem.horizon.kind == HorizonKind::Average) {
    if (!output.primal.front()) throw NumericalError("P^(N) undefined at t = 0");
    g.gains.push_back(gain_from_p(*output.primal.front(), problem));
    g.stationary = true;
    return g;
  }
  g.gains.reserve(output.size());
  for (std::size_t k = 0; k < output.size(); ++k) {
    if (!output.primal[k]) throw NumericalError("P^(N) undefined at step " + std::to_string(k));
    g.gains.push_back(gain_from_p(*output.primal[k], problem));
  }
  return g;
}

double empirical_q(const Vector& x, const Vector& a, const Matrix& P, double tau, RandomStream& stream,
                   const Simulator& simulator, const CostModel& cost) {
  const Vector increment = simulator.step(x, a, tau, stream);
  return cost.running_cost(x, a) * tau + x.dot(P * increment);
}

Vector probe_control(const Vector& x, const Matrix& P, const OnlineConfig& config, const ProbeKey& key,
                     const Simulator& simulator, const LqProblem& problem) {
  if (config.evaluations < 1) throw std::invalid_argument("probe_control: need at least one evaluation");
  const double tau = config.step;
  const Eigen::Index m = problem.input_dim();
  const auto ne = static_cast<std::uint64_t>(config.evaluations);
  const Matrix r_inv = problem.cost.R.llt().solve(Matrix::Identity(m, m));

  auto average_q = [&](const Vector& a, std::uint64_t direction) {
    double sum = 0.0;
    for (std::uint64_t j = 0; j < ne; ++j) {
      RandomStream stream(key.seed, Channel::Probe, key.offset + direction * ne + j, key.step);
      sum += empirical_q(x, a, P, tau, stream, simulator, problem.cost);
    }
    return sum / static_cast<double>(ne);
  };

  const double baseline = average_q(Vector::Zero(m), 0);
  Vector u(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vector probe = r_inv.col(i);
    const double shifted = average_q(probe, static_cast<std::uint64_t>(i) + 1);
    // The difference estimates β_i = (R⁻¹BᵀPx)_i; the optimal control is −β.
    u(i) = -(shifted - baseline - 0.5 * r_inv(i, i) * tau) / tau;
  }
  return u;
}

ProbeSchedule probe_schedule_from_enkf(const EnkfOutput& output, const LqProblem& problem, const OnlineConfig& config,
                                       std::uint64_t seed) {
  ProbeSchedule s;
  s.config = config;
  s.seed = seed;
  if (problem.horizon.kind == HorizonKind::Average) {
    if (!output.primal.front()) throw NumericalError("P^(N) undefined at t = 0");
    s.P.push_back(*output.primal.front());
    s.stationary = true;
    return s;
  }
  for (std::size_t k = 0; k < output.size(); ++k) {
    if (!output.primal[k]) throw NumericalError("P^(N) undefined at step " + std::to_string(k));
    s.P.push_back(*output.primal[k]);
  }
  return s;
}

Rollout closed_loop_rollout(const LqProblem& problem, const ControlLaw& law, const Vector& x0, double T, double tau,
                            std::uint64_t seed) {
  problem.check_dimensions();
  if (x0.size() != problem.state_dim()) throw DimensionError("rollout: x0 has wrong size");
  const long steps = step_count(T, tau);
  const double h = T / static_cast<double>(steps);
  const Simulator plant(problem.dynamics);
  // The probing controller talks to its own copy of the simulator.
  const Simulator probe_sim(problem.dynamics);

  Rollout r;
  r.times.reserve(steps + 1);
  r.states.reserve(steps + 1);
  Vector x = x0;
  double cost = 0.0;
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * h;
    Vector u;
    if (const auto* gains = std::get_if<GainSchedule>(&law)) {
      u = gains->at(k) * x;
    } else {
      const auto& probe = std::get<ProbeSchedule>(law);
      OnlineConfig cfg = probe.config;
      cfg.step = h;
      u = probe_control(x, pick(probe.P, probe.stationary, k), cfg, ProbeKey{probe.seed, static_cast<std::uint64_t>(k), 0},
                        probe_sim, problem);
    }
    r.times.push_back(t);
    r.states.push_back(x);
    r.controls.push_back(u);
    r.cumulative_cost.push_back(cost);
    r.energy.push_back(x.squaredNorm());
    if (k == steps) break;
    cost += problem.cost.running_cost(x, u) * h;
    RandomStream stream(seed, Channel::Rollout, 0, static_cast<std::uint64_t>(k));
    x += plant.step(x, u, h, stream);
    if (!x.allFinite() || x.norm() > kDivergenceThreshold) {
      throw DivergenceError("closed loop diverged at t = " + format_number(t + h), t + h);
    }
  }
  return r;
}

void write_csv(std::ostream& os, const Rollout& rollout) {
  if (rollout.times.empty()) return;
  const Eigen::Index d = rollout.states.front().size();
  const Eigen::Index m = rollout.controls.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < m; ++i) os << ",u" << i;
  os << ",cost,energy\n";
  for (std::size_t k = 0; k < rollout.times.size(); ++k) {
    os << format_number(rollout.times[k]);
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_number(rollout.states[k](i));
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << format_number(rollout.controls[k](i));
    os << ',' << format_number(rollout.cumulative_cost[k]) << ',' << format_number(rollout.energy[k]) << '\n';
  }
}

}  // namespace dualenkf
