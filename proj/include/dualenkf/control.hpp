#pragma once

#include <cstdint>
#include <iosfwd>
#include <variant>
#include <vector>

#include "dualenkf/enkf.hpp"
#include "dualenkf/model.hpp"
#include "dualenkf/simulator.hpp"

namespace dualenkf {

/// Time-varying gains K_k on a uniform grid, or a single stationary K̄.
struct GainSchedule {
  double step = 0.0;
  std::vector<Matrix> gains;  // one per grid point, or exactly one if stationary
  bool stationary = false;

  static GainSchedule constant(Matrix gain);
  /// Gain for grid step k (clamped to the schedule).
  const Matrix& at(long k) const;
};

/// K = −R⁻¹BᵀP.
Matrix gain_from_p(const Matrix& P, const LqProblem& problem);

/// Finite horizon: K_k^(N) from P_k^(N). Average cost: K̄^(N) from P_0^(N).
/// Throws NumericalError when a needed P^(N) is undefined.
GainSchedule gains_from_enkf(const EnkfOutput& output, const LqProblem& problem);

/// One noisy evaluation of c(x, a)τ + xᵀP·𝒮(x, a; τ).
double empirical_q(const Vector& x, const Vector& a, const Matrix& P, double tau, RandomStream& stream,
                   const Simulator& simulator, const CostModel& cost);

struct OnlineConfig {
  int evaluations = 1;  // N_e
  double step = 0.02;
};

/// Where probe_control draws its randomness: evaluation j of direction i
/// (i = 0 for the a = 0 baseline, i ≥ 1 for a = R⁻¹e_{i−1}) uses the Probe
/// substream (seed, i·N_e + j + offset, step).
struct ProbeKey {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t offset = 0;
};

/// Model-free estimate of the optimal control −R⁻¹BᵀPx from simulator probes
/// at a = 0 and a = R⁻¹eᵢ. Exact when the simulator is noiseless.
Vector probe_control(const Vector& x, const Matrix& P, const OnlineConfig& config, const ProbeKey& key,
                     const Simulator& simulator, const LqProblem& problem);

/// Online probing controller: P schedule (per grid step, or a single P̄).
struct ProbeSchedule {
  std::vector<Matrix> P;
  bool stationary = false;
  OnlineConfig config;
  std::uint64_t seed = 0;
};

ProbeSchedule probe_schedule_from_enkf(const EnkfOutput& output, const LqProblem& problem, const OnlineConfig& config,
                                       std::uint64_t seed);

using ControlLaw = std::variant<GainSchedule, ProbeSchedule>;

struct Rollout {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> controls;       // control applied on [t_k, t_{k+1}); last entry repeats
  std::vector<double> cumulative_cost;  // Σ c(X, U)τ up to t_k
  std::vector<double> energy;           // |X_k|²
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, double time) : NumericalError(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Euler–Maruyama closed loop of the true system under a control law. Noise
/// comes from the Rollout substream (seed, 0, k).
Rollout closed_loop_rollout(const LqProblem& problem, const ControlLaw& law, const Vector& x0, double T, double tau,
                            std::uint64_t seed);

/// Header t, x*, u*, cost, energy.
void write_csv(std::ostream& os, const Rollout& rollout);

}  // namespace dualenkf
