#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dualenkf/model.hpp"
#include "dualenkf/rng.hpp"

namespace dualenkf {

/// N particles in ℝᵈ stored as the columns of a d×N matrix, the grid index
/// they belong to, and the RNG substream id each particle draws from.
struct Ensemble {
  Matrix particles;
  long step_index = 0;
  std::vector<std::uint64_t> stream_ids;

  Eigen::Index size() const { return particles.cols(); }
  Eigen::Index dim() const { return particles.rows(); }
};

struct EnkfConfig {
  int particles = 500;
  double horizon = 10.0;
  double step = 0.02;
  std::uint64_t seed = 0;
  /// Relative regularization ε·tr(S)/d·I added before inverting S. 0 = off.
  double jitter = 0.0;
  int threads = 1;
};

struct EnkfStats {
  /// Cholesky solves with S^(N) made by the mean-field coupling.
  std::uint64_t covariance_inversions = 0;
  /// Inversions that needed the fallback jitter.
  std::uint64_t jitter_retries = 0;
  std::uint64_t simulator_calls = 0;
};

/// Trajectories of the ensemble statistics, indexed by grid step k = 0..K
/// (t_k = kτ).
struct EnkfOutput {
  std::vector<double> times;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  /// Recovered P^(N); nullopt where S^(N) is not invertible.
  std::vector<std::optional<Matrix>> primal;
  Ensemble final_ensemble;
  EnkfStats stats;

  std::size_t size() const { return times.size(); }
};

class SingularCovarianceError : public NumericalError {
 public:
  SingularCovarianceError(const std::string& what, long step) : NumericalError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class DegenerateEnsembleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// N i.i.d. draws from 𝒩(0, S_T) via the Cholesky factor of S_T. Particle i
/// uses the Terminal substream (seed, stream_ids[i], step_index); with no ids
/// given, particle i uses id i.
Ensemble sample_terminal(int particles, const Matrix& terminal_covariance, std::uint64_t seed, long step_index,
                         std::vector<std::uint64_t> stream_ids = {});

struct Moments {
  Vector mean;        // n
  Matrix covariance;  // S, divisor N − 1
  Matrix cross;       // L = 1/(N−1) Σ (Y − n)(CY − Cn)ᵀ
};

Moments empirical_moments(const Ensemble& ensemble, const Matrix& C);

/// LQG: R⁻¹. LEQG: (|θ|R)⁻¹.
Matrix exploration_covariance(const LqProblem& problem);

/// Coefficients of the two mean-field fields for the problem's cost kind:
/// 𝒜(z) = a·L·C(z + n) + c·Σ·S⁻¹(z − n).
struct MeanFieldCoefficients {
  double interaction = 0.5;  // a
  double correction = 0.5;   // c; 0 means S⁻¹ is never needed
};

MeanFieldCoefficients mean_field_coefficients(const LqProblem& problem);

/// 𝒜(z; n, S) with L = S·Cᵀ. Throws SingularCovarianceError when S must be
/// inverted and is singular.
Vector mean_field_term(const Vector& z, const Vector& mean, const Matrix& S, const LqProblem& problem);

/// Offline backward dual EnKF. Throws std::invalid_argument on bad config,
/// SingularCovarianceError if S^(N) cannot be inverted even after jitter.
EnkfOutput run_offline(const LqProblem& problem, const EnkfConfig& config,
                       std::vector<std::uint64_t> stream_ids = {});

/// One row per grid step: t, n components, S entries, P entries (row-major),
/// with header. Undefined P entries are written as nan.
void write_csv(std::ostream& os, const EnkfOutput& output);

/// Compact binary snapshot (little-endian doubles) of times, S and P, used to
/// resume online control without rerunning the ensemble.
void write_snapshot(std::ostream& os, const EnkfOutput& output);
EnkfOutput read_snapshot(std::istream& is);

}  // namespace dualenkf
