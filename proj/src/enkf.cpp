#include "dualenkf/enkf.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "dualenkf/format.hpp"
#include "dualenkf/linalg.hpp"
#include "dualenkf/parallel.hpp"
#include "dualenkf/riccati.hpp"
#include "dualenkf/simulator.hpp"

namespace dualenkf {

namespace {

constexpr double kFallbackJitter = 1e-8;

// Column sum by fixed-order pairwise recursion.
Vector pairwise_column_sum(const Matrix& m, Eigen::Index begin, Eigen::Index end) {
  const Eigen::Index n = end - begin;
  if (n <= 8) {
    Vector acc = Vector::Zero(m.rows());
    for (Eigen::Index i = begin; i < end; ++i) acc += m.col(i);
    return acc;
  }
  const Eigen::Index mid = begin + n / 2;
  return pairwise_column_sum(m, begin, mid) + pairwise_column_sum(m, mid, end);
}

std::vector<std::uint64_t> default_ids(int n, std::vector<std::uint64_t> ids) {
  if (ids.empty()) {
    ids.resize(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  }
  if (static_cast<int>(ids.size()) != n) throw std::invalid_argument("stream id count does not match particle count");
  return ids;
}

// Σ·S⁻¹ via Cholesky, with the one-shot jitter retry.
Matrix sigma_times_inverse(const Matrix& S, const Matrix& Sigma, double jitter, long step, EnkfStats& stats) {
  const Eigen::Index d = S.rows();
  const double level = S.trace() / static_cast<double>(d);
  Matrix regularized = linalg::symmetrize(S);
  if (jitter > 0.0) regularized.diagonal().array() += jitter * level;
  ++stats.covariance_inversions;
  Eigen::LLT<Matrix> llt(regularized);
  if (llt.info() != Eigen::Success) {
    ++stats.jitter_retries;
    regularized.diagonal().array() += kFallbackJitter * std::max(level, std::numeric_limits<double>::min());
    llt.compute(regularized);
    if (llt.info() != Eigen::Success)
      throw SingularCovarianceError("empirical covariance is singular at step " + std::to_string(step), step);
  }
  // S⁻¹Σ solved, then transposed: (S⁻¹Σ)ᵀ = ΣS⁻¹ for symmetric S, Σ.
  return llt.solve(Sigma).transpose();
}

template <typename T>
void put(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw std::runtime_error("snapshot: truncated input");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

constexpr char kSnapshotMagic[8] = {'D', 'E', 'N', 'K', 'F', 'S', 'N', 'P'};
constexpr std::uint32_t kSnapshotVersion = 1;

}  // namespace

Ensemble sample_terminal(int particles, const Matrix& terminal_covariance, std::uint64_t seed, long step_index,
                         std::vector<std::uint64_t> stream_ids) {
  if (particles < 1) throw std::invalid_argument("sample_terminal: need at least one particle");
  auto factor = linalg::cholesky_factor(terminal_covariance);
  if (!factor) throw NumericalError("terminal covariance is not symmetric positive definite");
  Ensemble ens;
  ens.step_index = step_index;
  ens.stream_ids = default_ids(particles, std::move(stream_ids));
  const Eigen::Index d = terminal_covariance.rows();
  Matrix z(d, particles);
  for (int i = 0; i < particles; ++i) {
    RandomStream stream(seed, Channel::Terminal, ens.stream_ids[static_cast<std::size_t>(i)],
                        static_cast<std::uint64_t>(step_index));
    auto col = z.col(i);
    stream.fill_normal(col);
  }
  ens.particles = (*factor) * z;
  return ens;
}

Moments empirical_moments(const Ensemble& ensemble, const Matrix& C) {
  const Eigen::Index n = ensemble.size();
  if (n < 2) throw DegenerateEnsembleError("empirical moments need at least two particles");
  if (C.cols() != ensemble.dim()) throw DimensionError("empirical_moments: C has wrong column count");
  Moments out;
  out.mean = pairwise_column_sum(ensemble.particles, 0, n) / static_cast<double>(n);
  const Matrix centered = ensemble.particles.colwise() - out.mean;
  const double norm = 1.0 / static_cast<double>(n - 1);
  out.covariance = linalg::symmetrize(norm * (centered * centered.transpose()));
  const Matrix projected = C * centered;
  out.cross = norm * (centered * projected.transpose());
  return out;
}

Matrix exploration_covariance(const LqProblem& problem) {
  problem.check_dimensions();
  auto inv = linalg::spd_inverse(problem.cost.scale() * problem.cost.R);
  if (!inv) throw std::invalid_argument("R is not symmetric positive definite");
  return *inv;
}

MeanFieldCoefficients mean_field_coefficients(const LqProblem& problem) {
  if (problem.cost.kind == CostKind::LQG) return {0.5, 0.5};
  const double s = std::abs(problem.cost.theta);
  return {0.5 * s, problem.cost.theta > 0.0 ? 1.0 : 0.0};
}

Vector mean_field_term(const Vector& z, const Vector& mean, const Matrix& S, const LqProblem& problem) {
  problem.check_dimensions();
  const Eigen::Index d = problem.state_dim();
  if (z.size() != d || mean.size() != d || S.rows() != d || S.cols() != d)
    throw DimensionError("mean_field_term: dimension mismatch");
  const auto coef = mean_field_coefficients(problem);
  const Matrix& C = problem.cost.C;
  Vector out = coef.interaction * (S * (C.transpose() * (C * (z + mean))));
  const Matrix Sigma = problem.dynamics.noise_covariance();
  if (coef.correction != 0.0 && !Sigma.isZero(0.0)) {
    Eigen::LLT<Matrix> llt(linalg::symmetrize(S));
    if (llt.info() != Eigen::Success) throw SingularCovarianceError("mean_field_term: S is singular", -1);
    out += coef.correction * (Sigma * llt.solve(z - mean));
  }
  return out;
}

EnkfOutput run_offline(const LqProblem& problem, const EnkfConfig& config, std::vector<std::uint64_t> stream_ids) {
  problem.check_dimensions();
  const Eigen::Index d = problem.state_dim();
  const Eigen::Index m = problem.input_dim();
  const int n = config.particles;
  if (n < d + 1)
    throw std::invalid_argument("ensemble needs at least d+1 = " + std::to_string(d + 1) + " particles, got " +
                                std::to_string(n));
  if (config.jitter < 0.0) throw std::invalid_argument("jitter must be nonnegative");
  const long steps = step_count(config.horizon, config.step);
  const double tau = config.horizon / static_cast<double>(steps);
  const int threads = std::max(config.threads, 1);

  const Simulator simulator(problem.dynamics);
  const Matrix& C = problem.cost.C;
  const Matrix Sigma = problem.dynamics.noise_covariance();
  const bool has_noise = !Sigma.isZero(0.0);
  const auto coef = mean_field_coefficients(problem);
  const bool needs_inverse = coef.correction != 0.0 && has_noise;
  const Matrix eta_factor = linalg::psd_factor(exploration_covariance(problem) * tau);

  EnkfOutput out;
  out.times.resize(steps + 1);
  out.means.resize(steps + 1);
  out.covariances.resize(steps + 1);
  out.primal.resize(steps + 1);
  for (long k = 0; k <= steps; ++k) out.times[k] = static_cast<double>(k) * tau;

  Ensemble ens = sample_terminal(n, dual_terminal(problem), config.seed, steps, std::move(stream_ids));
  auto record = [&](long k, const Moments& mom) {
    out.means[k] = mom.mean;
    out.covariances[k] = mom.covariance;
    if (auto inv = linalg::spd_inverse(problem.cost.scale() * mom.covariance)) out.primal[k] = std::move(*inv);
  };

  Moments mom = empirical_moments(ens, C);
  record(steps, mom);

  std::vector<RandomStream> process_streams;
  process_streams.reserve(static_cast<std::size_t>(n));
  Matrix eta_noise(m, n);
  for (long k = steps; k > 0; --k) {
    // 𝒜(z) = F z + f with F = aLC + cΣS⁻¹, f = (aLC − cΣS⁻¹) n.
    const Matrix interaction = coef.interaction * (mom.cross * C);
    Matrix field = interaction;
    Vector offset = interaction * mom.mean;
    if (needs_inverse) {
      const Matrix correction = coef.correction * sigma_times_inverse(mom.covariance, Sigma, config.jitter, k, out.stats);
      field += correction;
      offset -= correction * mom.mean;
    }

    process_streams.clear();
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
      process_streams.emplace_back(config.seed, Channel::Process, ens.stream_ids[i], static_cast<std::uint64_t>(k));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        RandomStream stream(config.seed, Channel::Exploration, ens.stream_ids[i], static_cast<std::uint64_t>(k));
        auto col = eta_noise.col(static_cast<Eigen::Index>(i));
        stream.fill_normal(col);
      }
    });
    // Exploration increments Δη ~ 𝒩(0, Cov(η)τ); the simulator receives Δη/τ.
    const Matrix controls = (eta_factor * eta_noise) / tau;

    Matrix increment = simulator.step_batch(ens.particles, controls, tau, process_streams, threads);
    increment.noalias() += tau * (field * ens.particles);
    increment.colwise() += tau * offset;
    ens.particles -= increment;
    ens.step_index = k - 1;

    if (!ens.particles.allFinite())
      throw NumericalError("ensemble diverged at step " + std::to_string(k - 1));
    mom = empirical_moments(ens, C);
    record(k - 1, mom);
  }
  out.stats.simulator_calls = simulator.calls();
  out.final_ensemble = std::move(ens);
  return out;
}

void write_csv(std::ostream& os, const EnkfOutput& output) {
  if (output.size() == 0) return;
  const Eigen::Index d = output.means.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",n" << i;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) os << ",S" << i << '_' << j;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) os << ",P" << i << '_' << j;
  os << '\n';
  for (std::size_t k = 0; k < output.size(); ++k) {
    os << format_number(output.times[k]);
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_number(output.means[k](i));
    const Matrix& S = output.covariances[k];
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) os << ',' << format_number(S(i, j));
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        os << ',' << (output.primal[k] ? format_number((*output.primal[k])(i, j)) : std::string("nan"));
    os << '\n';
  }
}

void write_snapshot(std::ostream& os, const EnkfOutput& output) {
  const std::uint32_t d = output.size() ? static_cast<std::uint32_t>(output.means.front().size()) : 0u;
  os.write(kSnapshotMagic, sizeof(kSnapshotMagic));
  put<std::uint32_t>(os, kSnapshotVersion);
  put<std::uint32_t>(os, d);
  put<std::uint64_t>(os, output.size());
  for (std::size_t k = 0; k < output.size(); ++k) {
    put<double>(os, output.times[k]);
    for (std::uint32_t i = 0; i < d; ++i) put<double>(os, output.means[k](i));
    const Matrix& S = output.covariances[k];
    for (std::uint32_t i = 0; i < d; ++i)
      for (std::uint32_t j = 0; j < d; ++j) put<double>(os, S(i, j));
    put<std::uint8_t>(os, output.primal[k] ? 1 : 0);
    if (output.primal[k])
      for (std::uint32_t i = 0; i < d; ++i)
        for (std::uint32_t j = 0; j < d; ++j) put<double>(os, (*output.primal[k])(i, j));
  }
}

EnkfOutput read_snapshot(std::istream& is) {
  char magic[sizeof(kSnapshotMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0)
    throw std::runtime_error("snapshot: bad magic");
  if (get<std::uint32_t>(is) != kSnapshotVersion) throw std::runtime_error("snapshot: unsupported version");
  const auto d = static_cast<Eigen::Index>(get<std::uint32_t>(is));
  const auto count = get<std::uint64_t>(is);
  EnkfOutput out;
  out.times.resize(count);
  out.means.resize(count);
  out.covariances.resize(count);
  out.primal.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.times[k] = get<double>(is);
    out.means[k].resize(d);
    for (Eigen::Index i = 0; i < d; ++i) out.means[k](i) = get<double>(is);
    out.covariances[k].resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) out.covariances[k](i, j) = get<double>(is);
    if (get<std::uint8_t>(is)) {
      Matrix p(d, d);
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) p(i, j) = get<double>(is);
      out.primal[k] = std::move(p);
    }
  }
  return out;
}

}  // namespace dualenkf
