#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dualenkf/config.hpp"
#include "dualenkf/metrics.hpp"

namespace dualenkf {

inline constexpr int kSummarySchemaVersion = 1;

std::string code_version();
std::string sha256_hex(std::string_view bytes);

/// Deterministic seed of run `run` within group `group` (variant, N index, ...).
std::uint64_t run_seed(std::uint64_t seed, std::uint64_t group, std::uint64_t run);

struct OutputFile {
  std::string name;  // relative to the bundle directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

/// Seconds spent per phase, summed over runs (so may exceed wall time when threaded).
struct PhaseTimings {
  double oracle = 0.0;
  double ensemble = 0.0;
  double metrics = 0.0;
  double write = 0.0;
  double wall = 0.0;
};

struct RunFailure {
  std::string label;
  int run = 0;
  std::string message;
};

struct ConvergenceResult {
  std::string label;
  ErrorSeries enkf_vs_are;  // ‖P_t^(N) − P̄‖_F, first run
  ErrorSeries dre_vs_are;   // ‖P_t − P̄‖_F
  DecayFit enkf_fit;
  DecayFit dre_fit;
  double initial_relative_error = 0.0;    // ‖P_0^(N) − P̄‖_F / ‖P̄‖_F, mean over runs
  double max_dual_relative_error = 0.0;   // max_t ‖S_t^(N) − S_t‖_F / ‖S_t‖_F, mean over runs
};

struct ScalingResult {
  std::string label;
  ScalingReport dual;    // MSE of S̄^(N) vs S̄
  ScalingReport primal;  // MSE of P̄^(N) vs P̄
};

struct StabilizationResult {
  std::string label;
  std::vector<std::uint64_t> problem_seeds;
  std::vector<double> open_max_real;
  std::vector<double> closed_max_real;
  int hurwitz_count = 0;
  int evaluated = 0;
  std::vector<CostReport> costs;  // Hurwitz runs only
};

struct EnergyResult {
  std::string label;
  std::vector<double> times;
  std::vector<double> mean_energy;
  std::vector<double> mean_optimal_energy;  // same noise, exact DRE / ARE gains
  double time_averaged_relative_gain = 0.0;  // mean over runs
  int runs = 0;
};

struct GainProbeResult {
  std::string label;
  int particles = 0;
  std::vector<double> evaluations;  // N_e
  std::vector<double> mse;          // ‖K̂ − K̄‖_F² / ‖K̄‖_F²
  std::vector<double> standard_error;
};

struct ReportBundle {
  std::filesystem::path directory;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::vector<OutputFile> files;
  PhaseTimings timings;
  std::vector<RunFailure> failures;
  int runs_attempted = 0;
  int runs_completed = 0;
  bool complete() const { return failures.empty(); }

  std::vector<ConvergenceResult> convergence;
  std::vector<ScalingResult> scaling;
  std::vector<StabilizationResult> stabilization;
  std::vector<EnergyResult> energy;
  std::vector<GainProbeResult> gain_probe;

  const OutputFile* find_file(const std::string& name) const;
};

/// Runs every (variant, N, run) task of the configured experiment, then writes
/// config.echo, the CSV series, summary.json, timings.json and manifest.json
/// into config.output_dir from a single writer.
ReportBundle run_experiment(const ExperimentConfig& config);

/// Pre-plateau window [begin, end) of an error series ordered by increasing
/// time-to-go: starts after the first `skip` fraction and stops once the error
/// falls below `floor_factor` times the plateau level (median of the last 20%).
std::pair<std::size_t, std::size_t> pre_plateau_window(const std::vector<double>& error, double floor_factor = 3.0,
                                                       double skip = 0.05);

}  // namespace dualenkf
