#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualenkf/control.hpp"
#include "dualenkf/enkf.hpp"
#include "dualenkf/model.hpp"

namespace dualenkf {

inline constexpr int kConfigSchemaVersion = 1;

/// Malformed config: carries the offending line (0 if unknown) and field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, int line, std::string field)
      : std::invalid_argument(what), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

/// `[section]` headers followed by `key = value` lines; `#` starts a comment.
/// Keys before the first header belong to the "" section.
class ConfigFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static ConfigFile parse(std::istream& is);
  static ConfigFile parse_string(const std::string& text);
  static ConfigFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  const Entry* find(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key, std::optional<std::string> fallback = {}) const;
  double get_double(const std::string& section, const std::string& key, std::optional<double> fallback = {}) const;
  long get_int(const std::string& section, const std::string& key, std::optional<long> fallback = {}) const;
  std::uint64_t get_uint(const std::string& section, const std::string& key, std::optional<std::uint64_t> fallback = {}) const;
  bool get_bool(const std::string& section, const std::string& key, std::optional<bool> fallback = {}) const;
  /// Nested bracket list, e.g. [[1, 0], [0, 1]]; a flat list is a column vector.
  Matrix get_matrix(const std::string& section, const std::string& key) const;
  std::vector<double> get_list(const std::string& section, const std::string& key) const;
  std::vector<std::string> get_words(const std::string& section, const std::string& key) const;

  /// Keys that were never read, as "section.key" (typo detection).
  std::vector<std::string> unused_keys() const;

 private:
  const Entry& require(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, Entry>> sections_;
  mutable std::map<std::string, bool> touched_;
};

enum class ExperimentKind { ConvergencePlot, ScalingSweep, Stabilization, ClosedLoopEnergy, GainProbe };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

enum class ProblemGenerator { Inline, SpringMassDamper, RandomCanonical };

struct ProblemSource {
  ProblemGenerator generator = ProblemGenerator::SpringMassDamper;
  int masses = 2;                    // spring_mass_damper
  int dimension = 10;                // random_canonical
  double sigma_scale = 0.1;          // both generators
  bool flip_stability = false;       // spring_mass_damper
  std::uint64_t problem_seed = 0;    // random_canonical
  LqProblem inline_problem;          // generator == Inline
  CostKind kind = CostKind::LQG;
  double theta = 0.0;
  Horizon horizon = Horizon::average();
};

/// One cost setting of the same plant (LQG, or LEQG with a given θ).
struct CostVariant {
  CostKind kind = CostKind::LQG;
  double theta = 0.0;
  std::string label() const;
  static CostVariant parse(const std::string& text);
};

enum class ControllerMode { Gain, Probe };

struct RolloutSettings {
  ControllerMode controller = ControllerMode::Gain;
  double horizon = 5.0;
  std::optional<Vector> initial_state;  // default: all ones
};

struct ExperimentConfig {
  ProblemSource problem;
  EnkfConfig enkf;
  OnlineConfig online;
  RolloutSettings rollout;
  double reference_step = 0.0;  // τ_ref; 0 means enkf.step / 10
  double are_tolerance = 1e-10;
  ExperimentKind kind = ExperimentKind::ConvergencePlot;
  int runs = 1;
  std::vector<int> particle_sweep;
  std::vector<int> evaluation_sweep;
  std::vector<CostVariant> variants;  // empty: the problem's own cost
  bool require_unstable = true;       // Stabilization: skip open-loop stable draws
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int threads = 1;

  double reference_step_or_default() const { return reference_step > 0.0 ? reference_step : enkf.step / 10.0; }
  std::vector<CostVariant> variants_or_default() const;
};

/// Builds the plant for a source, with the cost kind overridden by a variant.
LqProblem build_problem(const ProblemSource& source, const std::optional<CostVariant>& variant = {});
LqProblem build_problem(const ProblemSource& source, std::uint64_t problem_seed, const std::optional<CostVariant>& variant);

/// Reads every section; throws ConfigError with line/field diagnostics.
ExperimentConfig experiment_config_from(const ConfigFile& file);
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& text);

/// Canonical text form; parse_experiment_config(echo_config(c)) == c.
/// Without execution fields, output_dir and threads are left out so the echo
/// depends only on what determines the numbers.
std::string echo_config(const ExperimentConfig& config, bool include_execution = true);

}  // namespace dualenkf
