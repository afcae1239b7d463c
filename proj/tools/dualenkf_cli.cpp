// dualenkf command line: validate / riccati / enkf / experiment / rollout.
//
// Exit codes: 0 success, 1 usage, config or validation error, 2 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualenkf/bench.hpp"
#include "dualenkf/config.hpp"
#include "dualenkf/control.hpp"
#include "dualenkf/enkf.hpp"
#include "dualenkf/format.hpp"
#include "dualenkf/parallel.hpp"
#include "dualenkf/riccati.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dualenkf;

namespace {

constexpr int kUsage = 1;
constexpr int kNumerical = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::string format = "csv";
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = load_experiment_config(o.config_path);
  if (const char* env = std::getenv("DUALENKF_THREADS"); env && *env) c.threads = default_threads();
  if (o.threads) c.threads = *o.threads;
  if (o.seed) c.seed = *o.seed;
  if (o.out_dir) c.output_dir = *o.out_dir;
  c.enkf.seed = c.seed;
  c.enkf.threads = c.threads;
  return c;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json trajectory_json(const RiccatiTrajectory& t) {
  json values = json::array();
  for (const auto& v : t.values) values.push_back(matrix_json(v));
  return {{"times", t.times}, {"values", values}};
}

fs::path output_path(const ExperimentConfig& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  return fs::path(c.output_dir) / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
  std::cout << path.string() << '\n';
}

LqProblem checked_problem(const ExperimentConfig& c) {
  LqProblem p = build_problem(c.problem, c.variants_or_default().front());
  require_valid(p);
  return p;
}

int cmd_validate(const Options& o) {
  const ExperimentConfig c = load(o);
  bool ok = true;
  for (const auto& variant : c.variants_or_default()) {
    const LqProblem p = build_problem(c.problem, variant);
    const ValidationReport report = validate(p);
    std::cout << "[" << variant.label() << "]\n";
    for (const auto& check : report.checks)
      std::cout << "  " << (check.passed ? "pass" : (check.advisory ? "warn" : "FAIL")) << "  " << check.name
                << "  margin=" << format_number(check.margin) << (check.detail.empty() ? "" : "  " + check.detail)
                << '\n';
    for (const auto& w : report.warnings) std::cout << "  warning: " << w << '\n';
    if (!report.ok()) {
      std::cerr << "validation failed (" << variant.label() << "): " << report.first_failure() << '\n';
      ok = false;
    }
  }
  return ok ? 0 : kUsage;
}

int cmd_riccati(const Options& o) {
  const ExperimentConfig c = load(o);
  const LqProblem p = checked_problem(c);
  const double T = c.enkf.horizon;
  const double tau = c.reference_step_or_default();
  const auto dre = solve_dre(p, T, tau);
  const auto dual = solve_dual_dre(p, T, tau);
  AreOptions ao;
  ao.tol = c.are_tolerance;
  ao.tau_ref = tau;
  const auto are = solve_are(p, ao);
  if (o.format == "json") {
    json j = {{"dre", trajectory_json(dre)},
              {"dual_dre", trajectory_json(dual)},
              {"are", {{"P_bar", matrix_json(are.P_bar)}, {"residual", are.residual}, {"horizon_used", are.horizon_used}}}};
    write_text(output_path(c, "riccati.json"), j.dump(2) + "\n");
    return 0;
  }
  std::ostringstream a, b, e;
  write_csv(a, dre);
  write_csv(b, dual);
  e << "i,j,value\n";
  for (Eigen::Index i = 0; i < are.P_bar.rows(); ++i)
    for (Eigen::Index j = 0; j < are.P_bar.cols(); ++j) e << i << ',' << j << ',' << format_number(are.P_bar(i, j)) << '\n';
  write_text(output_path(c, "dre.csv"), a.str());
  write_text(output_path(c, "dual_dre.csv"), b.str());
  write_text(output_path(c, "are.csv"), e.str());
  std::cerr << "ARE residual " << format_number(are.residual) << '\n';
  return 0;
}

int cmd_enkf(const Options& o) {
  const ExperimentConfig c = load(o);
  const LqProblem p = checked_problem(c);
  const EnkfOutput out = run_offline(p, c.enkf);
  if (o.format == "json") {
    json means = json::array(), covs = json::array(), primal = json::array();
    for (std::size_t k = 0; k < out.size(); ++k) {
      means.push_back(std::vector<double>(out.means[k].data(), out.means[k].data() + out.means[k].size()));
      covs.push_back(matrix_json(out.covariances[k]));
      primal.push_back(out.primal[k] ? matrix_json(*out.primal[k]) : json(nullptr));
    }
    json j = {{"seed", c.enkf.seed},       {"particles", c.enkf.particles}, {"times", out.times},
              {"means", means},            {"covariances", covs},           {"primal", primal},
              {"covariance_inversions", out.stats.covariance_inversions}};
    write_text(output_path(c, "enkf.json"), j.dump(2) + "\n");
    return 0;
  }
  std::ostringstream os;
  write_csv(os, out);
  write_text(output_path(c, "enkf.csv"), os.str());
  return 0;
}

int cmd_experiment(const Options& o) {
  const ExperimentConfig c = load(o);
  for (const auto& variant : c.variants_or_default()) {
    if (c.kind == ExperimentKind::Stabilization && c.problem.generator == ProblemGenerator::RandomCanonical) break;
    require_valid(build_problem(c.problem, variant));
  }
  const ReportBundle bundle = run_experiment(c);
  std::cout << (fs::path(c.output_dir) / "manifest.json").string() << '\n';
  std::cerr << bundle.runs_completed << "/" << bundle.runs_attempted << " runs completed in "
            << format_number(bundle.timings.wall) << " s\n";
  for (const auto& f : bundle.failures)
    std::cerr << "failed: " << f.label << " run " << f.run << ": " << f.message << '\n';
  return bundle.complete() ? 0 : kNumerical;
}

int cmd_rollout(const Options& o) {
  const ExperimentConfig c = load(o);
  const LqProblem p = checked_problem(c);
  const EnkfOutput out = run_offline(p, c.enkf);
  ControlLaw law = gains_from_enkf(out, p);
  if (c.rollout.controller == ControllerMode::Probe)
    law = probe_schedule_from_enkf(out, p, c.online, run_seed(c.seed, 1, 0));
  const Vector x0 = c.rollout.initial_state.value_or(Vector::Ones(p.state_dim()));
  const Rollout r = closed_loop_rollout(p, law, x0, c.rollout.horizon, c.enkf.step, run_seed(c.seed, 2, 0));
  if (o.format == "json") {
    json states = json::array(), controls = json::array();
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      states.push_back(std::vector<double>(r.states[k].data(), r.states[k].data() + r.states[k].size()));
      controls.push_back(std::vector<double>(r.controls[k].data(), r.controls[k].data() + r.controls[k].size()));
    }
    json j = {{"times", r.times},   {"states", states},         {"controls", controls},
              {"energy", r.energy}, {"cumulative_cost", r.cumulative_cost}};
    write_text(output_path(c, "rollout.json"), j.dump(2) + "\n");
    return 0;
  }
  std::ostringstream os;
  write_csv(os, r);
  write_text(output_path(c, "rollout.csv"), os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual ensemble Kalman filter for linear-quadratic control"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--seed", o.seed, "Base seed (overrides the config)");
  app.add_option("--out-dir", o.out_dir, "Output directory (overrides the config)");
  app.add_option("--threads", o.threads, "Worker threads (overrides config and DUALENKF_THREADS)")
      ->check(CLI::PositiveNumber);
  app.add_option("--format", o.format, "Output format for riccati/enkf/rollout")
      ->check(CLI::IsMember({"csv", "json"}));

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"validate", "Check the standing assumptions for the configured problem", cmd_validate},
      {"riccati", "Solve the DRE, dual DRE and ARE (oracle only)", cmd_riccati},
      {"enkf", "Run the dual EnKF once", cmd_enkf},
      {"experiment", "Run the configured experiment and write a report bundle", cmd_experiment},
      {"rollout", "Learn gains with the EnKF and simulate the closed loop", cmd_rollout},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("config", o.config_path, "Config file")->required();
    subs.emplace_back(sub, &cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    for (const auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
