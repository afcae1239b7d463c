#include "dualenkf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "dualenkf/control.hpp"
#include "dualenkf/enkf.hpp"
#include "dualenkf/format.hpp"
#include "dualenkf/parallel.hpp"
#include "dualenkf/riccati.hpp"
#include "dualenkf/rng.hpp"

#ifndef DUALENKF_VERSION
#define DUALENKF_VERSION "unknown"
#endif

namespace dualenkf {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

// Seed groups beyond the per-variant ones.
constexpr std::uint64_t kRolloutGroup = 1u << 20;
constexpr std::uint64_t kProbeGroup = 1u << 21;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json numbers(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

struct Timed {
  double oracle = 0.0;
  double ensemble = 0.0;
  double metrics = 0.0;
};

/// Output of one task; exactly one slot per task, so workers never share state.
template <typename T>
struct Slot {
  std::optional<T> value;
  std::string error;
  Timed time;
};

template <typename T>
void run_tasks(std::vector<Slot<T>>& slots, int threads, const std::function<T(std::size_t, Timed&)>& task) {
  parallel_for(slots.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        slots[i].value = task(i, slots[i].time);
      } catch (const std::exception& e) {
        slots[i].error = e.what();
      }
    }
  });
}

class Bundle {
 public:
  Bundle(const ExperimentConfig& config, ReportBundle& report) : config_(config), report_(report) {}

  void add(const std::string& name, std::string content) { files_[name] = std::move(content); }

  template <typename T>
  void collect(std::vector<Slot<T>>& slots, const std::string& label, const std::vector<int>& run_of) {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      ++report_.runs_attempted;
      report_.timings.oracle += slots[i].time.oracle;
      report_.timings.ensemble += slots[i].time.ensemble;
      report_.timings.metrics += slots[i].time.metrics;
      if (slots[i].value) {
        ++report_.runs_completed;
      } else {
        report_.failures.push_back({label, run_of[i], slots[i].error});
      }
    }
  }

  void add_oracle_time(double t) { report_.timings.oracle += t; }

  void fail(const std::string& label, const std::string& message) {
    ++report_.runs_attempted;
    report_.failures.push_back({label, -1, message});
  }

  json& results() { return results_; }

  void write(Clock::time_point started) {
    const auto write_start = Clock::now();
    namespace fs = std::filesystem;
    fs::create_directories(report_.directory);

    json summary;
    summary["schema_version"] = kSummarySchemaVersion;
    summary["code_version"] = code_version();
    summary["experiment"] = to_string(config_.kind);
    summary["seed"] = config_.seed;
    summary["runs_attempted"] = report_.runs_attempted;
    summary["runs_completed"] = report_.runs_completed;
    summary["complete"] = report_.complete();
    json failures = json::array();
    for (const auto& f : report_.failures) failures.push_back({{"label", f.label}, {"run", f.run}, {"message", f.message}});
    summary["failures"] = failures;
    summary["results"] = results_;
    add("summary.json", summary.dump(2) + "\n");
    add("config.echo", report_.config_echo);

    json listing = json::array();
    for (const auto& [name, content] : files_) {
      std::ofstream os(report_.directory / name, std::ios::binary);
      os << content;
      if (!os) throw std::runtime_error("cannot write " + (report_.directory / name).string());
      OutputFile f{name, sha256_hex(content), content.size()};
      listing.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
      report_.files.push_back(std::move(f));
    }
    json manifest;
    manifest["schema_version"] = kSummarySchemaVersion;
    manifest["code_version"] = code_version();
    manifest["seed"] = config_.seed;
    manifest["complete"] = report_.complete();
    manifest["files"] = listing;
    manifest["timings"] = "timings.json";
    std::ofstream(report_.directory / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";

    report_.timings.write = seconds_since(write_start);
    report_.timings.wall = seconds_since(started);
    json timings;
    timings["schema_version"] = kSummarySchemaVersion;
    timings["clock"] = "steady";
    timings["threads"] = config_.threads;
    timings["seconds"] = {{"oracle", report_.timings.oracle},     {"ensemble", report_.timings.ensemble},
                          {"metrics", report_.timings.metrics},   {"write", report_.timings.write},
                          {"wall", report_.timings.wall}};
    std::ofstream(report_.directory / "timings.json", std::ios::binary) << timings.dump(2) << "\n";
  }

 private:
  const ExperimentConfig& config_;
  ReportBundle& report_;
  std::map<std::string, std::string> files_;
  json results_ = json::object();
};

EnkfConfig enkf_for(const ExperimentConfig& c, std::uint64_t seed, int particles = 0) {
  EnkfConfig e = c.enkf;
  e.seed = seed;
  e.threads = 1;  // parallelism is across runs
  if (particles > 0) e.particles = particles;
  return e;
}

AreSolution are_for(const LqProblem& problem, const ExperimentConfig& c) {
  AreOptions o;
  o.tol = c.are_tolerance;
  o.tau_ref = c.reference_step_or_default();
  return solve_are(problem, o);
}

std::string label_file(const std::string& stem, const std::string& label, const std::string& suffix = "") {
  return stem + "_" + label + suffix + ".csv";
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double standard_error_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

const Matrix& primal_at(const EnkfOutput& out, std::size_t k) {
  if (!out.primal[k]) throw NumericalError("P^(N) undefined at step " + std::to_string(k));
  return *out.primal[k];
}

json fit_json(const DecayFit& f) {
  json w = json::array();
  for (const auto& s : f.warnings) w.push_back(s);
  return {{"rate", number(f.rate)},           {"r_squared", number(f.r_squared)}, {"window_begin", f.window_begin},
          {"window_end", f.window_end},       {"warnings", w}};
}

json scaling_json(const ScalingReport& r) {
  return {{"n", numbers(r.n_values)},           {"mse", numbers(r.mse)},     {"standard_error", numbers(r.standard_error)},
          {"slope", number(r.slope)},           {"intercept", number(r.intercept)},
          {"slope_half_width", number(r.slope_half_width)}};
}

// ---------------------------------------------------------------- ConvergencePlot

struct ConvergenceRun {
  std::vector<double> vs_are, vs_dre, dual_rel;
  double initial_rel = 0.0;
  double max_dual_rel = 0.0;
  std::optional<EnkfOutput> output;  // first run only
};

void convergence_plot(const ExperimentConfig& c, Bundle& bundle, ReportBundle& report) {
  const auto variants = c.variants_or_default();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::string label = variants[v].label();
    LqProblem problem;
    RiccatiTrajectory dre, dual;
    AreSolution are;
    try {
      const auto t0 = Clock::now();
      problem = build_problem(c.problem, variants[v]);
      dre = solve_dre(problem, c.enkf.horizon, c.reference_step_or_default());
      dual = solve_dual_dre(problem, c.enkf.horizon, c.reference_step_or_default());
      are = are_for(problem, c);
      bundle.add_oracle_time(seconds_since(t0));
    } catch (const std::exception& e) {
      bundle.fail(label, e.what());
      continue;
    }
    const double p_bar_norm = are.P_bar.norm();

    std::vector<Slot<ConvergenceRun>> slots(static_cast<std::size_t>(c.runs));
    run_tasks<ConvergenceRun>(slots, c.threads, [&](std::size_t r, Timed& time) {
      auto t0 = Clock::now();
      EnkfOutput out = run_offline(problem, enkf_for(c, run_seed(c.seed, v, r)));
      time.ensemble += seconds_since(t0);
      t0 = Clock::now();
      ConvergenceRun run;
      for (std::size_t k = 0; k < out.size(); ++k) {
        const double t = out.times[k];
        const Matrix& P = primal_at(out, k);
        run.vs_are.push_back((P - are.P_bar).norm());
        run.vs_dre.push_back((P - dre.at_time(t)).norm());
        run.dual_rel.push_back(frob_error(out.covariances[k], dual.at_time(t), true));
      }
      run.initial_rel = run.vs_are.front() / p_bar_norm;
      run.max_dual_rel = *std::max_element(run.dual_rel.begin(), run.dual_rel.end());
      if (r == 0) run.output = std::move(out);
      time.metrics += seconds_since(t0);
      return run;
    });
    std::vector<int> run_of(slots.size());
    std::iota(run_of.begin(), run_of.end(), 0);
    bundle.collect(slots, label, run_of);

    std::vector<const ConvergenceRun*> ok;
    for (const auto& s : slots)
      if (s.value) ok.push_back(&*s.value);
    if (ok.empty()) continue;

    const auto t0 = Clock::now();
    const EnkfOutput* first = slots.front().value ? &*slots.front().value->output : nullptr;
    std::vector<double> grid;
    const long steps = step_count(c.enkf.horizon, c.enkf.step);
    for (long k = 0; k <= steps; ++k) grid.push_back(static_cast<double>(k) * c.enkf.step);

    // Per-entry series of the first run (upper triangle).
    if (first) {
      std::ostringstream os;
      os << "t,i,j,enkf,dre,are\n";
      const auto d = problem.state_dim();
      for (std::size_t k = 0; k < first->size(); ++k) {
        const double t = first->times[k];
        const Matrix& P = primal_at(*first, k);
        const Matrix& Pd = dre.at_time(t);
        for (Eigen::Index i = 0; i < d; ++i)
          for (Eigen::Index j = i; j < d; ++j)
            os << format_number(t) << ',' << i << ',' << j << ',' << format_number(P(i, j)) << ','
               << format_number(Pd(i, j)) << ',' << format_number(are.P_bar(i, j)) << '\n';
      }
      bundle.add(label_file("convergence", label), os.str());
    }

    ConvergenceResult res;
    res.label = label;
    res.enkf_vs_are.times = grid;
    res.dre_vs_are.times = grid;
    res.enkf_vs_are.values.assign(grid.size(), 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      for (const auto* run : ok) res.enkf_vs_are.values[k] += run->vs_are[k];
      res.enkf_vs_are.values[k] /= static_cast<double>(ok.size());
      res.dre_vs_are.values.push_back((dre.at_time(grid[k]) - are.P_bar).norm());
    }
    {
      std::ostringstream os;
      os << "t,run,enkf_vs_are,enkf_vs_dre,dual_relative_error,dre_vs_are\n";
      for (std::size_t r = 0; r < slots.size(); ++r) {
        if (!slots[r].value) continue;
        const auto& run = *slots[r].value;
        for (std::size_t k = 0; k < grid.size(); ++k)
          os << format_number(grid[k]) << ',' << r << ',' << format_number(run.vs_are[k]) << ','
             << format_number(run.vs_dre[k]) << ',' << format_number(run.dual_rel[k]) << ','
             << format_number(res.dre_vs_are.values[k]) << '\n';
      }
      bundle.add(label_file("errors", label), os.str());
    }

    // Decay rates on the pre-plateau window, in increasing time-to-go.
    std::vector<double> ttg, enkf_err, dre_err;
    for (std::size_t k = grid.size(); k-- > 0;) {
      ttg.push_back(c.enkf.horizon - grid[k]);
      enkf_err.push_back(res.enkf_vs_are.values[k]);
      dre_err.push_back(res.dre_vs_are.values[k]);
    }
    json fits;
    try {
      const auto [begin, end] = pre_plateau_window(enkf_err);
      res.enkf_fit = fit_decay_rate_range(ttg, enkf_err, false, begin, end);
      res.dre_fit = fit_decay_rate_range(ttg, dre_err, false, begin, end);
      fits = {{"enkf", fit_json(res.enkf_fit)}, {"dre", fit_json(res.dre_fit)}};
    } catch (const std::exception& e) {
      fits = {{"error", e.what()}};
    }
    std::vector<double> initial, max_dual;
    for (const auto* run : ok) {
      initial.push_back(run->initial_rel);
      max_dual.push_back(run->max_dual_rel);
    }
    res.initial_relative_error = mean_of(initial);
    res.max_dual_relative_error = mean_of(max_dual);
    bundle.results()[label] = {{"decay", fits},
                               {"initial_relative_error", number(res.initial_relative_error)},
                               {"max_dual_relative_error", number(res.max_dual_relative_error)},
                               {"are_residual", number(are.residual)},
                               {"runs", ok.size()}};
    report.timings.metrics += seconds_since(t0);
    report.convergence.push_back(std::move(res));
  }
}

// ---------------------------------------------------------------- ScalingSweep

struct ScalingRun {
  double dual_sq = 0.0;
  double primal_sq = 0.0;
  std::uint64_t seed = 0;
};

void scaling_sweep(const ExperimentConfig& c, Bundle& bundle, ReportBundle& report) {
  const auto variants = c.variants_or_default();
  const std::vector<int> sweep = c.particle_sweep.empty() ? std::vector<int>{50, 100, 200, 400} : c.particle_sweep;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::string label = variants[v].label();
    LqProblem problem;
    AreSolution are;
    Matrix s_bar;
    try {
      const auto t0 = Clock::now();
      problem = build_problem(c.problem, variants[v]);
      are = are_for(problem, c);
      s_bar = p_to_s(are.P_bar, problem);
      bundle.add_oracle_time(seconds_since(t0));
    } catch (const std::exception& e) {
      bundle.fail(label, e.what());
      continue;
    }
    const std::size_t runs = static_cast<std::size_t>(c.runs);
    std::vector<Slot<ScalingRun>> slots(sweep.size() * runs);
    run_tasks<ScalingRun>(slots, c.threads, [&](std::size_t i, Timed& time) {
      const std::size_t n = i / runs, r = i % runs;
      ScalingRun run;
      run.seed = run_seed(c.seed, (v << 16) + n, r);
      auto t0 = Clock::now();
      const EnkfOutput out = run_offline(problem, enkf_for(c, run.seed, sweep[n]));
      time.ensemble += seconds_since(t0);
      t0 = Clock::now();
      run.dual_sq = std::pow(frob_error(out.covariances.front(), s_bar, true), 2);
      run.primal_sq = std::pow(frob_error(primal_at(out, 0), are.P_bar, true), 2);
      time.metrics += seconds_since(t0);
      return run;
    });
    std::vector<int> run_of(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) run_of[i] = static_cast<int>(i % runs);
    bundle.collect(slots, label, run_of);

    const auto t0 = Clock::now();
    std::vector<double> ns, mse_s, se_s, mse_p, se_p;
    std::ostringstream table;
    table << "n,mse_dual,se_dual,mse_primal,se_primal,runs\n";
    for (std::size_t n = 0; n < sweep.size(); ++n) {
      std::vector<double> ds, ps;
      std::ostringstream os;
      os << "run,seed,dual_sq_error,primal_sq_error\n";
      for (std::size_t r = 0; r < runs; ++r) {
        const auto& s = slots[n * runs + r];
        if (!s.value) continue;
        ds.push_back(s.value->dual_sq);
        ps.push_back(s.value->primal_sq);
        os << r << ',' << s.value->seed << ',' << format_number(s.value->dual_sq) << ','
           << format_number(s.value->primal_sq) << '\n';
      }
      bundle.add(label_file("scaling", label, "_N" + std::to_string(sweep[n])), os.str());
      if (ds.empty()) continue;
      ns.push_back(sweep[n]);
      mse_s.push_back(mean_of(ds));
      se_s.push_back(standard_error_of(ds));
      mse_p.push_back(mean_of(ps));
      se_p.push_back(standard_error_of(ps));
      table << sweep[n] << ',' << format_number(mse_s.back()) << ',' << format_number(se_s.back()) << ','
            << format_number(mse_p.back()) << ',' << format_number(se_p.back()) << ',' << ds.size() << '\n';
    }
    bundle.add(label_file("scaling", label), table.str());
    ScalingResult res;
    res.label = label;
    try {
      res.dual = fit_scaling(ns, mse_s, se_s);
      res.primal = fit_scaling(ns, mse_p, se_p);
      bundle.results()[label] = {{"dual", scaling_json(res.dual)}, {"primal", scaling_json(res.primal)}};
    } catch (const std::exception& e) {
      bundle.results()[label] = {{"error", e.what()}};
    }
    report.timings.metrics += seconds_since(t0);
    report.scaling.push_back(std::move(res));
  }
}

// ---------------------------------------------------------------- Stabilization

struct StabilizationRun {
  Spectrum open, closed;
  std::optional<CostReport> cost;
};

std::vector<std::uint64_t> stabilization_seeds(const ExperimentConfig& c) {
  std::vector<std::uint64_t> seeds;
  const bool varies = c.problem.generator == ProblemGenerator::RandomCanonical;
  if (!varies) return std::vector<std::uint64_t>(static_cast<std::size_t>(c.runs), c.problem.problem_seed);
  const std::uint64_t cap = 100 * static_cast<std::uint64_t>(c.runs);
  for (std::uint64_t k = 0; k < cap && seeds.size() < static_cast<std::size_t>(c.runs); ++k) {
    const std::uint64_t s = c.problem.problem_seed + k;
    if (!c.require_unstable || !open_loop_spectrum(build_problem(c.problem, s, std::nullopt)).hurwitz) seeds.push_back(s);
  }
  return seeds;
}

void stabilization(const ExperimentConfig& c, Bundle& bundle, ReportBundle& report) {
  const auto variants = c.variants_or_default();
  const auto seeds = stabilization_seeds(c);
  if (seeds.size() < static_cast<std::size_t>(c.runs))
    bundle.fail("stabilization", "only " + std::to_string(seeds.size()) + " unstable problems found");
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::string label = variants[v].label();
    std::vector<Slot<StabilizationRun>> slots(seeds.size());
    run_tasks<StabilizationRun>(slots, c.threads, [&](std::size_t r, Timed& time) {
      auto t0 = Clock::now();
      const LqProblem problem = build_problem(c.problem, seeds[r], variants[v]);
      const AreSolution are = are_for(problem, c);
      time.oracle += seconds_since(t0);
      t0 = Clock::now();
      const EnkfOutput out = run_offline(problem, enkf_for(c, run_seed(c.seed, v, r)));
      time.ensemble += seconds_since(t0);
      t0 = Clock::now();
      const Matrix K = gain_from_p(primal_at(out, 0), problem);
      StabilizationRun run{open_loop_spectrum(problem), closed_loop_spectrum(problem, K), std::nullopt};
      if (run.closed.hurwitz && problem.horizon.kind == HorizonKind::Average && !problem.cost.risk_sensitive())
        run.cost = relative_cost_and_gain(K, problem, are);
      time.metrics += seconds_since(t0);
      return run;
    });
    std::vector<int> run_of(slots.size());
    std::iota(run_of.begin(), run_of.end(), 0);
    bundle.collect(slots, label, run_of);

    const auto t0 = Clock::now();
    StabilizationResult res;
    res.label = label;
    std::ostringstream table, poles;
    table << "run,problem_seed,open_max_real,closed_max_real,hurwitz\n";
    poles << "run,problem_seed,loop,re,im\n";
    std::vector<double> rel_cost, rel_gain;
    for (std::size_t r = 0; r < slots.size(); ++r) {
      if (!slots[r].value) continue;
      const auto& run = *slots[r].value;
      ++res.evaluated;
      res.hurwitz_count += run.closed.hurwitz ? 1 : 0;
      res.problem_seeds.push_back(seeds[r]);
      res.open_max_real.push_back(run.open.max_real);
      res.closed_max_real.push_back(run.closed.max_real);
      if (run.cost) {
        res.costs.push_back(*run.cost);
        rel_cost.push_back(run.cost->relative_cost);
        rel_gain.push_back(run.cost->relative_gain);
      }
      table << r << ',' << seeds[r] << ',' << format_number(run.open.max_real) << ','
            << format_number(run.closed.max_real) << ',' << (run.closed.hurwitz ? 1 : 0) << '\n';
      for (const auto* spec : {&run.open, &run.closed})
        for (const auto& z : spec->eigenvalues)
          poles << r << ',' << seeds[r] << ',' << (spec == &run.open ? "open" : "closed") << ','
                << format_number(z.real()) << ',' << format_number(z.imag()) << '\n';
    }
    bundle.add(label_file("stabilization", label), table.str());
    bundle.add(label_file("poles", label), poles.str());
    bundle.results()[label] = {{"evaluated", res.evaluated},
                               {"hurwitz", res.hurwitz_count},
                               {"mean_relative_cost", number(mean_of(rel_cost))},
                               {"mean_relative_gain", number(mean_of(rel_gain))}};
    report.timings.metrics += seconds_since(t0);
    report.stabilization.push_back(std::move(res));
  }
}

// ---------------------------------------------------------------- ClosedLoopEnergy

struct EnergyRun {
  std::vector<double> energy, optimal_energy;
  double relative_gain = 0.0;
};

void closed_loop_energy(const ExperimentConfig& c, Bundle& bundle, ReportBundle& report) {
  const auto variants = c.variants_or_default();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::string label = variants[v].label();
    LqProblem problem;
    GainSchedule optimal;
    try {
      const auto t0 = Clock::now();
      problem = build_problem(c.problem, variants[v]);
      if (problem.horizon.kind == HorizonKind::Average) {
        optimal = GainSchedule::constant(gain_from_p(are_for(problem, c).P_bar, problem));
      } else {
        const auto dre = solve_dre(problem, c.enkf.horizon, c.reference_step_or_default());
        optimal.step = c.enkf.step;
        const long steps = step_count(c.enkf.horizon, c.enkf.step);
        for (long k = 0; k <= steps; ++k)
          optimal.gains.push_back(gain_from_p(dre.at_time(static_cast<double>(k) * c.enkf.step), problem));
      }
      bundle.add_oracle_time(seconds_since(t0));
    } catch (const std::exception& e) {
      bundle.fail(label, e.what());
      continue;
    }
    const Vector x0 = c.rollout.initial_state.value_or(Vector::Ones(problem.state_dim()));

    std::vector<Slot<EnergyRun>> slots(static_cast<std::size_t>(c.runs));
    run_tasks<EnergyRun>(slots, c.threads, [&](std::size_t r, Timed& time) {
      auto t0 = Clock::now();
      const EnkfOutput out = run_offline(problem, enkf_for(c, run_seed(c.seed, v, r)));
      time.ensemble += seconds_since(t0);
      t0 = Clock::now();
      const GainSchedule gains = gains_from_enkf(out, problem);
      ControlLaw law = gains;
      if (c.rollout.controller == ControllerMode::Probe)
        law = probe_schedule_from_enkf(out, problem, c.online, run_seed(c.seed, kProbeGroup + v, r));
      const std::uint64_t noise = run_seed(c.seed, kRolloutGroup, r);
      EnergyRun run;
      run.energy = closed_loop_rollout(problem, law, x0, c.rollout.horizon, c.enkf.step, noise).energy;
      run.optimal_energy = closed_loop_rollout(problem, optimal, x0, c.rollout.horizon, c.enkf.step, noise).energy;
      run.relative_gain = time_averaged_relative_gain(gains, optimal);
      time.metrics += seconds_since(t0);
      return run;
    });
    std::vector<int> run_of(slots.size());
    std::iota(run_of.begin(), run_of.end(), 0);
    bundle.collect(slots, label, run_of);

    const auto t0 = Clock::now();
    std::vector<const EnergyRun*> ok;
    for (const auto& s : slots)
      if (s.value) ok.push_back(&*s.value);
    EnergyResult res;
    res.label = label;
    res.runs = static_cast<int>(ok.size());
    if (ok.empty()) {
      report.energy.push_back(std::move(res));
      continue;
    }
    const std::size_t steps = ok.front()->energy.size();
    std::ostringstream os;
    os << "t,mean_energy,se_energy,mean_optimal_energy\n";
    std::vector<double> gains;
    for (const auto* run : ok) gains.push_back(run->relative_gain);
    for (std::size_t k = 0; k < steps; ++k) {
      std::vector<double> e, o;
      for (const auto* run : ok) {
        e.push_back(run->energy[k]);
        o.push_back(run->optimal_energy[k]);
      }
      const double t = static_cast<double>(k) * c.enkf.step;
      res.times.push_back(t);
      res.mean_energy.push_back(mean_of(e));
      res.mean_optimal_energy.push_back(mean_of(o));
      os << format_number(t) << ',' << format_number(res.mean_energy.back()) << ','
         << format_number(standard_error_of(e)) << ',' << format_number(res.mean_optimal_energy.back()) << '\n';
    }
    res.time_averaged_relative_gain = mean_of(gains);
    bundle.add(label_file("energy", label), os.str());
    bundle.results()[label] = {{"runs", res.runs},
                               {"initial_energy", number(res.mean_energy.front())},
                               {"terminal_energy", number(res.mean_energy.back())},
                               {"terminal_ratio", number(res.mean_energy.back() / res.mean_energy.front())},
                               {"optimal_terminal_energy", number(res.mean_optimal_energy.back())},
                               {"time_averaged_relative_gain", number(res.time_averaged_relative_gain)}};
    report.timings.metrics += seconds_since(t0);
    report.energy.push_back(std::move(res));
  }
}

// ---------------------------------------------------------------- GainProbe

void gain_probe(const ExperimentConfig& c, Bundle& bundle, ReportBundle& report) {
  const auto variants = c.variants_or_default();
  const std::vector<int> sweep = c.particle_sweep.empty() ? std::vector<int>{c.enkf.particles} : c.particle_sweep;
  const std::vector<int> evals =
      c.evaluation_sweep.empty() ? std::vector<int>{c.online.evaluations} : c.evaluation_sweep;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::string label = variants[v].label();
    LqProblem problem;
    Matrix k_bar;
    try {
      const auto t0 = Clock::now();
      problem = build_problem(c.problem, variants[v]);
      k_bar = gain_from_p(are_for(problem, c).P_bar, problem);
      bundle.add_oracle_time(seconds_since(t0));
    } catch (const std::exception& e) {
      bundle.fail(label, e.what());
      continue;
    }
    const Simulator simulator(problem.dynamics);
    const auto d = problem.state_dim();
    const std::size_t runs = static_cast<std::size_t>(c.runs);
    std::vector<Slot<std::vector<double>>> slots(sweep.size() * runs);
    run_tasks<std::vector<double>>(slots, c.threads, [&](std::size_t i, Timed& time) {
      const std::size_t n = i / runs, r = i % runs;
      auto t0 = Clock::now();
      const EnkfOutput out = run_offline(problem, enkf_for(c, run_seed(c.seed, (v << 16) + n, r), sweep[n]));
      time.ensemble += seconds_since(t0);
      t0 = Clock::now();
      const Matrix& P = primal_at(out, 0);
      const std::uint64_t probe_seed = run_seed(c.seed, kProbeGroup + (v << 16) + n, r);
      std::vector<double> errors;
      for (std::size_t e = 0; e < evals.size(); ++e) {
        OnlineConfig online{evals[e], c.online.step};
        Matrix k_hat(k_bar.rows(), d);
        for (Eigen::Index j = 0; j < d; ++j) {
          const ProbeKey key{probe_seed, static_cast<std::uint64_t>(e) * static_cast<std::uint64_t>(d) + j, 0};
          k_hat.col(j) = probe_control(Vector::Unit(d, j), P, online, key, simulator, problem);
        }
        errors.push_back(std::pow(frob_error(k_hat, k_bar, true), 2));
      }
      time.metrics += seconds_since(t0);
      return errors;
    });
    std::vector<int> run_of(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) run_of[i] = static_cast<int>(i % runs);
    bundle.collect(slots, label, run_of);

    const auto t0 = Clock::now();
    std::ostringstream os;
    os << "n,evaluations,mse,se,runs\n";
    json per_n = json::array();
    for (std::size_t n = 0; n < sweep.size(); ++n) {
      GainProbeResult res;
      res.label = label;
      res.particles = sweep[n];
      for (std::size_t e = 0; e < evals.size(); ++e) {
        std::vector<double> errs;
        for (std::size_t r = 0; r < runs; ++r)
          if (const auto& s = slots[n * runs + r]; s.value) errs.push_back((*s.value)[e]);
        if (errs.empty()) continue;
        res.evaluations.push_back(evals[e]);
        res.mse.push_back(mean_of(errs));
        res.standard_error.push_back(standard_error_of(errs));
        os << sweep[n] << ',' << evals[e] << ',' << format_number(res.mse.back()) << ','
           << format_number(res.standard_error.back()) << ',' << errs.size() << '\n';
      }
      json entry = {{"n", sweep[n]}, {"evaluations", numbers(res.evaluations)}, {"mse", numbers(res.mse)},
                    {"standard_error", numbers(res.standard_error)}};
      if (!res.mse.empty()) entry["floor"] = number(res.mse.back());
      per_n.push_back(entry);
      report.gain_probe.push_back(std::move(res));
    }
    bundle.add(label_file("gain_probe", label), os.str());
    bundle.results()[label] = per_n;
    report.timings.metrics += seconds_since(t0);
  }
}

}  // namespace

std::string code_version() { return DUALENKF_VERSION; }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t seed, std::uint64_t group, std::uint64_t run) { return derive_seed(seed, group, run); }

const OutputFile* ReportBundle::find_file(const std::string& name) const {
  for (const auto& f : files)
    if (f.name == name) return &f;
  return nullptr;
}

std::pair<std::size_t, std::size_t> pre_plateau_window(const std::vector<double>& error, double floor_factor, double skip) {
  const std::size_t n = error.size();
  if (n < 10) throw std::invalid_argument("pre_plateau_window: series too short");
  std::vector<double> tail(error.end() - static_cast<std::ptrdiff_t>(std::max<std::size_t>(n / 5, 1)), error.end());
  std::nth_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(tail.size() / 2), tail.end());
  const double plateau = tail[tail.size() / 2];
  const std::size_t begin = static_cast<std::size_t>(skip * static_cast<double>(n));
  std::size_t end = begin;
  while (end < n && error[end] > floor_factor * plateau) ++end;
  if (end < begin + 10) throw std::invalid_argument("pre_plateau_window: fewer than 10 points above the plateau");
  return {begin, end};
}

ReportBundle run_experiment(const ExperimentConfig& config) {
  const auto started = Clock::now();
  ReportBundle report;
  report.directory = config.output_dir;
  report.config_echo = echo_config(config, false);
  report.seed = config.seed;
  Bundle bundle(config, report);
  switch (config.kind) {
    case ExperimentKind::ConvergencePlot: convergence_plot(config, bundle, report); break;
    case ExperimentKind::ScalingSweep: scaling_sweep(config, bundle, report); break;
    case ExperimentKind::Stabilization: stabilization(config, bundle, report); break;
    case ExperimentKind::ClosedLoopEnergy: closed_loop_energy(config, bundle, report); break;
    case ExperimentKind::GainProbe: gain_probe(config, bundle, report); break;
  }
  bundle.write(started);
  return report;
}

}  // namespace dualenkf
