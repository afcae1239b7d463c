#include "dualenkf/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dualenkf/format.hpp"
#include "dualenkf/generators.hpp"

namespace dualenkf {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string qualified(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

std::string format_list(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_number(v[i]);
  return out + "]";
}

std::string format_matrix(const Matrix& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += i ? ", [" : "[";
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? ", " : "") + format_number(m(i, j));
    out += "]";
  }
  return out + "]";
}

const char* generator_name(ProblemGenerator g) {
  switch (g) {
    case ProblemGenerator::Inline: return "inline";
    case ProblemGenerator::SpringMassDamper: return "spring_mass_damper";
    case ProblemGenerator::RandomCanonical: return "random_canonical";
  }
  return "?";
}

}  // namespace

// ---------------------------------------------------------------- ConfigFile

ConfigFile ConfigFile::parse(std::istream& is) {
  ConfigFile cfg;
  std::string raw;
  std::string section;
  int line_no = 0;
  cfg.sections_[""];
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header", line_no, line);
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name", line_no, line);
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'", line_no, line);
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key", line_no, line);
    auto& sec = cfg.sections_[section];
    if (sec.count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + qualified(section, key), line_no,
                        qualified(section, key));
    sec[key] = Entry{value, line_no};
  }
  return cfg;
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path, 0, path);
  return parse(is);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

const ConfigFile::Entry* ConfigFile::find(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  touched_[qualified(section, key)] = true;
  return &k->second;
}

const ConfigFile::Entry& ConfigFile::require(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) throw ConfigError("missing required field " + qualified(section, key), 0, qualified(section, key));
  return *e;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   std::optional<std::string> fallback) const {
  if (const Entry* e = find(section, key)) return e->value;
  if (fallback) return *fallback;
  return require(section, key).value;
}

double ConfigFile::get_double(const std::string& section, const std::string& key, std::optional<double> fallback) const {
  const Entry* e = find(section, key);
  if (!e) {
    if (fallback) return *fallback;
    e = &require(section, key);
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(e->line) + ": " + qualified(section, key) + " is not a number: '" +
                          e->value + "'",
                      e->line, qualified(section, key));
  }
}

long ConfigFile::get_int(const std::string& section, const std::string& key, std::optional<long> fallback) const {
  const Entry* e = find(section, key);
  if (!e) {
    if (fallback) return *fallback;
    e = &require(section, key);
  }
  try {
    std::size_t used = 0;
    const long v = std::stol(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(e->line) + ": " + qualified(section, key) + " is not an integer: '" +
                          e->value + "'",
                      e->line, qualified(section, key));
  }
}

std::uint64_t ConfigFile::get_uint(const std::string& section, const std::string& key,
                                   std::optional<std::uint64_t> fallback) const {
  const Entry* e = find(section, key);
  if (!e) {
    if (fallback) return *fallback;
    e = &require(section, key);
  }
  try {
    std::size_t used = 0;
    if (!e->value.empty() && e->value.front() == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(e->line) + ": " + qualified(section, key) +
                          " is not a nonnegative integer: '" + e->value + "'",
                      e->line, qualified(section, key));
  }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, std::optional<bool> fallback) const {
  const Entry* e = find(section, key);
  if (!e) {
    if (fallback) return *fallback;
    e = &require(section, key);
  }
  const std::string v = lower(e->value);
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError("line " + std::to_string(e->line) + ": " + qualified(section, key) + " is not a boolean: '" +
                        e->value + "'",
                    e->line, qualified(section, key));
}

Matrix ConfigFile::get_matrix(const std::string& section, const std::string& key) const {
  const Entry& e = require(section, key);
  auto fail = [&](const std::string& why) {
    return ConfigError("line " + std::to_string(e.line) + ": " + qualified(section, key) + " " + why, e.line,
                       qualified(section, key));
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(e.value);
  } catch (const nlohmann::json::exception&) {
    throw fail("is not a bracket list of numbers");
  }
  if (!j.is_array() || j.empty()) throw fail("must be a non-empty bracket list");
  if (j.front().is_number()) {
    Matrix m(static_cast<Eigen::Index>(j.size()), 1);
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw fail("mixes numbers and lists");
      m(static_cast<Eigen::Index>(i), 0) = j[i].get<double>();
    }
    return m;
  }
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) throw fail("has an empty row");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw fail("has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw fail("has a non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

std::vector<double> ConfigFile::get_list(const std::string& section, const std::string& key) const {
  const Matrix m = get_matrix(section, key);
  if (m.cols() != 1) {
    const Entry& e = *find(section, key);
    throw ConfigError("line " + std::to_string(e.line) + ": " + qualified(section, key) + " must be a flat list", e.line,
                      qualified(section, key));
  }
  return {m.data(), m.data() + m.size()};
}

std::vector<std::string> ConfigFile::get_words(const std::string& section, const std::string& key) const {
  std::vector<std::string> out;
  std::string value = get_string(section, key);
  std::replace(value.begin(), value.end(), ',', ' ');
  std::istringstream is(value);
  std::string word;
  while (is >> word) out.push_back(word);
  return out;
}

std::vector<std::string> ConfigFile::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [section, keys] : sections_)
    for (const auto& [key, entry] : keys)
      if (!touched_.count(qualified(section, key))) out.push_back(qualified(section, key));
  return out;
}

// ---------------------------------------------------------------- experiment config

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::ConvergencePlot: return "convergence_plot";
    case ExperimentKind::ScalingSweep: return "scaling_sweep";
    case ExperimentKind::Stabilization: return "stabilization";
    case ExperimentKind::ClosedLoopEnergy: return "closed_loop_energy";
    case ExperimentKind::GainProbe: return "gain_probe";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  const std::string n = lower(name);
  for (auto k : {ExperimentKind::ConvergencePlot, ExperimentKind::ScalingSweep, ExperimentKind::Stabilization,
                 ExperimentKind::ClosedLoopEnergy, ExperimentKind::GainProbe})
    if (to_string(k) == n) return k;
  throw ConfigError("unknown experiment kind '" + name + "'", 0, "experiment.kind");
}

std::string CostVariant::label() const {
  if (kind == CostKind::LQG) return "lqg";
  return "leqg_" + format_number(theta);
}

CostVariant CostVariant::parse(const std::string& text) {
  const std::string t = lower(trim(text));
  if (t == "lqg") return {};
  if (t.rfind("leqg:", 0) == 0 || t.rfind("leqg_", 0) == 0) {
    try {
      std::size_t used = 0;
      const double theta = std::stod(t.substr(5), &used);
      if (used == t.size() - 5 && theta != 0.0) return {CostKind::LEQG, theta};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("bad cost variant '" + text + "' (expected lqg or leqg:<theta>)", 0, "experiment.variants");
}

std::vector<CostVariant> ExperimentConfig::variants_or_default() const {
  if (!variants.empty()) return variants;
  return {CostVariant{problem.kind, problem.theta}};
}

LqProblem build_problem(const ProblemSource& source, std::uint64_t problem_seed, const std::optional<CostVariant>& variant) {
  LqProblem p;
  switch (source.generator) {
    case ProblemGenerator::Inline: p = source.inline_problem; break;
    case ProblemGenerator::SpringMassDamper:
      p = gen_spring_mass_damper(source.masses, source.sigma_scale, source.flip_stability);
      break;
    case ProblemGenerator::RandomCanonical: p = gen_random_canonical(source.dimension, problem_seed, source.sigma_scale); break;
  }
  const CostVariant v = variant.value_or(CostVariant{source.kind, source.theta});
  p = with_cost_kind(std::move(p), v.kind, v.theta);
  p.horizon = source.horizon;
  return p;
}

LqProblem build_problem(const ProblemSource& source, const std::optional<CostVariant>& variant) {
  return build_problem(source, source.problem_seed, variant);
}

ExperimentConfig experiment_config_from(const ConfigFile& f) {
  ExperimentConfig c;
  const long version = f.get_int("", "schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) {
    const auto* e = f.find("", "schema_version");
    throw ConfigError("unsupported schema_version " + std::to_string(version), e ? e->line : 0, "schema_version");
  }

  // [problem]
  auto& ps = c.problem;
  const std::string gen = lower(f.get_string("problem", "generator", "spring_mass_damper"));
  if (gen == "inline") {
    ps.generator = ProblemGenerator::Inline;
    auto& d = ps.inline_problem.dynamics;
    auto& cost = ps.inline_problem.cost;
    d.A = f.get_matrix("problem", "a");
    d.B = f.get_matrix("problem", "b");
    d.sigma = f.has("problem", "sigma") ? f.get_matrix("problem", "sigma") : Matrix::Zero(d.A.rows(), 1);
    cost.C = f.has("problem", "c") ? f.get_matrix("problem", "c") : Matrix::Identity(d.A.rows(), d.A.rows());
    cost.R = f.has("problem", "r") ? f.get_matrix("problem", "r") : Matrix::Identity(d.B.cols(), d.B.cols());
    cost.G = f.has("problem", "g") ? f.get_matrix("problem", "g") : Matrix::Identity(d.A.rows(), d.A.rows());
  } else if (gen == "spring_mass_damper") {
    ps.generator = ProblemGenerator::SpringMassDamper;
    ps.masses = static_cast<int>(f.get_int("problem", "masses", 2));
    ps.flip_stability = f.get_bool("problem", "flip_stability", false);
    ps.sigma_scale = f.get_double("problem", "sigma_scale", 0.1);
  } else if (gen == "random_canonical") {
    ps.generator = ProblemGenerator::RandomCanonical;
    ps.dimension = static_cast<int>(f.get_int("problem", "dimension", 10));
    ps.problem_seed = f.get_uint("problem", "problem_seed", 0);
    ps.sigma_scale = f.get_double("problem", "sigma_scale", 0.1);
  } else {
    const auto* e = f.find("problem", "generator");
    throw ConfigError("line " + std::to_string(e ? e->line : 0) + ": unknown generator '" + gen + "'", e ? e->line : 0,
                      "problem.generator");
  }
  const std::string cost = lower(f.get_string("problem", "cost", "lqg"));
  if (cost == "lqg") {
    ps.kind = CostKind::LQG;
  } else if (cost == "leqg") {
    ps.kind = CostKind::LEQG;
    ps.theta = f.get_double("problem", "theta");
  } else {
    const auto* e = f.find("problem", "cost");
    throw ConfigError("line " + std::to_string(e->line) + ": problem.cost must be lqg or leqg", e->line, "problem.cost");
  }
  const std::string horizon = lower(f.get_string("problem", "horizon", "average"));
  if (horizon == "average") {
    ps.horizon = Horizon::average();
  } else if (horizon == "finite") {
    ps.horizon = Horizon::finite(f.get_double("problem", "t"));
  } else {
    const auto* e = f.find("problem", "horizon");
    throw ConfigError("line " + std::to_string(e->line) + ": problem.horizon must be average or finite", e->line,
                      "problem.horizon");
  }

  // [experiment]
  c.kind = parse_experiment_kind(f.get_string("experiment", "kind", "convergence_plot"));
  c.runs = static_cast<int>(f.get_int("experiment", "runs", 1));
  c.seed = f.get_uint("experiment", "seed", 0);
  c.output_dir = f.get_string("experiment", "output_dir", "out");
  c.threads = static_cast<int>(f.get_int("experiment", "threads", 1));
  c.require_unstable = f.get_bool("experiment", "require_unstable", true);
  if (f.has("experiment", "particle_sweep"))
    for (double v : f.get_list("experiment", "particle_sweep")) c.particle_sweep.push_back(static_cast<int>(v));
  if (f.has("experiment", "evaluation_sweep"))
    for (double v : f.get_list("experiment", "evaluation_sweep")) c.evaluation_sweep.push_back(static_cast<int>(v));
  if (f.has("experiment", "variants"))
    for (const auto& w : f.get_words("experiment", "variants")) {
      try {
        c.variants.push_back(CostVariant::parse(w));
      } catch (const ConfigError& err) {
        const int line = f.find("experiment", "variants")->line;
        throw ConfigError("line " + std::to_string(line) + ": " + err.what(), line, "experiment.variants");
      }
    }
  if (c.runs < 1) throw ConfigError("experiment.runs must be >= 1", f.find("experiment", "runs")->line, "experiment.runs");

  // [enkf]
  c.enkf.particles = static_cast<int>(f.get_int("enkf", "particles", 500));
  c.enkf.horizon = f.get_double("enkf", "horizon", ps.horizon.kind == HorizonKind::Finite ? ps.horizon.T : 10.0);
  c.enkf.step = f.get_double("enkf", "step", 0.02);
  c.enkf.jitter = f.get_double("enkf", "jitter", 0.0);
  c.enkf.seed = c.seed;
  c.enkf.threads = c.threads;
  if (!(c.enkf.step > 0.0)) throw ConfigError("enkf.step must be positive", f.find("enkf", "step")->line, "enkf.step");

  // [online]
  c.online.evaluations = static_cast<int>(f.get_int("online", "evaluations", 1));
  c.online.step = f.get_double("online", "step", c.enkf.step);
  if (!(c.online.step > 0.0))
    throw ConfigError("online.step must be > 0", f.find("online", "step")->line, "online.step");
  if (c.online.evaluations < 1)
    throw ConfigError("online.evaluations must be >= 1", f.find("online", "evaluations")->line, "online.evaluations");

  // [riccati]
  c.reference_step = f.get_double("riccati", "reference_step", 0.0);
  c.are_tolerance = f.get_double("riccati", "are_tolerance", 1e-10);

  // [rollout]
  const std::string ctrl = lower(f.get_string("rollout", "controller", "gain"));
  if (ctrl == "gain") {
    c.rollout.controller = ControllerMode::Gain;
  } else if (ctrl == "probe") {
    c.rollout.controller = ControllerMode::Probe;
  } else {
    const auto* e = f.find("rollout", "controller");
    throw ConfigError("line " + std::to_string(e->line) + ": rollout.controller must be gain or probe", e->line,
                      "rollout.controller");
  }
  c.rollout.horizon = f.get_double("rollout", "horizon", c.enkf.horizon);
  if (f.has("rollout", "initial_state")) {
    const auto v = f.get_list("rollout", "initial_state");
    c.rollout.initial_state = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  const auto unused = f.unused_keys();
  if (!unused.empty()) {
    std::string list;
    for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config fields: " + list, 0, unused.front());
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) { return experiment_config_from(ConfigFile::load(path)); }

ExperimentConfig parse_experiment_config(const std::string& text) {
  return experiment_config_from(ConfigFile::parse_string(text));
}

std::string echo_config(const ExperimentConfig& c, bool include_execution) {
  std::ostringstream os;
  os << "schema_version = " << kConfigSchemaVersion << "\n\n[problem]\n";
  const auto& ps = c.problem;
  os << "generator = " << generator_name(ps.generator) << '\n';
  switch (ps.generator) {
    case ProblemGenerator::Inline: {
      const auto& p = ps.inline_problem;
      os << "A = " << format_matrix(p.dynamics.A) << '\n'
         << "B = " << format_matrix(p.dynamics.B) << '\n'
         << "sigma = " << format_matrix(p.dynamics.sigma) << '\n'
         << "C = " << format_matrix(p.cost.C) << '\n'
         << "R = " << format_matrix(p.cost.R) << '\n'
         << "G = " << format_matrix(p.cost.G) << '\n';
      break;
    }
    case ProblemGenerator::SpringMassDamper:
      os << "masses = " << ps.masses << "\nsigma_scale = " << format_number(ps.sigma_scale)
         << "\nflip_stability = " << (ps.flip_stability ? "true" : "false") << '\n';
      break;
    case ProblemGenerator::RandomCanonical:
      os << "dimension = " << ps.dimension << "\nproblem_seed = " << ps.problem_seed
         << "\nsigma_scale = " << format_number(ps.sigma_scale) << '\n';
      break;
  }
  os << "cost = " << (ps.kind == CostKind::LQG ? "lqg" : "leqg") << '\n';
  if (ps.kind == CostKind::LEQG) os << "theta = " << format_number(ps.theta) << '\n';
  if (ps.horizon.kind == HorizonKind::Finite) {
    os << "horizon = finite\nT = " << format_number(ps.horizon.T) << '\n';
  } else {
    os << "horizon = average\n";
  }

  os << "\n[enkf]\nparticles = " << c.enkf.particles << "\nhorizon = " << format_number(c.enkf.horizon)
     << "\nstep = " << format_number(c.enkf.step) << "\njitter = " << format_number(c.enkf.jitter) << '\n';
  os << "\n[online]\nevaluations = " << c.online.evaluations << "\nstep = " << format_number(c.online.step) << '\n';
  os << "\n[riccati]\nreference_step = " << format_number(c.reference_step)
     << "\nare_tolerance = " << format_number(c.are_tolerance) << '\n';
  os << "\n[rollout]\ncontroller = " << (c.rollout.controller == ControllerMode::Gain ? "gain" : "probe")
     << "\nhorizon = " << format_number(c.rollout.horizon) << '\n';
  if (c.rollout.initial_state) {
    const Vector& x = *c.rollout.initial_state;
    os << "initial_state = " << format_list({x.data(), x.data() + x.size()}) << '\n';
  }
  os << "\n[experiment]\nkind = " << to_string(c.kind) << "\nruns = " << c.runs << "\nseed = " << c.seed
     << "\nrequire_unstable = " << (c.require_unstable ? "true" : "false") << '\n';
  if (include_execution) os << "output_dir = " << c.output_dir << "\nthreads = " << c.threads << '\n';
  if (!c.particle_sweep.empty())
    os << "particle_sweep = " << format_list({c.particle_sweep.begin(), c.particle_sweep.end()}) << '\n';
  if (!c.evaluation_sweep.empty())
    os << "evaluation_sweep = " << format_list({c.evaluation_sweep.begin(), c.evaluation_sweep.end()}) << '\n';
  if (!c.variants.empty()) {
    os << "variants = ";
    for (std::size_t i = 0; i < c.variants.size(); ++i) {
      const auto& v = c.variants[i];
      os << (i ? ", " : "") << (v.kind == CostKind::LQG ? std::string("lqg") : "leqg:" + format_number(v.theta));
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace dualenkf
