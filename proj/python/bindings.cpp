#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <limits>

#include "dualenkf/bench.hpp"
#include "dualenkf/config.hpp"
#include "dualenkf/control.hpp"
#include "dualenkf/enkf.hpp"
#include "dualenkf/generators.hpp"
#include "dualenkf/metrics.hpp"
#include "dualenkf/riccati.hpp"

namespace py = pybind11;
using namespace dualenkf;

namespace {

LqProblem make_problem(Matrix A, Matrix B, Matrix sigma, Matrix C, Matrix R, Matrix G, const std::string& cost,
                       double theta, std::optional<double> T) {
  LqProblem p;
  p.dynamics = {std::move(A), std::move(B), std::move(sigma)};
  p.cost.C = std::move(C);
  p.cost.R = std::move(R);
  p.cost.G = std::move(G);
  if (cost == "leqg") {
    p.cost.kind = CostKind::LEQG;
    p.cost.theta = theta;
  } else if (cost != "lqg") {
    throw std::invalid_argument("cost must be 'lqg' or 'leqg'");
  }
  p.horizon = T ? Horizon::finite(*T) : Horizon::average();
  p.check_dimensions();
  return p;
}

// Stacks a sequence of d×d matrices into a (n, d, d) array.
py::array_t<double> stack(const std::vector<Matrix>& values) {
  const auto n = static_cast<py::ssize_t>(values.size());
  const auto d = n ? static_cast<py::ssize_t>(values.front().rows()) : 0;
  py::array_t<double> out({n, d, d});
  auto a = out.mutable_unchecked<3>();
  for (py::ssize_t k = 0; k < n; ++k)
    for (py::ssize_t i = 0; i < d; ++i)
      for (py::ssize_t j = 0; j < d; ++j) a(k, i, j) = values[static_cast<std::size_t>(k)](i, j);
  return out;
}

py::dict trajectory(const RiccatiTrajectory& t) {
  py::dict d;
  d["times"] = t.times;
  d["values"] = stack(t.values);
  return d;
}

}  // namespace

PYBIND11_MODULE(_dualenkf, m) {
  m.doc() = "Dual ensemble Kalman filter for linear-quadratic control";
  m.attr("__version__") = code_version();

  static py::exception<NumericalError> numerical(m, "NumericalError", PyExc_RuntimeError);

  py::class_<LqProblem>(m, "LqProblem")
      .def_property_readonly("A", [](const LqProblem& p) { return p.dynamics.A; })
      .def_property_readonly("B", [](const LqProblem& p) { return p.dynamics.B; })
      .def_property_readonly("sigma", [](const LqProblem& p) { return p.dynamics.sigma; })
      .def_property_readonly("C", [](const LqProblem& p) { return p.cost.C; })
      .def_property_readonly("R", [](const LqProblem& p) { return p.cost.R; })
      .def_property_readonly("G", [](const LqProblem& p) { return p.cost.G; })
      .def_property_readonly("theta", [](const LqProblem& p) { return p.cost.theta; })
      .def_property_readonly("cost", [](const LqProblem& p) { return p.cost.risk_sensitive() ? "leqg" : "lqg"; })
      .def_property_readonly("T", [](const LqProblem& p) -> std::optional<double> {
        if (p.horizon.kind == HorizonKind::Finite) return p.horizon.T;
        return std::nullopt;
      })
      .def_property_readonly("state_dim", &LqProblem::state_dim)
      .def_property_readonly("input_dim", &LqProblem::input_dim)
      .def(
          "with_cost",
          [](const LqProblem& p, const std::string& cost, double theta) {
            return with_cost_kind(p, cost == "leqg" ? CostKind::LEQG : CostKind::LQG, theta);
          },
          py::arg("cost"), py::arg("theta") = 0.0);

  m.def("problem", &make_problem, py::arg("A"), py::arg("B"), py::arg("sigma"), py::arg("C"), py::arg("R"),
        py::arg("G"), py::arg("cost") = "lqg", py::arg("theta") = 0.0, py::arg("T") = py::none());
  m.def("spring_mass_damper", &gen_spring_mass_damper, py::arg("masses"), py::arg("sigma_scale") = 0.1,
        py::arg("flip_stability") = false);
  m.def("random_canonical", &gen_random_canonical, py::arg("dim"), py::arg("seed"), py::arg("sigma_scale") = 0.1);

  m.def("validate", [](const LqProblem& p) {
    const auto report = validate(p);
    py::list checks;
    for (const auto& c : report.checks) {
      py::dict d;
      d["name"] = c.name;
      d["passed"] = c.passed;
      d["margin"] = c.margin;
      d["advisory"] = c.advisory;
      d["detail"] = c.detail;
      checks.append(d);
    }
    py::dict out;
    out["ok"] = report.ok();
    out["checks"] = checks;
    out["warnings"] = report.warnings;
    return out;
  });
  m.def("require_valid", &require_valid);

  m.def("ricc_op", &ricc_op, py::arg("L"), py::arg("problem"));
  m.def("dual_ricc_op", &dual_ricc_op, py::arg("L"), py::arg("problem"));
  m.def(
      "solve_dre", [](const LqProblem& p, double T, double tau) { return trajectory(solve_dre(p, T, tau)); },
      py::arg("problem"), py::arg("T"), py::arg("tau_ref") = 2e-3);
  m.def(
      "solve_dual_dre", [](const LqProblem& p, double T, double tau) { return trajectory(solve_dual_dre(p, T, tau)); },
      py::arg("problem"), py::arg("T"), py::arg("tau_ref") = 2e-3);
  m.def(
      "solve_are",
      [](const LqProblem& p, double tol, double tau) {
        AreOptions o;
        o.tol = tol;
        o.tau_ref = tau;
        const auto s = solve_are(p, o);
        py::dict d;
        d["P_bar"] = s.P_bar;
        d["residual"] = s.residual;
        d["horizon_used"] = s.horizon_used;
        return d;
      },
      py::arg("problem"), py::arg("tol") = 1e-10, py::arg("tau_ref") = 2e-3);
  m.def("s_to_p", &s_to_p, py::arg("S"), py::arg("problem"));
  m.def("p_to_s", &p_to_s, py::arg("P"), py::arg("problem"));

  m.def(
      "run_offline",
      [](const LqProblem& p, int particles, double horizon, double step, std::uint64_t seed, int threads) {
        EnkfConfig c;
        c.particles = particles;
        c.horizon = horizon;
        c.step = step;
        c.seed = seed;
        c.threads = threads;
        EnkfOutput out;
        {
          py::gil_scoped_release release;
          out = run_offline(p, c);
        }
        const Eigen::Index d = p.state_dim();
        std::vector<Matrix> primal;
        for (const auto& P : out.primal)
          primal.push_back(P ? *P : Matrix::Constant(d, d, std::numeric_limits<double>::quiet_NaN()));
        Matrix means(static_cast<Eigen::Index>(out.size()), d);
        for (std::size_t k = 0; k < out.size(); ++k) means.row(static_cast<Eigen::Index>(k)) = out.means[k].transpose();
        py::dict r;
        r["times"] = out.times;
        r["means"] = means;
        r["S"] = stack(out.covariances);
        r["P"] = stack(primal);
        r["covariance_inversions"] = out.stats.covariance_inversions;
        r["simulator_calls"] = out.stats.simulator_calls;
        return r;
      },
      py::arg("problem"), py::arg("particles") = 500, py::arg("horizon") = 10.0, py::arg("step") = 0.02,
      py::arg("seed") = 0, py::arg("threads") = 1);

  m.def("gain_from_p", &gain_from_p, py::arg("P"), py::arg("problem"));
  m.def(
      "probe_control",
      [](const Vector& x, const Matrix& P, const LqProblem& p, int evaluations, double step, std::uint64_t seed) {
        const Simulator sim(p.dynamics);
        return probe_control(x, P, OnlineConfig{evaluations, step}, ProbeKey{seed, 0, 0}, sim, p);
      },
      py::arg("x"), py::arg("P"), py::arg("problem"), py::arg("evaluations") = 1, py::arg("step") = 0.02,
      py::arg("seed") = 0);
  m.def(
      "closed_loop_eigenvalues", [](const LqProblem& p, const Matrix& K) { return closed_loop_spectrum(p, K).eigenvalues; },
      py::arg("problem"), py::arg("K"));
  m.def("average_cost", &average_cost_lyapunov, py::arg("problem"), py::arg("K"));

  m.def(
      "run_experiment",
      [](const std::string& config_path, std::optional<std::string> output_dir, std::optional<int> threads,
         std::optional<std::uint64_t> seed) {
        auto c = load_experiment_config(config_path);
        if (output_dir) c.output_dir = *output_dir;
        if (threads) c.threads = c.enkf.threads = *threads;
        if (seed) c.seed = c.enkf.seed = *seed;
        ReportBundle b;
        {
          py::gil_scoped_release release;
          b = run_experiment(c);
        }
        py::dict files;
        for (const auto& f : b.files) files[py::str(f.name)] = f.sha256;
        py::dict r;
        r["directory"] = b.directory;
        r["complete"] = b.complete();
        r["runs_attempted"] = b.runs_attempted;
        r["runs_completed"] = b.runs_completed;
        r["files"] = files;
        return r;
      },
      py::arg("config"), py::arg("output_dir") = py::none(), py::arg("threads") = py::none(),
      py::arg("seed") = py::none());
}
