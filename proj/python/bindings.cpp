#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "regimerisk/cli_app.hpp"
#include "regimerisk/error.hpp"
#include "regimerisk/oracle_lab.hpp"
#include "regimerisk/stress_engine.hpp"
#include "regimerisk/var_engine.hpp"
#include "regimerisk/vi_core.hpp"

namespace py = pybind11;
using namespace regimerisk;

namespace {

ObservationSet observations(const Eigen::MatrixXd& x, const std::vector<int>& d) {
  if (static_cast<std::size_t>(x.rows()) != d.size()) throw DataError("x and d differ in length");
  return {x, d};
}

py::tuple peak_surface(const std::vector<double>& path, std::size_t L, std::size_t H) {
  const auto records = peak_loss_surface(path, L, H);
  std::vector<std::size_t> t, start, end;
  std::vector<double> loss;
  for (const auto& r : records) {
    t.push_back(r.t);
    loss.push_back(r.loss);
    start.push_back(r.start);
    end.push_back(r.end);
  }
  return py::make_tuple(t, loss, start, end);
}

LossMixture mixture(const std::vector<double>& weights, const std::vector<double>& means,
                    const std::vector<double>& sds) {
  if (weights.size() != means.size() || means.size() != sds.size()) {
    throw ConfigError("weights, means and sds differ in length");
  }
  std::vector<CategoryLossGaussian> g;
  for (std::size_t j = 0; j < means.size(); ++j) g.push_back({means[j], sds[j], 0, true, false, false});
  return loss_distribution(weights, g);
}

py::dict market_panel(std::uint64_t seed, std::size_t days) {
  const auto m = gen_market_panel(MarketSynthSpec::regime_switch(seed, days));
  std::vector<std::string> dates;
  for (const auto& d : m.panel.dates()) dates.push_back(format_date(d));
  py::dict series;
  for (const auto& [name, values] : m.panel.all_series()) series[py::str(name)] = values;
  py::dict out;
  out["dates"] = dates;
  out["series"] = series;
  out["regime"] = m.regime;
  return out;
}

py::tuple cli(std::vector<std::string> args) {
  args.insert(args.begin(), "regimerisk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Regime-conditional VaR and stress scenario design";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<VIHyperparams>(m, "VIHyperparams")
      .def(py::init<>())
      .def_readwrite("pi", &VIHyperparams::pi)
      .def_readwrite("mu0", &VIHyperparams::mu0)
      .def_readwrite("R0", &VIHyperparams::R0)
      .def_readwrite("M", &VIHyperparams::M)
      .def_readwrite("alpha0", &VIHyperparams::alpha0)
      .def_property_readonly("clusters", &VIHyperparams::clusters)
      .def_property_readonly("categories", &VIHyperparams::categories);

  py::class_<VariationalState>(m, "VariationalState")
      .def_readonly("phi", &VariationalState::phi)
      .def_readonly("mu_hat", &VariationalState::mu_hat)
      .def_readonly("R_hat", &VariationalState::R_hat)
      .def_readonly("alpha_hat", &VariationalState::alpha_hat)
      .def_readonly("elbo_trace", &VariationalState::elbo_trace)
      .def_readonly("sweeps", &VariationalState::sweeps)
      .def_readonly("converged", &VariationalState::converged);

  m.def(
      "default_hyperparams",
      [](const Eigen::MatrixXd& x, int clusters, int categories, std::uint64_t seed, double alpha0,
         double prior_scale) { return default_hyperparams(x, clusters, categories, seed, {alpha0, prior_scale}); },
      py::arg("x"), py::arg("clusters"), py::arg("categories"), py::arg("seed") = 0, py::arg("alpha0") = 1.0,
      py::arg("prior_scale") = 4.0);
  m.def(
      "cavi_fit",
      [](const Eigen::MatrixXd& x, const std::vector<int>& d, const VIHyperparams& hyper, int max_sweeps,
         double rel_tol, int restarts, std::uint64_t seed) {
        return cavi_fit(observations(x, d), hyper, {max_sweeps, rel_tol, restarts, seed});
      },
      py::arg("x"), py::arg("d"), py::arg("hyper"), py::arg("max_sweeps") = 500, py::arg("rel_tol") = 1e-8,
      py::arg("restarts") = 3, py::arg("seed") = 0);
  m.def(
      "elbo",
      [](const Eigen::MatrixXd& x, const std::vector<int>& d, const VIHyperparams& hyper,
         const VariationalState& state) { return elbo(observations(x, d), hyper, state); },
      py::arg("x"), py::arg("d"), py::arg("hyper"), py::arg("state"));
  m.def("predictive_cluster_probs", &predictive_cluster_probs, py::arg("x"), py::arg("hyper"), py::arg("state"));
  m.def("predictive_category_probs", &predictive_category_probs, py::arg("x"), py::arg("hyper"), py::arg("state"));
  m.def("dirichlet_means", &dirichlet_means, py::arg("alpha"));

  m.def(
      "weighted_var",
      [](const std::vector<double>& outcomes, const std::vector<double>& probabilities, double confidence) {
        if (outcomes.size() != probabilities.size()) throw ConfigError("outcomes and probabilities differ in length");
        return var_quantile({outcomes, probabilities}, confidence);
      },
      py::arg("outcomes"), py::arg("probabilities"), py::arg("confidence"));
  m.def(
      "hs_var", [](const std::vector<double>& pnl, double confidence) { return hs_var(pnl, confidence); },
      py::arg("pnl"), py::arg("confidence"));
  m.def(
      "gaussian_var",
      [](const std::vector<double>& pnl, double confidence, bool zero_mean) {
        return gaussian_var(pnl, confidence, zero_mean);
      },
      py::arg("pnl"), py::arg("confidence"), py::arg("zero_mean") = false);

  m.def("peak_loss_surface", &peak_surface, py::arg("path"), py::arg("L"), py::arg("H"),
        "Returns (t, loss, start, end) lists.");
  m.def(
      "mixture_cdf",
      [](const std::vector<double>& w, const std::vector<double>& mu, const std::vector<double>& sd, double x) {
        return mixture(w, mu, sd).cdf(x);
      },
      py::arg("weights"), py::arg("means"), py::arg("sds"), py::arg("x"));
  m.def(
      "target_loss",
      [](const std::vector<double>& w, const std::vector<double>& mu, const std::vector<double>& sd, double p_star) {
        return target_loss(mixture(w, mu, sd), p_star);
      },
      py::arg("weights"), py::arg("means"), py::arg("sds"), py::arg("p_star"));
  m.def(
      "conditional_shift",
      [](double mean_loss, double mean_shift, double var_loss, double cov, double loss) {
        return conditional_shift({mean_loss, mean_shift, var_loss, 0.0, cov, 0, false}, loss).value;
      },
      py::arg("mean_loss"), py::arg("mean_shift"), py::arg("var_loss"), py::arg("cov"), py::arg("loss"));

  m.def("gen_market_panel", &market_panel, py::arg("seed"), py::arg("days") = 600);
  m.def("run_cli", &cli, py::arg("args"), "Runs the command-line tool in process; returns (code, stdout, stderr).");
}
