// JSON documents cross the boundary as strings; syncsim/__init__.py decodes them.
#include <memory>
#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "syncsim/errors.hpp"
#include "syncsim/harness.hpp"
#include "syncsim/serialize.hpp"

namespace py = pybind11;
using namespace syncsim;

namespace {

nlohmann::json parse(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(e.what());
  }
}

EnvConfig env_from(const std::string& text) {
  return text.empty() ? EnvConfig{} : env_config_from_json(parse(text));
}

py::dict outcome_dict(const StepOutcome& out) {
  py::dict d;
  d["reward"] = out.reward;
  d["tasks_total"] = out.tasks_total;
  d["tasks_compliant"] = out.tasks_compliant;
  d["tasks_correct_server"] = out.tasks_correct_server;
  d["tasks_infeasible"] = out.tasks_infeasible;
  d["next_state"] = out.next_state.staleness;
  return d;
}

class PyPolicy {
 public:
  PyPolicy(const std::string& name, int n_domains, int sb, int max_staleness,
           const std::string& config, std::uint64_t seed)
      : policy_(make_policy(name, ActionSpace(n_domains, sb), max_staleness,
                            config.empty() ? nlohmann::json() : parse(config), seed)) {}

  std::string name() const { return policy_->name(); }
  std::vector<int> act(const std::vector<int>& staleness, bool explore) {
    return policy_->act(SyncState{staleness}, explore).selected;
  }
  std::string checkpoint() const { return policy_->checkpoint().dump(); }
  void load_checkpoint(const std::string& text) { policy_->load_checkpoint(parse(text)); }
  SynchronizerPolicy& get() { return *policy_; }

 private:
  std::unique_ptr<SynchronizerPolicy> policy_;
};

}  // namespace

PYBIND11_MODULE(_syncsim, m) {
  m.doc() = "Multi-domain SDN controller synchronization simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<BudgetError>(m, "BudgetError", PyExc_ValueError);
  py::register_exception<MissingPolicyError>(m, "MissingPolicyError", PyExc_KeyError);
  py::register_exception<EpisodeStateError>(m, "EpisodeStateError", PyExc_RuntimeError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);

  m.def("generate_network_json", [](const std::string& network_config) {
    const NetworkConfig cfg =
        network_config.empty() ? NetworkConfig{} : network_config_from_json(parse(network_config));
    return network_to_json(generate_network(cfg)).dump();
  }, py::arg("network_config") = "");

  m.def("shortest_path", [](const std::vector<int>& sizes,
                            const std::vector<std::tuple<int, int, int, int, double>>& links,
                            std::pair<int, int> source, std::pair<int, int> target, double hop_wait) {
    RoutingGraph g(sizes);
    for (const auto& [da, na, db, nb, w] : links) g.add_link({da, na}, {db, nb}, w);
    const PathResult p = shortest_path(g, {source.first, source.second}, {target.first, target.second}, hop_wait);
    std::vector<std::pair<int, int>> hops;
    for (const auto& h : p.hops) hops.emplace_back(h.domain, h.node);
    return py::make_tuple(p.reachable, p.latency_ms, hops);
  }, py::arg("domain_sizes"), py::arg("links"), py::arg("source"), py::arg("target"),
     py::arg("hop_wait_ms") = 1.0);

  m.def("task_utility", &task_utility, py::arg("compliant"), py::arg("correct_server"),
        py::arg("selected_cost"), py::arg("oracle_cost"), py::arg("lambda_penalty") = 80.0,
        py::arg("r1") = 10000.0);
  m.def("exploration_probability", &exploration_probability, py::arg("episode"),
        py::arg("epsilon_decay") = 25.0);
  m.def("action_space_size", &action_space_size, py::arg("n_domains"), py::arg("sb"));
  m.def("known_policies", &known_policies);

  py::class_<Environment>(m, "Environment")
      .def(py::init([](const std::string& env_config) { return Environment(env_from(env_config)); }),
           py::arg("env_config") = "")
      .def("reset", [](Environment& e, std::uint64_t seed) { return e.reset(seed).staleness; },
           py::arg("seed"))
      .def("begin_episode", [](Environment& e, int horizon) { return e.begin_episode(horizon).staleness; },
           py::arg("horizon") = 0)
      .def("step", [](Environment& e, const std::vector<int>& selected) {
        const int index = e.actions().index_of(selected);
        return outcome_dict(e.step(e.actions().action(index)));
      }, py::arg("selected"))
      .def_property_readonly("done", &Environment::done)
      .def_property_readonly("steps_taken", &Environment::steps_taken)
      .def_property_readonly("n_domains", [](const Environment& e) { return e.actions().n_domains(); })
      .def_property_readonly("sb", [](const Environment& e) { return e.actions().budget(); })
      .def("network_json", [](const Environment& e) { return network_to_json(e.truth()).dump(); });

  py::class_<PyPolicy>(m, "Policy")
      .def(py::init<const std::string&, int, int, int, const std::string&, std::uint64_t>(),
           py::arg("name"), py::arg("n_domains"), py::arg("sb"), py::arg("max_staleness") = 64,
           py::arg("config") = "", py::arg("seed") = 0)
      .def_property_readonly("name", &PyPolicy::name)
      .def("act", &PyPolicy::act, py::arg("staleness"), py::arg("explore") = false)
      .def("checkpoint_json", &PyPolicy::checkpoint)
      .def("load_checkpoint_json", &PyPolicy::load_checkpoint, py::arg("text"));

  m.def("run_episode", [](Environment& env, PyPolicy& policy, int horizon, bool explore, bool learn) {
    const MetricsRow r = run_episode(env, policy.get(), horizon, explore, learn);
    return format_metrics_row(r);
  }, py::arg("env"), py::arg("policy"), py::arg("horizon"), py::arg("explore") = false,
     py::arg("learn") = false);

  m.def("run_experiment_json", [](const std::string& config, const std::string& out_dir) {
    const ConfigDocument doc = parse_config(parse(config));
    ExperimentResult result;
    {
      py::gil_scoped_release release;
      result = run_experiment(doc.experiment);
    }
    if (!out_dir.empty()) write_experiment(doc.experiment, result, out_dir);
    std::ostringstream csv;
    write_metrics_csv(csv, result.rows());
    return py::make_tuple(csv.str(), summarize(doc.experiment, result).dump());
  }, py::arg("config"), py::arg("out_dir") = "");

  m.def("compare_csv", [](const std::string& csv, const std::string& reference) {
    std::istringstream in(csv);
    return compare(read_metrics_csv(in), reference).dump();
  }, py::arg("metrics_csv"), py::arg("reference") = "d2q");

  m.attr("METRICS_HEADER") = kMetricsHeader;
}
