#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "expa/config.hpp"
#include "expa/eval.hpp"
#include "expa/optim.hpp"
#include "expa/sortlab.hpp"
#include "expa/version.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// json <-> python object bridges (the C++ core speaks json for configs and
// records, which maps 1:1 onto dicts/lists).
py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<long long>());
    case json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    default: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
      return out;
    }
  }
}

json py_to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    json out = json::array();
    for (const auto& item : obj) out.push_back(py_to_json(item));
    return out;
  }
  if (py::isinstance<py::dict>(obj)) {
    json out = json::object();
    for (const auto& [key, value] : obj.cast<py::dict>())
      out[key.cast<std::string>()] = py_to_json(value);
    return out;
  }
  throw py::type_error("unsupported config value type");
}

struct PyCatalog {
  expa::ActionCatalog catalog;
  expa::EnvRegistry registry;
  explicit PyCatalog(const std::vector<std::string>& envs, int max_labels)
      : catalog(expa::standard_catalog(envs, max_labels)), registry(catalog) {}
};

struct PyPolicy {
  expa::PolicyParameters params;
};

expa::TaskInstance task_from_py(const py::dict& task, const PyCatalog& cat) {
  return expa::task_from_json(py_to_json(task), cat.catalog);
}

}  // namespace

PYBIND11_MODULE(_expa, m) {
  m.doc() = "Expanded-action rollout engine: environments, policy, CPO/GRPO training, "
            "and sorting-strategy analysis";
  m.attr("__version__") = expa::kVersion;

  py::register_exception<expa::ConfigError>(m, "ConfigError");
  py::register_exception<expa::TrainAbortError>(m, "TrainAbortError");

  py::class_<PyCatalog>(m, "Catalog")
      .def(py::init<const std::vector<std::string>&, int>(), py::arg("envs"),
           py::arg("max_labels") = 5)
      .def_property_readonly("vocab_size",
                             [](const PyCatalog& c) { return c.catalog.vocab_size(); })
      .def_property_readonly("num_actions",
                             [](const PyCatalog& c) { return c.catalog.num_actions(); })
      .def_property_readonly("num_envs", [](const PyCatalog& c) { return c.catalog.num_envs(); })
      .def_property_readonly("hash", [](const PyCatalog& c) { return c.catalog.hash(); })
      .def("tokens",
           [](const PyCatalog& c) {
             std::vector<std::string> out;
             for (int t = 0; t < c.catalog.vocab_size(); ++t)
               out.push_back(c.catalog.vocab().text(t));
             return out;
           })
      .def("action_labels", [](const PyCatalog& c) {
        std::vector<std::string> out;
        for (int a = 0; a < c.catalog.num_actions(); ++a) out.push_back(c.catalog.action(a).label);
        return out;
      });

  m.def(
      "generate",
      [](const std::string& task, const py::dict& generator, std::uint64_t seed,
         const PyCatalog& cat) {
        expa::Rng rng(seed);
        json out = json::array();
        for (const expa::TaskInstance& t :
             expa::generate_dataset(task, py_to_json(generator), cat.catalog, rng))
          out.push_back(expa::task_to_json(t, cat.catalog));
        return json_to_py(out);
      },
      py::arg("task"), py::arg("generator"), py::arg("seed"), py::arg("catalog"),
      "Generate task instances; returns a list of dicts matching the dataset JSONL schema.");

  py::class_<PyPolicy>(m, "Policy")
      .def(py::init([](const PyCatalog& cat, int dim, std::uint64_t seed) {
             expa::Rng rng(seed);
             PyPolicy p{expa::init_policy(cat.catalog, dim, rng)};
             return p;
           }),
           py::arg("catalog"), py::arg("dim") = 64, py::arg("seed") = 0)
      .def("init_expanded_actions",
           [](PyPolicy& p, const PyCatalog& cat) { expa::init_expanded_actions(p.params, cat.catalog); })
      .def("action_distribution",
           [](PyPolicy& p, const std::vector<std::string>& history, int active_env,
              const PyCatalog& cat) {
             std::vector<expa::TokenId> tokens = cat.catalog.vocab().encode(history);
             expa::ActionDistribution d =
                 expa::action_distribution(p.params, tokens, active_env, cat.catalog);
             // keys: vocab tokens verbatim, "route:<env>" for routing actions,
             // "<env>:<label>" for environment actions
             py::dict out;
             for (std::size_t i = 0; i < d.support.size(); ++i) {
               const expa::ActionRef& a = cat.catalog.action(d.support[i]);
               std::string key = a.label;
               if (a.kind == expa::ActionKind::Route)
                 key = "route:" + key;
               else if (a.kind == expa::ActionKind::EnvAction)
                 key = cat.catalog.env(a.env_id).name + ":" + key;
               out[py::str(key)] = d.probs[i];
             }
             return out;
           },
           py::arg("history"), py::arg("active_env"), py::arg("catalog"))
      .def("save", [](const PyPolicy& p, const std::string& path) { expa::save_params(path, p.params); })
      .def_static("load", [](const std::string& path, const PyCatalog& cat) {
        return PyPolicy{expa::load_params(path, cat.catalog)};
      });

  m.def(
      "rollout",
      [](PyPolicy& policy, const py::dict& task, const PyCatalog& cat, std::uint64_t seed,
         int max_steps, bool greedy, const py::dict& reward) {
        expa::TaskInstance t = task_from_py(task, cat);
        expa::RewardConfig rc;
        if (reward.contains("lambda_cmp")) rc.lambda_cmp = reward["lambda_cmp"].cast<double>();
        if (reward.contains("lambda_swap")) rc.lambda_swap = reward["lambda_swap"].cast<double>();
        if (reward.contains("floor")) rc.floor = reward["floor"].cast<double>();
        expa::EpisodeSpec episode = expa::make_episode(t, rc, cat.catalog, cat.registry);
        expa::NeuralPolicy np(policy.params);
        expa::Rng rng(seed);
        expa::Rollout r = expa::run_rollout(np, episode, cat.catalog, cat.registry, {max_steps},
                                            rng, greedy);
        return json_to_py(json::parse(expa::rollout_to_jsonl(r, cat.catalog)));
      },
      py::arg("policy"), py::arg("task"), py::arg("catalog"), py::arg("seed") = 0,
      py::arg("max_steps") = 96, py::arg("greedy") = false, py::arg("reward") = py::dict(),
      "Run one expanded-action rollout; returns the serialized rollout record.");

  m.def(
      "train",
      [](const py::dict& config) {
        expa::TrainConfig cfg = expa::train_config_from_json(py_to_json(config));
        expa::TrainResult result = expa::train(cfg);
        json rows = json::array();
        for (const expa::MetricsRow& r : result.rows)
          rows.push_back({{"step", r.step},
                          {"mean_reward", r.mean_reward},
                          {"probe_accuracy", r.probe_accuracy},
                          {"tool_invocations_per_rollout", r.tool_invocations_per_rollout},
                          {"branch_cf_fraction", r.branch_cf_fraction},
                          {"episodes", r.episodes}});
        json out = {{"rows", rows},
                    {"episodes", result.episodes},
                    {"final_probe_accuracy", result.final_probe_accuracy},
                    {"best_probe_accuracy", result.best_probe_accuracy}};
        return json_to_py(out);
      },
      py::arg("config"), "Run the training loop from a config dict; returns metrics.");

  // ---- sorting laboratory ----

  m.def("min_swap", [](const std::vector<int>& target_positions) {
    return expa::min_swap_perm(target_positions);
  });
  m.def("optimal_swap_average", [](int n) {
    expa::Rational r = expa::optimal_swap_stats(n);
    return py::make_tuple(static_cast<double>(r), r.str());
  });

  auto stats_dict = [](const expa::SortStats& s) {
    py::dict out;
    out["avg_comparisons"] = static_cast<double>(s.avg_comparisons);
    out["avg_swaps"] = static_cast<double>(s.avg_swaps);
    out["avg_comparisons_exact"] = s.avg_comparisons.str();
    out["avg_swaps_exact"] = s.avg_swaps.str();
    out["worst_comparisons"] = s.worst_comparisons;
    out["accuracy"] = s.accuracy;
    return out;
  };
  m.def("insertion_sort_stats",
        [stats_dict](int n) { return stats_dict(expa::sort_stats(expa::insertion_strategy(), n)); });
  m.def("pivot_sort4_stats", [stats_dict]() {
    return stats_dict(expa::sort_stats(expa::pivot_sort4_strategy(), 4));
  });
  m.def("optimal_tree_stats", [stats_dict](int n, const std::string& objective) {
    expa::TreeObjective obj = objective == "average" ? expa::TreeObjective::Average
                                                     : expa::TreeObjective::WorstCase;
    expa::DecisionTree tree = expa::optimal_comparison_tree(n, obj);
    return stats_dict(expa::sort_stats(expa::tree_strategy(tree), n));
  });
  m.def(
      "pivot_tree_dot",
      [](bool pruned) {
        expa::ActionCatalog catalog =
            expa::standard_catalog(std::vector<std::string>{"compare", "swap"}, 4);
        expa::EnvRegistry registry(catalog);
        expa::PivotSortAgent agent;
        expa::DecisionTree tree = expa::extract_decision_tree(agent, 4, catalog, registry);
        if (pruned) {
          expa::DecisionTree p = expa::prune_redundant(tree);
          return expa::tree_to_dot(p);
        }
        std::vector<int> red = expa::find_redundant_nodes(tree);
        return expa::tree_to_dot(tree, red);
      },
      py::arg("pruned") = false,
      "DOT rendering of the pivot strategy's decision tree for Sort-4.");
}
