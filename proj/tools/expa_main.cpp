#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "expa/config.hpp"
#include "expa/eval.hpp"
#include "expa/optim.hpp"
#include "expa/sortlab.hpp"
#include "expa/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw expa::ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw expa::ConfigError(std::string("config parse error: ") + e.what());
  }
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& config,
                    std::uint64_t seed) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["version"] = expa::kVersion;
  m["wall_clock_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  std::ofstream out(out_dir + "/manifest.json");
  out << m.dump(2) << '\n';
}

std::string out_dir_from(const json& cfg, const std::string& out_override) {
  std::string dir = out_override.empty() ? cfg.value("out", std::string(".")) : out_override;
  fs::create_directories(dir);
  return dir;
}

expa::ActionCatalog catalog_for(const json& cfg, const std::string& task) {
  std::vector<std::string> envs = cfg.contains("envs")
                                      ? cfg.at("envs").get<std::vector<std::string>>()
                                      : expa::default_envs(task);
  return expa::standard_catalog(envs, cfg.value("max_labels", 5));
}

int cmd_gen(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
            const std::string& out_override) {
  json cfg = load_config(config_path);
  expa::require_keys(cfg, {"task", "generator", "splits", "envs", "max_labels", "seed", "out"},
                     "gen config");
  const std::string task = cfg.at("task").get<std::string>();
  std::uint64_t seed = has_seed ? seed_override : cfg.value("seed", 0ULL);
  std::string out_dir = out_dir_from(cfg, out_override);
  expa::ActionCatalog catalog = catalog_for(cfg, task);
  json generator = cfg.value("generator", json::object());
  json splits = cfg.value("splits", json{{"train", generator.value("n_instances", 1000)}});
  int split_index = 0;
  for (const auto& [name, n] : splits.items()) {
    json gen_cfg = generator;
    gen_cfg["n_instances"] = n.get<int>();
    expa::Rng rng(expa::Rng::derive(seed, split_index++));
    std::vector<expa::TaskInstance> data = expa::generate_dataset(task, gen_cfg, catalog, rng);
    expa::write_dataset_jsonl(out_dir + "/" + task + "_" + name + ".jsonl", data, catalog);
    std::cout << "wrote " << data.size() << " instances to " << out_dir << "/" << task << "_"
              << name << ".jsonl\n";
  }
  json resolved = cfg;
  resolved["seed"] = seed;
  write_manifest(out_dir, "gen", resolved, seed);
  return 0;
}

int cmd_train(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
              const std::string& out_override, const std::string& resume) {
  json cfg = load_config(config_path);
  if (has_seed) cfg["seed"] = seed_override;
  if (!out_override.empty()) cfg["out"] = out_override;
  expa::TrainConfig train_cfg = expa::train_config_from_json(cfg);
  if (train_cfg.dataset_path && !fs::exists(*train_cfg.dataset_path))
    throw expa::ConfigError("dataset path does not exist: " + *train_cfg.dataset_path);
  std::string out_dir = train_cfg.out_dir.empty() ? "." : train_cfg.out_dir;
  fs::create_directories(out_dir);
  std::optional<std::string> resume_opt;
  if (!resume.empty()) resume_opt = resume;
  expa::TrainResult result = expa::train(train_cfg, resume_opt, out_dir);
  expa::write_metrics_csv(out_dir + "/metrics.csv", result.rows);
  expa::save_params(out_dir + "/policy_final.json", result.params);
  write_manifest(out_dir, "train", expa::train_config_to_json(train_cfg), train_cfg.seed);
  std::cout << "trained " << result.rows.size() << " steps, " << result.episodes
            << " episodes; final probe accuracy " << result.final_probe_accuracy << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
             const std::string& out_override, int jobs) {
  json cfg = load_config(config_path);
  expa::require_keys(cfg,
                     {"checkpoint", "dataset", "envs", "max_labels", "greedy", "seed", "max_steps",
                      "reward", "out", "task"},
                     "eval config");
  const std::string dataset = cfg.at("dataset").get<std::string>();
  if (!fs::exists(dataset)) throw expa::ConfigError("dataset path does not exist: " + dataset);
  std::string task = cfg.value("task", std::string("sorting"));
  expa::ActionCatalog catalog = catalog_for(cfg, task);
  expa::EnvRegistry registry(catalog);
  std::vector<expa::TaskInstance> tasks = expa::read_dataset_jsonl(dataset, catalog);
  if (!tasks.empty()) task = expa::task_kind_name(tasks.front().kind);
  expa::PolicyParameters params = expa::load_params(cfg.at("checkpoint").get<std::string>(), catalog);

  expa::EvalConfig ecfg;
  ecfg.greedy = cfg.value("greedy", true);
  ecfg.seed = has_seed ? seed_override : cfg.value("seed", 0ULL);
  ecfg.max_steps = cfg.value("max_steps", 96);
  ecfg.jobs = jobs;
  if (cfg.contains("reward")) {
    const auto& r = cfg.at("reward");
    expa::require_keys(r, {"lambda_cmp", "lambda_swap", "floor"}, "reward config");
    ecfg.reward.lambda_cmp = r.value("lambda_cmp", ecfg.reward.lambda_cmp);
    ecfg.reward.lambda_swap = r.value("lambda_swap", ecfg.reward.lambda_swap);
    ecfg.reward.floor = r.value("floor", ecfg.reward.floor);
  }
  expa::EvalReport report = expa::run_eval(params, tasks, ecfg, catalog, registry);
  json out = report.to_json();
  out["seed"] = ecfg.seed;
  std::string out_path = out_override.empty() ? cfg.value("out", std::string("report.json"))
                                              : out_override + "/report.json";
  if (!out_override.empty()) fs::create_directories(out_override);
  std::ofstream f(out_path);
  f << out.dump(2) << '\n';
  std::cout << out.dump(2) << '\n';
  return 0;
}

void write_stats_row(std::ostream& out, const std::string& name, int n, const expa::SortStats& s) {
  out << name << ',' << n << ',' << static_cast<double>(s.avg_comparisons) << ','
      << static_cast<double>(s.avg_swaps) << ',' << s.worst_comparisons << ',' << s.accuracy << ','
      << s.avg_comparisons.str() << ',' << s.avg_swaps.str() << '\n';
}

int cmd_sortstats(const std::string& config_path, const std::string& out_override) {
  json cfg = load_config(config_path);
  expa::require_keys(cfg,
                     {"n", "strategies", "checkpoint", "envs", "max_labels", "out", "seed"},
                     "sortstats config");
  const int n = cfg.value("n", 4);
  std::vector<std::string> strategies =
      cfg.contains("strategies")
          ? cfg.at("strategies").get<std::vector<std::string>>()
          : std::vector<std::string>{"pivot_sort4", "insertion", "optimal"};
  std::string out_dir = out_dir_from(cfg, out_override);
  std::ofstream out(out_dir + "/sort_stats.csv");
  out.precision(12);
  out << "strategy,n,avg_comparisons,avg_swaps,worst_comparisons,accuracy,"
         "avg_comparisons_exact,avg_swaps_exact\n";
  for (const std::string& name : strategies) {
    if (name == "insertion") {
      write_stats_row(out, name, n, expa::sort_stats(expa::insertion_strategy(), n));
    } else if (name == "pivot_sort4") {
      if (n != 4) throw expa::ConfigError("pivot_sort4 stats require n = 4");
      write_stats_row(out, name, n, expa::sort_stats(expa::pivot_sort4_strategy(), n));
    } else if (name == "optimal") {
      expa::DecisionTree tree = expa::optimal_comparison_tree(n, expa::TreeObjective::Average);
      write_stats_row(out, name, n, expa::sort_stats(expa::tree_strategy(tree), n));
    } else if (name == "policy") {
      expa::ActionCatalog catalog = catalog_for(cfg, "sorting");
      expa::EnvRegistry registry(catalog);
      expa::PolicyParameters params =
          expa::load_params(cfg.at("checkpoint").get<std::string>(), catalog);
      expa::NeuralPolicy policy(params);
      write_stats_row(out, name, n,
                      expa::sort_stats(expa::policy_strategy(policy, catalog, registry), n));
    } else {
      throw expa::ConfigError("unknown strategy '" + name + "'");
    }
  }
  write_manifest(out_dir, "sortstats", cfg, cfg.value("seed", 0ULL));
  std::cout << "wrote " << out_dir << "/sort_stats.csv\n";
  return 0;
}

int cmd_tree(const std::string& config_path, const std::string& out_override) {
  json cfg = load_config(config_path);
  expa::require_keys(cfg, {"source", "checkpoint", "n", "envs", "max_labels", "out", "seed"},
                     "tree config");
  const int n = cfg.value("n", 4);
  const std::string source = cfg.value("source", std::string("pivot_sort4"));
  expa::ActionCatalog catalog = catalog_for(cfg, "sorting");
  expa::EnvRegistry registry(catalog);

  expa::DecisionTree tree;
  if (source == "pivot_sort4") {
    expa::PivotSortAgent agent;
    tree = expa::extract_decision_tree(agent, n, catalog, registry);
  } else if (source == "optimal") {
    tree = expa::optimal_comparison_tree(n, expa::TreeObjective::Average);
  } else if (source == "checkpoint") {
    expa::PolicyParameters params =
        expa::load_params(cfg.at("checkpoint").get<std::string>(), catalog);
    expa::NeuralPolicy policy(params);
    tree = expa::extract_decision_tree(policy, n, catalog, registry);
  } else {
    throw expa::ConfigError("tree source must be pivot_sort4, optimal, or checkpoint");
  }
  std::string out_dir = out_dir_from(cfg, out_override);
  std::vector<int> red = expa::find_redundant_nodes(tree);
  {
    std::ofstream f(out_dir + "/tree.dot");
    f << expa::tree_to_dot(tree, red);
  }
  expa::DecisionTree pruned = expa::prune_redundant(tree);
  {
    std::ofstream f(out_dir + "/tree_pruned.dot");
    f << expa::tree_to_dot(pruned);
  }
  write_manifest(out_dir, "tree", cfg, cfg.value("seed", 0ULL));
  std::cout << "tree: " << tree.node_count() << " nodes (" << red.size()
            << " redundant); pruned: " << pruned.node_count() << " nodes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expanded-action rollout engine: generation, training, evaluation, sorting analysis"};
  app.set_version_flag("--version", expa::kVersion);
  app.require_subcommand(1);

  std::string config_path, out_override, resume;
  std::uint64_t seed_override = 0;
  bool has_seed = false;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub, bool with_resume = false) {
    sub->add_option("-c,--config", config_path, "JSON config path")->required();
    sub->add_option("--out", out_override, "output directory override");
    sub->add_option("--seed", seed_override, "seed override")->each([&](const std::string&) {
      has_seed = true;
    });
    sub->add_option("--jobs", jobs, "worker cap for evaluation");
    if (with_resume) sub->add_option("--resume", resume, "resume from a training checkpoint");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate task datasets (JSONL)");
  add_common(gen);
  CLI::App* train = app.add_subcommand("train", "run CPO/GRPO training");
  add_common(train, true);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval);
  CLI::App* sortstats = app.add_subcommand("sortstats", "comparison/swap statistics table");
  add_common(sortstats);
  CLI::App* tree = app.add_subcommand("tree", "extract and prune a sorting decision tree");
  add_common(tree);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(config_path, seed_override, has_seed, out_override);
    if (train->parsed()) return cmd_train(config_path, seed_override, has_seed, out_override, resume);
    if (eval->parsed()) return cmd_eval(config_path, seed_override, has_seed, out_override, jobs);
    if (sortstats->parsed()) return cmd_sortstats(config_path, out_override);
    if (tree->parsed()) return cmd_tree(config_path, out_override);
  } catch (const expa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime abort: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
