// Command-line front end: train, evaluate, compare, sweep.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "syncsim/errors.hpp"
#include "syncsim/harness.hpp"

namespace {

using namespace syncsim;

void apply_overrides(ExperimentSpec& spec, const std::optional<std::uint64_t>& seed,
                     const std::optional<std::string>& out, const std::optional<int>& threads) {
  if (seed) spec.seeds = {*seed};
  if (out) spec.output_dir = *out;
  if (threads) spec.threads = *threads;
  spec.validate();
}

int cmd_train(const std::string& config, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& out, const std::optional<int>& threads) {
  ConfigDocument doc = load_config(config);
  apply_overrides(doc.experiment, seed, out, threads);
  const ExperimentSpec& spec = doc.experiment;
  const ExperimentResult result = run_experiment(spec);
  write_experiment(spec, result, spec.output_dir);
  int failed = 0;
  for (const auto& cell : result.cells) {
    if (!cell.failed) continue;
    ++failed;
    std::cerr << fmt::format("cell {} seed {} failed: {}\n", cell.policy, cell.seed, cell.error);
  }
  std::cout << fmt::format("wrote {} cells ({} failed) to {}\n", result.cells.size(), failed,
                           spec.output_dir);
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& config,
                 const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out) {
  ConfigDocument doc = load_config(config);
  apply_overrides(doc.experiment, seed, out, std::nullopt);
  ExperimentSpec& spec = doc.experiment;
  std::ifstream in(checkpoint);
  if (!in) throw ConfigError("cannot open checkpoint " + checkpoint);
  nlohmann::json ck;
  try {
    in >> ck;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", checkpoint, e.what()));
  }
  if (ck.value("schema", "") != "syncsim.policy.v1")
    throw ConfigError(checkpoint + " is not a syncsim.policy.v1 checkpoint");
  const std::string name = ck.value("policy", "");
  const ActionSpace actions(spec.env.network.n_domains, spec.env.sb);
  ExperimentResult result;
  for (auto s : spec.seeds) {
    auto policy = make_policy(name, actions, spec.env.max_staleness,
                              ck.contains("config") ? ck["config"] : nlohmann::json(), s);
    policy->load_checkpoint(ck);
    result.cells.push_back(evaluate_cell(spec, *policy, s));
  }
  spec.policies = {{name, nullptr}};
  spec.save_checkpoints = false;
  write_experiment(spec, result, spec.output_dir);
  std::cout << fmt::format("evaluated {} on {} seeds into {}\n", name, spec.seeds.size(),
                           spec.output_dir);
  return 0;
}

int cmd_compare(const std::string& dir, const std::string& reference) {
  const auto report = compare_dir(dir, reference);
  std::ofstream(std::filesystem::path(dir) / "report.json") << report.dump(2) << '\n';
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const std::string& config, const std::optional<std::string>& out,
              const std::optional<int>& threads) {
  ConfigDocument doc = load_config(config);
  apply_overrides(doc.experiment, std::nullopt, out, threads);
  const auto rows = run_sweep(doc, doc.experiment.output_dir);
  std::cout << fmt::format("wrote {} sweep rows to {}/sweep.csv\n", rows.size(),
                           doc.experiment.output_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain SDN controller synchronization simulator"};
  app.require_subcommand(1);

  std::string config, checkpoint, in_dir, reference = "d2q";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;

  auto* train = app.add_subcommand("train", "Train and evaluate every configured policy");
  train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Run a single seed instead of the configured list");
  train->add_option("--out", out, "Output directory");
  train->add_option("--threads", threads, "Cells run in parallel")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved policy checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "Policy checkpoint (JSON)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--seed", seed, "Run a single seed instead of the configured list");
  evaluate->add_option("--out", out, "Output directory");

  auto* cmp = app.add_subcommand("compare", "Percentage improvements from a metrics directory");
  cmp->add_option("--in", in_dir, "Directory holding metrics.csv")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--reference", reference, "Policy to compare against the others");

  auto* sweep = app.add_subcommand("sweep", "Run the (N, SB, deadline mix) grid of a config");
  sweep->add_option("--config", config, "Sweep config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--threads", threads, "Cells run in parallel")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config, seed, out, threads);
    if (evaluate->parsed()) return cmd_evaluate(checkpoint, config, seed, out);
    if (cmp->parsed()) return cmd_compare(in_dir, reference);
    if (sweep->parsed()) return cmd_sweep(config, out, threads);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const MissingPolicyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
