#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syncsim/agents.hpp"
#include "syncsim/environment.hpp"

namespace syncsim {

struct PolicySpec {
  std::string name;
  nlohmann::json config;  // null or object of overrides
};

struct ExperimentSpec {
  EnvConfig env;  // env.horizon is the training horizon
  std::vector<PolicySpec> policies;
  int episodes = 0;  // training episodes M
  int eval_episodes = 25;
  int eval_horizon = 1000;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = "out";
  int threads = 1;
  bool debug_dump = false;
  bool save_checkpoints = true;

  // Throws ConfigError.
  void validate() const;
};

struct SweepSpec {
  std::vector<int> n_domains;
  std::vector<int> sb;
  std::vector<double> deadline_mix;
};

struct ConfigDocument {
  ExperimentSpec experiment;
  std::optional<SweepSpec> sweep;
};

// Throws ConfigError on unknown keys, wrong types or invalid values.
ConfigDocument parse_config(const nlohmann::json& doc);
ConfigDocument load_config(const std::filesystem::path& path);
NetworkConfig network_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json network_config_to_json(const NetworkConfig& cfg);
EnvConfig env_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json env_config_to_json(const EnvConfig& cfg);

// One row of metrics.csv.
struct MetricsRow {
  std::string policy;
  std::uint64_t seed = 0;
  std::string phase;  // "train" or "eval"
  int episode = 0;
  double accumulated_cost = 0.0;  // -(sum of rewards over the episode)
  long latency_compliant_count = 0;
  long correct_allocation_count = 0;
  long task_count = 0;
  long infeasible_count = 0;
  double mean_reward = 0.0;  // per period
};

inline constexpr const char* kMetricsSchema = "syncsim.metrics.v1";
inline constexpr const char* kMetricsHeader =
    "policy,seed,phase,episode,accumulated_cost,latency_compliant_count,"
    "correct_allocation_count,task_count,infeasible_count,mean_reward";

std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
// Throws ConfigError on a header mismatch or malformed line.
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

// Runs one episode; every step is fed back to the policy when `learn`.
MetricsRow run_episode(Environment& env, SynchronizerPolicy& policy, int horizon, bool explore,
                       bool learn, std::ostream* debug = nullptr);

struct CellResult {
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  bool failed = false;
  std::string error;
  nlohmann::ordered_json checkpoint;
  std::string debug_jsonl;
};

// Trains for spec.episodes then evaluates greedily on the same evolving
// network. Divergence and other runtime errors mark the cell failed.
CellResult run_cell(const ExperimentSpec& spec, const PolicySpec& policy, std::uint64_t seed);
// Evaluation only, for an already constructed (e.g. checkpoint-loaded) policy.
CellResult evaluate_cell(const ExperimentSpec& spec, SynchronizerPolicy& policy, std::uint64_t seed);

struct ExperimentResult {
  std::vector<CellResult> cells;  // policy-major, seed-minor order

  std::vector<MetricsRow> rows() const;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);
// Writes metrics.csv, summary.json, checkpoints/ and debug_*.jsonl into dir.
void write_experiment(const ExperimentSpec& spec, const ExperimentResult& result,
                      const std::filesystem::path& dir);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  long n = 0;
};
Stat describe(const std::vector<double>& values);

// Evaluation-phase statistics per policy plus failures.
nlohmann::ordered_json summarize(const ExperimentSpec& spec, const ExperimentResult& result);

// Percentage improvements of `reference` over every other policy, computed
// from evaluation rows. Throws MissingPolicyError.
nlohmann::ordered_json compare(const std::vector<MetricsRow>& rows,
                               const std::string& reference = "d2q");
nlohmann::ordered_json compare_dir(const std::filesystem::path& dir,
                                   const std::string& reference = "d2q");

struct SweepCell {
  int n_domains = 0;
  int sb = 0;
  double deadline_mix = 0.0;
};

struct SweepPlan {
  std::vector<SweepCell> cells;
  std::vector<std::pair<SweepCell, std::string>> rejected;
};

SweepPlan plan_sweep(const SweepSpec& sweep, const ExperimentSpec& base);
ExperimentSpec cell_spec(const ExperimentSpec& base, const SweepCell& cell);

inline constexpr const char* kSweepHeader =
    "n_domains,sb,deadline_mix,policy,status,eval_episodes,accumulated_cost_mean,"
    "accumulated_cost_std,latency_compliant_mean,correct_allocation_mean,task_count_mean,"
    "infeasible_mean,failed_cells";

// Runs every valid cell into dir/cell_N{n}_SB{sb}_mix{mix}/ and writes the
// long-format dir/sweep.csv. Returns the rows of sweep.csv.
std::vector<std::string> run_sweep(const ConfigDocument& doc, const std::filesystem::path& dir);

}  // namespace syncsim
