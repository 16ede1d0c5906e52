#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "syncsim/errors.hpp"
#include "syncsim/harness.hpp"

using namespace syncsim;
namespace fs = std::filesystem;

namespace {

ExperimentSpec tiny_spec(std::vector<std::string> policies) {
  ExperimentSpec s;
  s.env.network.n_domains = 4;
  s.env.network.devices_min = 3;
  s.env.network.devices_max = 4;
  s.env.sb = 2;
  s.env.horizon = 15;
  for (auto& p : policies) s.policies.push_back({p, nullptr});
  s.episodes = 2;
  s.eval_episodes = 3;
  s.eval_horizon = 20;
  s.seeds = {1, 2};
  return s;
}

MetricsRow eval_row(const std::string& policy, double cost, long compliant, long correct) {
  MetricsRow r;
  r.policy = policy;
  r.phase = "eval";
  r.accumulated_cost = cost;
  r.latency_compliant_count = compliant;
  r.correct_allocation_count = correct;
  return r;
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream out;
  write_metrics_csv(out, r.rows());
  return out.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("syncsim_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("metrics header is pinned") {
  std::ifstream golden(SYNCSIM_TEST_DATA_DIR "/metrics_header.golden");
  std::string line;
  REQUIRE(std::getline(golden, line));
  CHECK(line == kMetricsHeader);
  std::ostringstream out;
  write_metrics_csv(out, {});
  CHECK(out.str() == line + "\n");
}

TEST_CASE("metrics rows round trip through CSV") {
  MetricsRow r = eval_row("d2q", 1234.5, 10, 7);
  r.seed = 42;
  r.episode = 3;
  r.task_count = 12;
  r.infeasible_count = 1;
  r.mean_reward = -2.46913;
  std::stringstream io;
  write_metrics_csv(io, {r, r});
  const auto back = read_metrics_csv(io);
  REQUIRE(back.size() == 2);
  CHECK(format_metrics_row(back[1]) == format_metrics_row(r));

  std::istringstream bad_header("policy,seed\n");
  CHECK_THROWS_AS(read_metrics_csv(bad_header), ConfigError);
  std::istringstream bad_row(std::string(kMetricsHeader) + "\nd2q,1,eval\n");
  CHECK_THROWS_AS(read_metrics_csv(bad_row), ConfigError);
}

TEST_CASE("compare arithmetic") {
  auto report = compare({eval_row("random", 200, 100, 50), eval_row("d2q", 110, 120, 75)});
  REQUIRE(report["improvements"].size() == 1);
  const auto& imp = report["improvements"][0];
  CHECK(imp["baseline"] == "random");
  CHECK(imp["cost_reduction_pct"].get<double>() == doctest::Approx(45.0));
  CHECK(imp["compliant_paths_gain_pct"].get<double>() == doctest::Approx(20.0));
  CHECK(imp["correct_allocations_gain_pct"].get<double>() == doctest::Approx(50.0));

  report = compare({eval_row("random", 200, 100, 50), eval_row("d2q", 200, 100, 50)});
  CHECK(report["improvements"][0]["cost_reduction_pct"].get<double>() == 0.0);
  CHECK(report["improvements"][0]["compliant_paths_gain_pct"].get<double>() == 0.0);
  CHECK(report["improvements"][0]["correct_allocations_gain_pct"].get<double>() == 0.0);

  CHECK_THROWS_AS(compare({eval_row("d2q", 1, 1, 1)}), MissingPolicyError);
  CHECK_THROWS_AS(compare({eval_row("random", 1, 1, 1), eval_row("ppo", 1, 1, 1)}), MissingPolicyError);
}

TEST_CASE("evaluation-only run") {
  ExperimentSpec spec = tiny_spec({"random"});
  spec.episodes = 0;
  const auto result = run_experiment(spec);
  const auto rows = result.rows();
  CHECK(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.phase == "eval");
    CHECK(r.correct_allocation_count <= r.latency_compliant_count);
    CHECK(r.latency_compliant_count <= r.task_count);
    CHECK(r.accumulated_cost >= 0.0);
  }
}

TEST_CASE("runs are byte-identical per seed and thread count") {
  ExperimentSpec spec = tiny_spec({"d2q", "ppo", "random", "round_robin"});
  spec.policies[0].config = {{"batch_size", 8}, {"hidden", {16}}};
  const auto a = csv_of(run_experiment(spec));
  const auto b = csv_of(run_experiment(spec));
  spec.threads = 3;
  const auto c = csv_of(run_experiment(spec));
  CHECK(a == b);
  CHECK(a == c);
  // 4 policies x 2 seeds x (2 train + 3 eval) rows plus the header.
  CHECK(std::count(a.begin(), a.end(), '\n') == 4 * 2 * 5 + 1);
}

TEST_CASE("written artifacts") {
  ExperimentSpec spec = tiny_spec({"d2q", "random"});
  spec.policies[0].config = {{"batch_size", 8}, {"hidden", {8}}};
  spec.debug_dump = true;
  const auto dir = scratch("artifacts");
  const auto result = run_experiment(spec);
  write_experiment(spec, result, dir);
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "checkpoints" / "d2q_seed1.json"));
  CHECK(fs::exists(dir / "debug_random_seed2.jsonl"));
  std::ifstream in(dir / "summary.json");
  const auto summary = nlohmann::json::parse(in);
  CHECK(summary["policies"].size() == 2);
  CHECK(summary["policies"][1]["accumulated_cost"]["n"] == 6);
  const auto report = compare_dir(dir);
  CHECK(report["improvements"][0]["baseline"] == "random");
  fs::remove_all(dir);
}

TEST_CASE("a diverging cell does not disturb the others") {
  ExperimentSpec spec = tiny_spec({"d2q", "random"});
  spec.policies[0].config = {{"batch_size", 4}, {"hidden", {8}}, {"learning_rate", 1e300}, {"grad_clip", 0.0}};
  const auto result = run_experiment(spec);
  int failed = 0;
  for (const auto& cell : result.cells) {
    if (cell.policy == "d2q") {
      failed += cell.failed;
      if (cell.failed) CHECK(cell.error.find("finite") != std::string::npos);
    } else {
      CHECK_FALSE(cell.failed);
    }
  }
  CHECK(failed == 2);
  ExperimentSpec clean = tiny_spec({"random"});
  const auto expected = csv_of(run_experiment(clean));
  ExperimentResult only_random;
  for (const auto& c : result.cells)
    if (c.policy == "random") only_random.cells.push_back(c);
  CHECK(csv_of(only_random) == expected);
}

TEST_CASE("spec validation") {
  ExperimentSpec spec = tiny_spec({});
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = tiny_spec({"random", "random"});
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = tiny_spec({"random"});
  spec.seeds = {1, 1};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = tiny_spec({"bogus"});
  CHECK_THROWS_AS(run_experiment(spec), ConfigError);
}

TEST_CASE("config documents") {
  const auto doc = parse_config(nlohmann::json::parse(R"({
    "env": {"sb": 2, "horizon": 50, "view_latency_aware": true,
            "network": {"n_domains": 5, "devices_per_domain": [4, 6], "domain_activity": [1, 1, 0.5, 0, 0]}},
    "policies": ["random", {"name": "d2q", "config": {"gamma": 0.5}}],
    "experiment": {"episodes": 3, "seeds": [7]},
    "sweep": {"sb": [1, 2, 3, 4, 5]}
  })"));
  const auto& e = doc.experiment;
  CHECK(e.env.sb == 2);
  CHECK(e.env.view_latency_aware);
  CHECK(e.env.network.devices_min == 4);
  CHECK(e.env.network.devices_max == 6);
  CHECK(e.env.network.domain_activity[2] == 0.5);
  CHECK(e.policies[1].config["gamma"] == 0.5);
  CHECK(e.eval_episodes == 25);
  CHECK(e.eval_horizon == 1000);
  REQUIRE(doc.sweep.has_value());
  CHECK(doc.sweep->n_domains == std::vector<int>{5});

  const auto round = env_config_from_json(nlohmann::json::parse(env_config_to_json(e.env).dump()));
  CHECK(env_config_to_json(round) == env_config_to_json(e.env));

  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"experimnt": {}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"env": {"sb": "three"}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"env": {"sb": 9}, "policies": ["random"]})")), ConfigError);
  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(
                      R"({"policies": [{"name": "ppo", "config": {"clip": 0.1}}]})")),
                  ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("sweep planning") {
  ExperimentSpec base = tiny_spec({"random"});
  SweepSpec grid{{5, 7}, {2, 3}, {0.5}};
  auto plan = plan_sweep(grid, base);
  CHECK(plan.cells.size() == 4);
  CHECK(plan.rejected.empty());

  grid = {{5, 6, 7, 8, 9, 10, 11, 12}, {2, 3, 4}, {0.0, 1.0}};
  plan = plan_sweep(grid, base);
  CHECK(plan.rejected.empty());
  CHECK(plan.cells.size() == 8 * 3 * 2);
  grid = {{9, 10, 11, 12}, {5, 6, 7, 8}, {0.5}};
  CHECK(plan_sweep(grid, base).rejected.empty());

  grid = {{5}, {4, 5, 6}, {0.5}};
  plan = plan_sweep(grid, base);
  CHECK(plan.cells.size() == 1);
  CHECK(plan.rejected.size() == 2);
  CHECK(plan.rejected[0].first.sb == 5);
}

TEST_CASE("sweep writes one report per cell") {
  ConfigDocument doc;
  doc.experiment = tiny_spec({"random", "round_robin"});
  doc.experiment.episodes = 0;
  doc.experiment.eval_episodes = 1;
  doc.experiment.seeds = {1};
  doc.sweep = SweepSpec{{4, 5}, {2, 3, 4}, {0.5}};
  const auto dir = scratch("sweep");
  const auto lines = run_sweep(doc, dir);
  int reports = 0;
  for (const auto& entry : fs::directory_iterator(dir))
    reports += fs::exists(entry.path() / "report.json");
  CHECK(reports == 5);
  // 5 valid cells x 2 policies + the rejected (N=4, SB=4) cell.
  CHECK(lines.size() == 11);
  std::ifstream in(dir / "sweep.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == kSweepHeader);
  fs::remove_all(dir);
}
