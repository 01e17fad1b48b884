// Copyright 2026 The odesketch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "odesketch/harness.hpp"

using namespace odesketch;
using nlohmann::json;

namespace {

const std::string kData = ODESKETCH_DATA_DIR;

// A run small enough for unit tests.
RunConfig small_run() {
  RunConfig c;
  c.system = "0.23*x0";
  c.operators = {"+", "*"};
  c.epochs = 3;
  c.batch = 20;
  c.hidden = 16;
  c.max_len = 10;
  c.initial_draw = 10;
  c.query_batch = 5;
  c.train_dt = 0.01;
  c.sketch_top_m = 3;
  c.fit_max_evals = 100;
  c.test_count = 5;
  c.test_horizon = 2.0;
  c.seed = 4;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("odesketch_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("run config validation") {
  CHECK_NOTHROW(small_run().validate());
  RunConfig c = small_run();
  c.system.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dataset = kData + "/strogatz_n1.reg";
  CHECK_THROWS_AS(c.validate(), ConfigError);  // no id
  c.system_id = "2";
  CHECK_NOTHROW(c.validate());
  c.system = "x0";
  CHECK_THROWS_AS(c.validate(), ConfigError);  // both targets

  auto bad = [](auto mutate) {
    RunConfig r = small_run();
    mutate(r);
    CHECK_THROWS_AS(r.validate(), ConfigError);
  };
  bad([](RunConfig& r) { r.alpha = 1.0; });
  bad([](RunConfig& r) { r.sigma2 = -1.0; });
  bad([](RunConfig& r) { r.optimizer = "rmsprop"; });
  bad([](RunConfig& r) { r.strategy = "greedy"; });
  bad([](RunConfig& r) { r.operators = {"+", "tan"}; });
  bad([](RunConfig& r) { r.fit_dt = 0.015; });
  bad([](RunConfig& r) { r.train_horizon = 0.0; });
  bad([](RunConfig& r) { r.sketch.regions = 0; });
  bad([](RunConfig& r) { r.batch = 0; });
}

TEST_CASE("config json round-trips and is strict") {
  RunConfig c = small_run();
  c.domain = Domain::cube(1, 0.5, 2.0);
  c.strategy = "qbc";
  c.sigma2 = 0.01;
  const std::string text = run_config_to_json(c);
  const RunConfig back = run_config_from_json(text);
  CHECK(run_config_to_json(back) == text);
  CHECK(back.domain == c.domain);
  CHECK(back.operators == c.operators);

  const RunConfig partial = run_config_from_json(R"({"system": "x0", "epochs": 7})");
  CHECK(partial.epochs == 7);
  CHECK(partial.batch == RunConfig{}.batch);
  CHECK_THROWS_AS(run_config_from_json(R"({"system": "x0", "epoch": 7})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"epochs": "many"})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"domain": [[0, 1, 2]]})"), ConfigError);
}

TEST_CASE("targets resolve from text or registry") {
  RunConfig c = small_run();
  Target t = resolve_target(c);
  CHECK(t.label == "0.23*x0");
  CHECK(t.domain == Domain::cube(1));

  c.system.clear();
  c.dataset = kData + "/strogatz_n1.reg";
  c.system_id = "6";
  t = resolve_target(c);
  CHECK(t.label == "strogatz_n1.reg#6");
  CHECK(t.domain == Domain::cube(1, 0.1, 5.0));

  c.domain = Domain::cube(1, 1.0, 2.0);
  CHECK(resolve_target(c).domain == *c.domain);
  c.domain = Domain::cube(2);
  CHECK_THROWS_AS(resolve_target(c), ConfigError);
  c.domain.reset();
  c.system_id = "999";
  CHECK_THROWS_AS(resolve_target(c), ConfigError);
}

TEST_CASE("the test oracle never drops points and has its own stream") {
  RunConfig c = small_run();
  c.alpha = 0.3;
  c.sigma2 = 0.02;
  const OracleConfig oc = test_oracle_config(c, resolve_target(c));
  CHECK(oc.alpha == 0.0);
  CHECK(oc.sigma2 == 0.02);
  CHECK(oc.seed != c.seed);
}

TEST_CASE("hall of fame ordering") {
  HallOfFame h(3);
  auto entry = [](const char* text, double s) { return HofEntry{parse_system("x0"), text, s, 0}; };
  h.offer(entry("a", 0.5));
  h.offer(entry("b", 0.1));
  h.offer(entry("c", 0.5));
  h.offer(entry("nan", std::nan("")));
  h.offer(entry("inf", kInfiniteNmse));
  REQUIRE(h.entries().size() == 3);
  CHECK(h.entries()[0].text == "b");
  CHECK(h.entries()[1].text == "a");  // ties keep arrival order
  CHECK(h.entries()[2].text == "c");
  h.offer(entry("a", 0.9));  // worse repeat is ignored
  CHECK(h.entries()[1].train_nmse == 0.5);
  h.offer(entry("c", 0.05));  // better repeat moves up
  CHECK(h.entries()[0].text == "c");
  CHECK(h.entries().size() == 3);
  h.offer(entry("d", 0.01));
  CHECK(h.entries().size() == 3);
  CHECK(h.entries()[0].text == "d");
  CHECK(h.entries()[2].text == "b");
}

TEST_CASE("hall of fame best score never gets worse") {
  HallOfFame h(5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double best = kInfiniteNmse;
  for (int i = 0; i < 500; ++i) {
    h.offer(HofEntry{parse_system("x0"), std::to_string(i % 37), u(rng), 0});
    REQUIRE_FALSE(h.empty());
    CHECK(h.entries().front().train_nmse <= best);
    best = h.entries().front().train_nmse;
    CHECK(h.entries().size() <= 5);
    for (std::size_t k = 1; k < h.entries().size(); ++k) {
      CHECK(h.entries()[k - 1].train_nmse <= h.entries()[k].train_nmse);
    }
  }
}

TEST_CASE("zero epochs discover nothing") {
  RunConfig c = small_run();
  c.epochs = 0;
  const RunOutputs out = run_discovery(c);
  CHECK_FALSE(out.report.discovered);
  CHECK(out.report.hall_of_fame.empty());
  CHECK(out.report.epochs.empty());
  const json j = json::parse(report_to_json(out.report));
  CHECK(j["discovered"] == false);
}

TEST_CASE("a small discovery run") {
  RunConfig c = small_run();
  std::ostringstream log;
  const RunOutputs out = run_discovery(c, &log);
  const RunReport& r = out.report;
  CHECK(r.discovered);
  CHECK(r.target == "0.23*x0");
  REQUIRE(r.epochs.size() == 3);
  CHECK(r.data_size == r.oracle_queries);
  CHECK(r.oracle_queries == 10 + 3 * 5);
  CHECK(r.epochs.back().data_size == r.data_size);
  for (const auto& e : r.epochs) {
    CHECK(e.region.has_value());
    CHECK(e.region_scores.size() == c.sketch.regions);
    CHECK(e.best_reward >= e.mean_reward);
  }
  CHECK(r.test.per_trajectory.size() == 5);
  CHECK(r.plot_truth.size() == 3);
  CHECK(r.grammar_fingerprint == build_grammar(c.operators, 1).fingerprint());
  REQUIRE(out.policy.has_value());
  CHECK(out.policy->vocab() == build_grammar(c.operators, 1).size());
  CHECK(log.str().find("event=epoch epoch=0") != std::string::npos);
  CHECK(log.str().find("event=done") != std::string::npos);

  // The reported best system parses back and reproduces its test score.
  const TestResult again = evaluate_on_test(parse_rendered(r.best_system), test_oracle_config(c, resolve_target(c)),
                                            TestConfig{c.test_count, c.test_horizon, c.oracle_dt, c.test_noise});
  CHECK(again.mean_nmse == doctest::Approx(r.test.mean_nmse).epsilon(1e-9));

  const json j = json::parse(report_to_json(r));
  for (const char* key : {"target", "discovered", "best_system", "train_nmse", "test", "oracle_queries",
                          "dropped_points", "data_size", "grammar_fingerprint", "epochs", "hall_of_fame", "timing"}) {
    CAPTURE(key);
    CHECK(j.contains(key));
  }
  CHECK(j["epochs"].size() == 3);
  CHECK_FALSE(json::parse(report_to_json(r, false)).contains("timing"));
}

TEST_CASE("identical configs give identical reports") {
  RunConfig c = small_run();
  c.alpha = 0.2;
  c.sigma2 = 0.01;
  const std::string a = report_to_json(run_discovery(c).report, false);
  const std::string b = report_to_json(run_discovery(c).report, false);
  CHECK(a == b);
  c.seed = 5;
  CHECK(report_to_json(run_discovery(c).report, false) != a);
}

TEST_CASE("test scores of the truth and of a diverging candidate") {
  OracleConfig truth;
  truth.system = parse_system("x1 ; -0.9*sin(x0)");
  truth.domain = Domain::cube(2);
  truth.seed = 2;
  const TestConfig tc{10, 2.0, 0.001, false};
  const TestResult exact = evaluate_on_test(truth.system, truth, tc);
  CHECK(exact.mean_nmse == 0.0);
  CHECK(exact.r2 == 1.0);
  const TestResult blow = evaluate_on_test(parse_system("x0^2 + 100 ; x1^2 + 100"), truth, tc);
  CHECK(blow.mean_nmse == kInfiniteNmse);
  CHECK(blow.median_nmse == kInfiniteNmse);
  CHECK(blow.r2_display == 0.0);
}

TEST_CASE("an approximate pendulum fails away from where it was fitted") {
  OracleConfig truth;
  truth.system = parse_system("x1 ; -0.9*sin(x0)");
  truth.domain = Domain::cube(2);
  const OdeSystem cand = parse_rendered("x1' = 1.04*x2 ; x2' = -0.02 - 0.77*x1");
  const TestConfig tc{1, 10.0, 0.001, false};
  const std::vector<std::vector<double>> near = {{0.0, 1.0}}, far = {{4.0, -1.0}};
  const double good = evaluate_on_starts(cand, truth, near, tc).mean_nmse;
  const double bad = evaluate_on_starts(cand, truth, far, tc).mean_nmse;
  CHECK(bad > 10.0 * good);
}

TEST_CASE("ranking by nmse") {
  CHECK(rank_by_nmse(std::vector<double>{0.3, std::nan(""), 0.1, 0.3}) == std::vector<int>{1, 3, 0, 2});
  CHECK(rank_by_nmse(std::vector<double>{kInfiniteNmse, 0.0}) == std::vector<int>{1, 0});
}

TEST_CASE("candidate scores on shared data") {
  OracleConfig oc;
  oc.system = parse_system("-0.5*x0");
  oc.domain = Domain::cube(1);
  Oracle o(oc);
  const auto data = o.sample_training_batch(5, 1.0, 0.01);
  const std::vector<OdeSystem> cands = {parse_system("-0.4*x0"), parse_system("-0.5*x0"), parse_system("-0.45*x0")};
  const auto s = score_candidates(cands, data, 0.01);
  CHECK(s[1] < 1e-12);
  CHECK(rank_by_nmse(s) == std::vector<int>{2, 0, 1});
  CHECK(score_candidates(cands, std::vector<Trajectory>{}, 0.01)[0] == kInfiniteNmse);
}

TEST_CASE("strategy comparison bookkeeping") {
  CompareConfig cc;
  cc.truth = parse_system("-0.5*x0");
  cc.domain = Domain::cube(1);
  cc.budget = 6;
  cc.rounds = 3;
  cc.reference_count = 50;
  cc.strategy.pool_size = 64;
  const std::vector<OdeSystem> cands = {parse_system("-0.4*x0"), parse_system("-0.5*x0"), parse_system("-0.7*x0"),
                                        parse_system("-0.55*x0")};
  const std::vector<StrategyKind> kinds = {StrategyKind::Apps, StrategyKind::Qbc, StrategyKind::Coreset,
                                           StrategyKind::Random};
  const ComparisonTable t = compare_strategies(cc, cands, kinds);
  CHECK(t.reference_ranking == std::vector<int>{2, 0, 3, 1});
  REQUIRE(t.rows.size() == 4);
  for (const auto& r : t.rows) {
    CHECK(r.kendall >= 0.0);
    CHECK(r.kendall <= 1.0);
    CHECK(r.ranking.size() == 4);
  }
  CHECK(t.rows[3].peak_bytes < t.rows[2].peak_bytes);  // random keeps no pool
  std::ostringstream out;
  write_comparison(out, t);
  CHECK(out.str().rfind("strategy\tkendall\twall_seconds\tpeak_bytes\n", 0) == 0);
  CHECK(out.str().find("coreset\t") != std::string::npos);
  CHECK_THROWS_AS(compare_strategies(cc, std::span(cands).first(1), kinds), UsageError);
  cc.budget = 0;
  CHECK_THROWS_AS(compare_strategies(cc, cands, kinds), UsageError);
}

TEST_CASE("noiseless data ranks like the reference") {
  // With the full reference set every strategy's ranking is the reference one.
  OracleConfig oc;
  oc.system = parse_system("-0.5*x0");
  oc.domain = Domain::cube(1);
  Oracle o(oc);
  const auto data = o.sample_training_batch(20, 1.0, 0.01);
  const std::vector<OdeSystem> cands = {parse_system("-0.4*x0"), parse_system("-0.5*x0"), parse_system("-0.7*x0")};
  const auto ranking = rank_by_nmse(score_candidates(cands, data, 0.01));
  CHECK(kendall_distance(ranking, ranking) == 0.0);
}

TEST_CASE("plot data files") {
  const RunOutputs out = run_discovery(small_run());
  const auto dir = scratch_dir("plots");
  emit_plot_data(out.report, dir);
  const std::string rewards = slurp(dir / "rewards.csv");
  CHECK(rewards.rfind("epoch,mean_reward,best_reward,best_train_nmse,oracle_queries,data_size\n", 0) == 0);
  CHECK(std::count(rewards.begin(), rewards.end(), '\n') == 4);
  const std::string sketch = slurp(dir / "sketch_scores.csv");
  CHECK(sketch.rfind("epoch,region,score,selected\n", 0) == 0);
  CHECK(std::count(sketch.begin(), sketch.end(), '\n') == 1 + 3 * 10);

  std::ifstream in(dir / "trajectories.csv");
  const auto back = read_plot_trajectories(in);
  REQUIRE(back.size() == 6);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(back[2 * s].start == s);
    CHECK(back[2 * s].source == "truth");
    CHECK(back[2 * s + 1].source == "predicted");
    CHECK(back[2 * s].trajectory.initial == out.report.plot_truth[s].initial);
    CHECK(back[2 * s].trajectory.grid == out.report.plot_truth[s].grid);
    CHECK(back[2 * s].trajectory.states == out.report.plot_truth[s].states);
    CHECK(back[2 * s + 1].trajectory.states == out.report.plot_pred[s].states);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("an empty report gives header-only plot files") {
  const auto dir = scratch_dir("empty");
  emit_plot_data(RunReport{}, dir);
  CHECK(slurp(dir / "rewards.csv") == "epoch,mean_reward,best_reward,best_train_nmse,oracle_queries,data_size\n");
  CHECK(slurp(dir / "trajectories.csv") == "start,source,t\n");
  CHECK(slurp(dir / "sketch_scores.csv") == "epoch,region,score,selected\n");
  std::istringstream traj(slurp(dir / "trajectories.csv"));
  CHECK(read_plot_trajectories(traj).empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("plot data errors") {
  const auto file = scratch_dir("blocker");
  std::ofstream(file) << "not a directory";
  CHECK_THROWS_AS(emit_plot_data(RunReport{}, file / "sub"), IoError);
  std::filesystem::remove(file);
  std::istringstream no_header("1,2,3\n");
  CHECK_THROWS_AS(read_plot_trajectories(no_header), ParseError);
}
