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

// odesketch command-line front end.
//
// Exit codes: 0 success, 1 config or I/O failure, 2 nothing discovered.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "odesketch/harness.hpp"

namespace {

using namespace odesketch;

constexpr int kExitFailure = 1;
constexpr int kExitNoDiscovery = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flags shared by discover and evaluate. Optionals so that only flags the
// user gave override the config file.
struct RunFlags {
  std::string config_path;
  std::optional<std::string> dataset, id, system, strategy, optimizer;
  std::optional<std::vector<std::string>> operators;
  std::optional<std::size_t> epochs, batch, max_len, hidden, regions, sketch_points, sketch_top_m, query_batch,
      fit_restarts, fit_max_evals, fit_parallelism, test_count;
  std::optional<double> lr, region_width, sketch_horizon, sigma2, alpha;
  std::optional<std::uint64_t> seed;
  bool test_noise = false;

  void attach(CLI::App* app, bool full) {
    app->add_option("--config", config_path, "JSON config file mirroring RunConfig");
    app->add_option("--dataset", dataset, "registry file of the ground truth");
    app->add_option("--id", id, "record id inside --dataset");
    app->add_option("--system", system, "inline ground truth, x0-based names, ';' between equations");
    app->add_option("--sigma2", sigma2, "multiplicative noise variance");
    app->add_option("--alpha", alpha, "per-point drop probability");
    app->add_option("--seed", seed);
    app->add_flag("--test-noise", test_noise, "apply oracle noise to the test set as well");
    app->add_option("--test-count", test_count, "held-out test trajectories");
    if (!full) return;
    app->add_option("--operators", operators, "grammar operators, e.g. + - * / sin cos")->delimiter(',');
    app->add_option("--epochs", epochs);
    app->add_option("--batch", batch, "sequences sampled per epoch");
    app->add_option("--lr", lr);
    app->add_option("--optimizer", optimizer, "adam or sgd");
    app->add_option("--max-len", max_len);
    app->add_option("--hidden", hidden, "GRU width");
    app->add_option("--strategy", strategy, "apps, qbc, coreset or random");
    app->add_option("--regions", regions);
    app->add_option("--region-width", region_width);
    app->add_option("--sketch-points", sketch_points);
    app->add_option("--sketch-horizon", sketch_horizon);
    app->add_option("--sketch-top-m", sketch_top_m);
    app->add_option("--query-batch", query_batch);
    app->add_option("--fit-restarts", fit_restarts);
    app->add_option("--fit-max-evals", fit_max_evals);
    app->add_option("--fit-parallelism", fit_parallelism);
  }

  RunConfig build() const {
    RunConfig c = config_path.empty() ? RunConfig{} : run_config_from_json(read_file(config_path));
    if (dataset || id || system) {
      c.dataset = dataset.value_or("");
      c.system_id = id.value_or("");
      c.system = system.value_or("");
    }
    auto set = [](auto& field, const auto& flag) {
      if (flag) field = *flag;
    };
    set(c.operators, operators);
    set(c.epochs, epochs);
    set(c.batch, batch);
    set(c.lr, lr);
    set(c.optimizer, optimizer);
    set(c.max_len, max_len);
    set(c.hidden, hidden);
    set(c.strategy, strategy);
    set(c.sketch.regions, regions);
    set(c.sketch.relative_width, region_width);
    set(c.sketch.points, sketch_points);
    set(c.sketch.horizon, sketch_horizon);
    set(c.sketch_top_m, sketch_top_m);
    set(c.query_batch, query_batch);
    set(c.fit_restarts, fit_restarts);
    set(c.fit_max_evals, fit_max_evals);
    set(c.fit_parallelism, fit_parallelism);
    set(c.sigma2, sigma2);
    set(c.alpha, alpha);
    set(c.test_count, test_count);
    set(c.seed, seed);
    if (test_noise) c.test_noise = true;
    return c;
  }
};

int run_discover(const RunFlags& flags, const std::string& out_dir) {
  const RunConfig config = flags.build();
  RunOutputs outputs = run_discovery(config, &std::cerr);
  const std::string report = report_to_json(outputs.report);
  std::cout << report << "\n";
  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    emit_plot_data(outputs.report, dir);
    std::ofstream(dir / "report.json") << report << "\n";
    std::ofstream(dir / "config.json") << run_config_to_json(config) << "\n";
    if (outputs.policy) {
      std::ofstream ckpt(dir / "policy.txt");
      save_policy(ckpt, *outputs.policy, outputs.report.grammar_fingerprint);
      if (!ckpt) throw IoError("cannot write " + (dir / "policy.txt").string());
    }
    std::cerr << "event=wrote dir=" << dir.string() << "\n";
  }
  return outputs.report.discovered ? 0 : kExitNoDiscovery;
}

int run_evaluate(const RunFlags& flags, const std::string& candidate) {
  const RunConfig config = flags.build();
  const Target target = resolve_target(config);
  const OdeSystem system = parse_rendered(candidate);
  if (system.dims() != target.system.dims()) throw ConfigError("candidate dimension does not match the truth");
  TestConfig tc{config.test_count, config.test_horizon, config.oracle_dt, config.test_noise};
  const TestResult r = evaluate_on_test(system, test_oracle_config(config, target), tc);
  std::cout << "mean_nmse=" << format_double(r.mean_nmse) << " median_nmse=" << format_double(r.median_nmse)
            << " r2=" << format_double(r.r2_display) << "\n";
  return 0;
}

int run_compare(const RunFlags& flags, const std::string& candidates_path, std::size_t budget,
                const std::vector<std::string>& strategies) {
  const RunConfig config = flags.build();
  const Target target = resolve_target(config);
  std::vector<OdeSystem> candidates;
  for (const auto& e : load_registry(candidates_path)) {
    if (e.dims() != target.system.dims()) throw ConfigError("candidate " + e.id + " has the wrong dimension");
    candidates.push_back(e.system);
  }
  CompareConfig cc;
  cc.truth = target.system;
  cc.domain = target.domain;
  if (flags.sigma2) cc.sigma2 = *flags.sigma2;
  cc.alpha = config.alpha;
  cc.budget = budget;
  cc.strategy.sketch = config.sketch;
  cc.strategy.pool_size = config.pool_size;
  cc.seed = config.seed;
  std::vector<StrategyKind> kinds;
  for (const auto& s : strategies) kinds.push_back(parse_strategy(s));
  write_comparison(std::cout, compare_strategies(cc, candidates, kinds));
  return 0;
}

int run_registry_list(const std::string& path) {
  for (const auto& e : load_registry(path)) {
    std::cout << e.id << "\t" << e.name << "\t" << render(e.system) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active discovery of symbolic ODEs"};
  app.require_subcommand(1);

  RunFlags discover_flags, evaluate_flags, compare_flags;
  std::string out_dir, candidate, candidates_path, registry_path;
  std::size_t budget = 20;
  std::vector<std::string> strategies = {"apps", "qbc", "coreset", "random"};

  auto* discover = app.add_subcommand("discover", "run the active discovery loop");
  discover_flags.attach(discover, true);
  discover->add_option("--out", out_dir, "directory for report, policy and plot data");

  auto* evaluate = app.add_subcommand("evaluate", "score a system on held-out test trajectories");
  evaluate_flags.attach(evaluate, false);
  evaluate->add_option("--candidate", candidate, "system in rendered form, e.g. \"x1' = 0.23*x1\"")->required();

  auto* compare = app.add_subcommand("compare", "rank candidates with each query strategy");
  compare_flags.attach(compare, true);
  compare->add_option("--candidates", candidates_path, "registry file of fitted candidates")->required();
  compare->add_option("--budget", budget, "trajectories queried per strategy");
  compare->add_option("--strategies", strategies)->delimiter(',');

  auto* registry = app.add_subcommand("registry", "inspect registry files");
  registry->require_subcommand(1);
  auto* list = registry->add_subcommand("list", "print the records of a registry file");
  list->add_option("file", registry_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*discover) return run_discover(discover_flags, out_dir);
    if (*evaluate) return run_evaluate(evaluate_flags, candidate);
    if (*compare) return run_compare(compare_flags, candidates_path, budget, strategies);
    if (*list) return run_registry_list(registry_path);
  } catch (const ConfigError& e) {
    std::cerr << "event=error kind=config msg=\"" << e.what() << "\"\n";
  } catch (const IoError& e) {
    std::cerr << "event=error kind=io msg=\"" << e.what() << "\"\n";
  } catch (const ParseError& e) {
    std::cerr << "event=error kind=parse pos=" << e.position() << " msg=\"" << e.what() << "\"\n";
  } catch (const std::exception& e) {
    std::cerr << "event=error kind=runtime msg=\"" << e.what() << "\"\n";
  }
  return kExitFailure;
}
