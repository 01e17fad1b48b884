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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odesketch/constfit.hpp"
#include "odesketch/decoder.hpp"
#include "odesketch/sketcher.hpp"

namespace odesketch {

struct RunConfig {
  // Ground truth: a registry record, or `system` text with x0-based names.
  std::string dataset;
  std::string system_id;
  std::string system;
  std::optional<Domain> domain;
  double sigma2 = 0.0;
  double alpha = 0.0;
  double oracle_dt = 0.001;

  std::vector<std::string> operators = {"+", "-", "*", "/", "sin", "cos"};

  std::size_t epochs = 50;
  std::size_t batch = 100;
  double lr = 0.009;
  std::string optimizer = "adam";
  std::size_t max_len = 20;
  std::size_t hidden = 256;

  std::string strategy = "apps";
  SketchConfig sketch;
  std::size_t sketch_top_m = 10;
  std::size_t pool_size = 4096;
  std::size_t query_batch = 100;
  std::size_t initial_draw = 100;
  double train_horizon = 1.0;
  double train_dt = 0.001;

  std::size_t fit_restarts = 4;
  std::size_t fit_max_evals = 500;
  std::size_t fit_parallelism = 0;  // 0 = default_parallelism()
  std::size_t fit_points = 1024;
  double fit_dt = 0.01;

  std::size_t test_count = 100;
  double test_horizon = 10.0;
  bool test_noise = false;

  std::size_t hof_capacity = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Strict: unknown keys are a ConfigError; missing keys keep defaults.
RunConfig run_config_from_json(std::string_view text);
std::string run_config_to_json(const RunConfig& config);

struct Target {
  std::string label;
  OdeSystem system;
  Domain domain;
};

/// Resolves the registry record or inline system of a config.
Target resolve_target(const RunConfig& config);

/// Oracle settings of the held-out test set of a run. `discover` and
/// `evaluate` share it, so both see the same test starts for one seed.
OracleConfig test_oracle_config(const RunConfig& config, const Target& target);

struct HofEntry {
  OdeSystem system;
  std::string text;
  double train_nmse = kInfiniteNmse;
  std::size_t epoch = 0;
};

/// Best-Q candidates, ascending by train NMSE; equal scores keep arrival
/// order and a repeated system keeps its better score.
class HallOfFame {
 public:
  explicit HallOfFame(std::size_t capacity) : capacity_(capacity) {}

  void offer(HofEntry entry);
  const std::vector<HofEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<HofEntry> entries_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  double best_reward = 0.0;
  double best_train_nmse = kInfiniteNmse;
  std::size_t distinct_candidates = 0;
  std::optional<Region> region;
  std::vector<double> region_scores;
  std::uint64_t oracle_queries = 0;
  std::size_t data_size = 0;
  bool updated = false;
};

struct TestConfig {
  std::size_t count = 100;
  double horizon = 10.0;
  double dt = 0.001;
  bool noise = false;
};

struct TestResult {
  double mean_nmse = kInfiniteNmse;
  double median_nmse = kInfiniteNmse;
  double r2 = -kInfiniteNmse;
  double r2_display = 0.0;
  std::vector<double> per_trajectory;
};

struct RunReport {
  std::string target;
  bool discovered = false;
  std::string best_system;
  double train_nmse = kInfiniteNmse;
  TestResult test;
  std::vector<EpochRecord> epochs;
  std::vector<HofEntry> hall_of_fame;
  std::uint64_t oracle_queries = 0;
  std::uint64_t dropped_points = 0;
  std::size_t data_size = 0;
  std::uint64_t grammar_fingerprint = 0;

  // Excluded from reproducibility comparisons.
  double wall_seconds = 0.0;
  double fit_seconds = 0.0;
  double query_seconds = 0.0;

  // Plot material, not serialized.
  std::vector<Trajectory> plot_truth;
  std::vector<Trajectory> plot_pred;
};

struct RunOutputs {
  RunReport report;
  std::optional<Policy> policy;
};

/// The active discovery loop. Log records go to `log` when non-null.
RunOutputs run_discovery(const RunConfig& config, std::ostream* log = nullptr);

/// Integrates `system` from held-out starts drawn by a separate oracle
/// stream and scores it against the ground truth.
TestResult evaluate_on_test(const OdeSystem& system, const OracleConfig& truth, const TestConfig& test);

/// Same, from explicit starts on a uniform grid.
TestResult evaluate_on_starts(const OdeSystem& system, const OracleConfig& truth,
                              std::span<const std::vector<double>> starts, const TestConfig& test);

/// JSON text of the report; timing fields sit under "timing".
std::string report_to_json(const RunReport& report, bool include_timing = true);

struct CompareConfig {
  OdeSystem truth;
  Domain domain;
  double sigma2 = 0.01;
  double alpha = 0.0;
  double oracle_dt = 0.001;
  std::size_t budget = 20;
  std::size_t rounds = 4;  // budget is spread evenly over this many query calls
  double horizon = 1.0;
  double grid_dt = 0.01;
  std::size_t reference_count = 1000;
  QueryStrategy strategy;  // sketch and pool settings shared by all kinds
  std::uint64_t seed = 0;
};

struct StrategyRow {
  StrategyKind kind = StrategyKind::Apps;
  double kendall = 0.0;
  double wall_seconds = 0.0;
  std::size_t peak_bytes = 0;
  std::vector<int> ranking;
};

struct ComparisonTable {
  std::vector<int> reference_ranking;
  std::vector<StrategyRow> rows;
};

/// Rank positions (0 = best) of candidates by mean NMSE; ties keep index
/// order.
std::vector<int> rank_by_nmse(std::span<const double> nmse);

/// Mean NMSE of each candidate on `data`.
std::vector<double> score_candidates(std::span<const OdeSystem> candidates, std::span<const Trajectory> data,
                                     double dt);

ComparisonTable compare_strategies(const CompareConfig& config, std::span<const OdeSystem> candidates,
                                   std::span<const StrategyKind> strategies);

void write_comparison(std::ostream& out, const ComparisonTable& table);

/// rewards.csv, trajectories.csv and sketch_scores.csv.
void emit_plot_data(const RunReport& report, const std::filesystem::path& dir);

struct PlotTrajectory {
  std::size_t start = 0;
  std::string source;
  Trajectory trajectory;
};

/// Parses trajectories.csv back into one entry per (start, source).
std::vector<PlotTrajectory> read_plot_trajectories(std::istream& in);

}  // namespace odesketch
