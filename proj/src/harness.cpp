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

#include "odesketch/harness.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace odesketch {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// Stream tags for derive_seed.
constexpr std::uint64_t kOracleTag = 1;
constexpr std::uint64_t kPolicyTag = 2;
constexpr std::uint64_t kSampleTag = 3;
constexpr std::uint64_t kQueryTag = 4;
constexpr std::uint64_t kFitTag = 5;
constexpr std::uint64_t kTestTag = 6;
constexpr std::uint64_t kReferenceTag = 7;
constexpr std::uint64_t kCompareOracleTag = 8;
constexpr std::uint64_t kCompareQueryTag = 9;

// Test trajectories kept for plotting.
constexpr std::size_t kPlotStarts = 3;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

std::string region_text(const Region& r) {
  std::string s = "[";
  for (std::size_t j = 0; j < r.dims(); ++j) {
    if (j) s += ";";
    s += format_double(r.lower[j]) + ":" + format_double(r.lower[j] + r.width[j]);
  }
  return s + "]";
}

json domain_json(const Domain& d) {
  json a = json::array();
  for (const auto& b : d.bounds) a.push_back({b.lo, b.hi});
  return a;
}

Domain domain_from_json(const json& j) {
  Domain d;
  for (const auto& b : j) {
    if (!b.is_array() || b.size() != 2) throw ConfigError("domain entries are [lo, hi] pairs");
    d.bounds.push_back({b[0].get<double>(), b[1].get<double>()});
  }
  d.validate();
  return d;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kInfiniteNmse;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

TestResult summarize(std::vector<double> per) {
  TestResult r;
  double total = 0.0;
  for (double v : per) total += v;
  r.mean_nmse = per.empty() ? kInfiniteNmse : total / static_cast<double>(per.size());
  if (!std::isfinite(r.mean_nmse)) r.mean_nmse = kInfiniteNmse;
  r.median_nmse = median_of(per);
  r.r2 = r2(r.mean_nmse);
  r.r2_display = r2_display(r.mean_nmse);
  r.per_trajectory = std::move(per);
  return r;
}

TestResult test_with_trajectories(const OdeSystem& system, const OracleConfig& truth,
                                  std::span<const std::vector<double>> starts, const TestConfig& test,
                                  std::vector<Trajectory>* truths, std::vector<Trajectory>* preds) {
  if (!system.complete()) throw UsageError("evaluate: candidate system is incomplete");
  OracleConfig cfg = truth;
  cfg.alpha = 0.0;
  if (!test.noise) cfg.sigma2 = 0.0;
  Oracle oracle(cfg);
  const TimeGrid grid = TimeGrid::uniform(test.dt, test.horizon);
  const CompiledSystem compiled(system);
  std::vector<double> per;
  per.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    Trajectory t = oracle.query(starts[i], grid);
    Trajectory p = integrate(compiled, system.coefficients(), starts[i], grid, test.dt);
    per.push_back(nmse(t, p));
    if (truths && i < kPlotStarts) {
      truths->push_back(std::move(t));
      preds->push_back(std::move(p));
    }
  }
  return summarize(std::move(per));
}

std::vector<std::vector<double>> test_starts(const OracleConfig& truth, const TestConfig& test) {
  Oracle oracle(truth);
  std::vector<std::vector<double>> starts;
  starts.reserve(test.count);
  for (std::size_t i = 0; i < test.count; ++i) starts.push_back(oracle.sample_initial());
  return starts;
}

void log_epoch(std::ostream& log, const EpochRecord& r) {
  log << "event=epoch epoch=" << r.epoch << " mean_reward=" << format_double(r.mean_reward)
      << " best_reward=" << format_double(r.best_reward) << " best_train_nmse=" << format_double(r.best_train_nmse)
      << " distinct=" << r.distinct_candidates;
  if (r.region) {
    log << " region=" << region_text(*r.region) << " scores=";
    for (std::size_t k = 0; k < r.region_scores.size(); ++k) log << (k ? "," : "") << format_double(r.region_scores[k]);
  }
  log << " queries=" << r.oracle_queries << " data=" << r.data_size << " updated=" << (r.updated ? 1 : 0) << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  const bool by_record = !dataset.empty() || !system_id.empty();
  if (by_record == !system.empty()) throw ConfigError("give either --dataset/--id or an inline system");
  if (by_record && (dataset.empty() || system_id.empty())) throw ConfigError("--dataset and --id go together");
  if (!(sigma2 >= 0.0)) throw ConfigError("sigma2 must be >= 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(oracle_dt > 0.0)) throw ConfigError("oracle dt must be > 0");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be adam or sgd");
  if (max_len == 0) throw ConfigError("max_len must be >= 1");
  if (hidden == 0) throw ConfigError("hidden size must be >= 1");
  parse_strategy(strategy);
  sketch.validate();
  if (sketch_top_m == 0) throw ConfigError("sketch top-M must be >= 1");
  if (pool_size == 0) throw ConfigError("pool size must be >= 1");
  if (query_batch == 0) throw ConfigError("query batch must be >= 1");
  if (initial_draw == 0) throw ConfigError("initial draw must be >= 1");
  try {
    grid_steps(TimeGrid::uniform(train_dt, train_horizon), oracle_dt);
    grid_steps(TimeGrid::uniform(oracle_dt, test_horizon), oracle_dt);
  } catch (const UsageError& e) {
    throw ConfigError(std::string("time grid: ") + e.what());
  }
  const double ratio = fit_dt / train_dt;
  if (!(fit_dt > 0.0) || ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ConfigError("fit dt must be a positive multiple of the training grid step");
  }
  if (fit_max_evals == 0) throw ConfigError("fit max evals must be >= 1");
  if (test_count == 0) throw ConfigError("test count must be >= 1");
  if (hof_capacity == 0) throw ConfigError("hall of fame capacity must be >= 1");
  build_grammar(operators, 1);
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["system_id"] = c.system_id;
  j["system"] = c.system;
  j["domain"] = c.domain ? domain_json(*c.domain) : json(nullptr);
  j["sigma2"] = c.sigma2;
  j["alpha"] = c.alpha;
  j["oracle_dt"] = c.oracle_dt;
  j["operators"] = c.operators;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["lr"] = c.lr;
  j["optimizer"] = c.optimizer;
  j["max_len"] = c.max_len;
  j["hidden"] = c.hidden;
  j["strategy"] = c.strategy;
  j["regions"] = c.sketch.regions;
  j["region_width"] = c.sketch.relative_width;
  j["sketch_points"] = c.sketch.points;
  j["sketch_horizon"] = c.sketch.horizon;
  j["sketch_dt"] = c.sketch.dt;
  j["sketch_top_m"] = c.sketch_top_m;
  j["pool_size"] = c.pool_size;
  j["query_batch"] = c.query_batch;
  j["initial_draw"] = c.initial_draw;
  j["train_horizon"] = c.train_horizon;
  j["train_dt"] = c.train_dt;
  j["fit_restarts"] = c.fit_restarts;
  j["fit_max_evals"] = c.fit_max_evals;
  j["fit_parallelism"] = c.fit_parallelism;
  j["fit_points"] = c.fit_points;
  j["fit_dt"] = c.fit_dt;
  j["test_count"] = c.test_count;
  j["test_horizon"] = c.test_horizon;
  j["test_noise"] = c.test_noise;
  j["hof_capacity"] = c.hof_capacity;
  j["seed"] = c.seed;
  return j.dump(2);
}

RunConfig run_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "dataset") c.dataset = v.get<std::string>();
      else if (k == "system_id") c.system_id = v.get<std::string>();
      else if (k == "system") c.system = v.get<std::string>();
      else if (k == "domain") c.domain = v.is_null() ? std::nullopt : std::optional<Domain>(domain_from_json(v));
      else if (k == "sigma2") c.sigma2 = v.get<double>();
      else if (k == "alpha") c.alpha = v.get<double>();
      else if (k == "oracle_dt") c.oracle_dt = v.get<double>();
      else if (k == "operators") c.operators = v.get<std::vector<std::string>>();
      else if (k == "epochs") c.epochs = v.get<std::size_t>();
      else if (k == "batch") c.batch = v.get<std::size_t>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "optimizer") c.optimizer = v.get<std::string>();
      else if (k == "max_len") c.max_len = v.get<std::size_t>();
      else if (k == "hidden") c.hidden = v.get<std::size_t>();
      else if (k == "strategy") c.strategy = v.get<std::string>();
      else if (k == "regions") c.sketch.regions = v.get<std::size_t>();
      else if (k == "region_width") c.sketch.relative_width = v.get<double>();
      else if (k == "sketch_points") c.sketch.points = v.get<std::size_t>();
      else if (k == "sketch_horizon") c.sketch.horizon = v.get<double>();
      else if (k == "sketch_dt") c.sketch.dt = v.get<double>();
      else if (k == "sketch_top_m") c.sketch_top_m = v.get<std::size_t>();
      else if (k == "pool_size") c.pool_size = v.get<std::size_t>();
      else if (k == "query_batch") c.query_batch = v.get<std::size_t>();
      else if (k == "initial_draw") c.initial_draw = v.get<std::size_t>();
      else if (k == "train_horizon") c.train_horizon = v.get<double>();
      else if (k == "train_dt") c.train_dt = v.get<double>();
      else if (k == "fit_restarts") c.fit_restarts = v.get<std::size_t>();
      else if (k == "fit_max_evals") c.fit_max_evals = v.get<std::size_t>();
      else if (k == "fit_parallelism") c.fit_parallelism = v.get<std::size_t>();
      else if (k == "fit_points") c.fit_points = v.get<std::size_t>();
      else if (k == "fit_dt") c.fit_dt = v.get<double>();
      else if (k == "test_count") c.test_count = v.get<std::size_t>();
      else if (k == "test_horizon") c.test_horizon = v.get<double>();
      else if (k == "test_noise") c.test_noise = v.get<bool>();
      else if (k == "hof_capacity") c.hof_capacity = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  return c;
}

Target resolve_target(const RunConfig& config) {
  Target t;
  if (!config.system.empty()) {
    t.label = config.system;
    t.system = parse_system(config.system, VarBase::Zero);
    t.domain = Domain::cube(t.system.dims());
  } else {
    const auto registry = load_registry(config.dataset);
    const RegistryEntry& e = find_entry(registry, config.system_id);
    t.label = std::filesystem::path(config.dataset).filename().string() + "#" + e.id;
    t.system = e.system;
    t.domain = e.domain ? *e.domain : Domain::cube(e.dims());
  }
  if (config.domain) t.domain = *config.domain;
  if (t.domain.dims() != t.system.dims()) throw ConfigError("domain dimension does not match the target system");
  return t;
}

OracleConfig test_oracle_config(const RunConfig& config, const Target& target) {
  OracleConfig oc;
  oc.system = target.system;
  oc.domain = target.domain;
  oc.sigma2 = config.sigma2;
  oc.alpha = 0.0;
  oc.dt = config.oracle_dt;
  oc.seed = derive_seed(config.seed, {kTestTag});
  return oc;
}

// ---------------------------------------------------------------------------
// Hall of fame

void HallOfFame::offer(HofEntry entry) {
  if (!std::isfinite(entry.train_nmse)) return;
  auto same = std::find_if(entries_.begin(), entries_.end(), [&](const HofEntry& e) { return e.text == entry.text; });
  if (same != entries_.end()) {
    if (same->train_nmse <= entry.train_nmse) return;
    entries_.erase(same);
  }
  auto pos = std::upper_bound(entries_.begin(), entries_.end(), entry.train_nmse,
                              [](double v, const HofEntry& e) { return v < e.train_nmse; });
  entries_.insert(pos, std::move(entry));
  if (entries_.size() > capacity_) entries_.pop_back();
}

// ---------------------------------------------------------------------------
// Discovery loop

RunOutputs run_discovery(const RunConfig& config, std::ostream* log) {
  const auto t0 = Clock::now();
  config.validate();
  const Target target = resolve_target(config);
  const std::size_t n = target.system.dims();
  const Grammar grammar = build_grammar(config.operators, n);

  RunOutputs out;
  RunReport& rep = out.report;
  rep.target = target.label;
  rep.grammar_fingerprint = grammar.fingerprint();

  OracleConfig truth_cfg;
  truth_cfg.system = target.system;
  truth_cfg.domain = target.domain;
  truth_cfg.sigma2 = config.sigma2;
  truth_cfg.alpha = config.alpha;
  truth_cfg.dt = config.oracle_dt;
  truth_cfg.seed = derive_seed(config.seed, {kOracleTag});
  Oracle oracle(truth_cfg);

  if (log) {
    *log << "event=start target=\"" << rep.target << "\" rules=" << grammar.size()
         << " strategy=" << config.strategy << " epochs=" << config.epochs << " seed=" << config.seed << "\n";
  }
  if (config.epochs == 0) {
    rep.wall_seconds = seconds_since(t0);
    if (log) *log << "event=done discovered=0\n";
    return out;
  }

  Policy policy = Policy::random(grammar.size(), config.hidden, config.hidden, derive_seed(config.seed, {kPolicyTag}));
  OptimizerConfig opt_cfg;
  opt_cfg.kind = config.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  opt_cfg.lr = config.lr;
  PolicyOptimizer optimizer(opt_cfg);
  Rng sample_rng = make_rng(config.seed, {kSampleTag});
  Rng query_rng = make_rng(config.seed, {kQueryTag});
  QueryStrategy strategy{parse_strategy(config.strategy), config.sketch, config.pool_size};
  const TimeGrid query_grid = TimeGrid::uniform(config.train_dt, config.train_horizon);
  FitOptions fit_opts;
  fit_opts.restarts = config.fit_restarts;
  fit_opts.max_evals = config.fit_max_evals;
  const std::size_t parallelism = config.fit_parallelism ? config.fit_parallelism : default_parallelism();

  auto tq = Clock::now();
  std::vector<Trajectory> data = oracle.sample_training_batch(config.initial_draw, config.train_horizon, config.train_dt);
  rep.query_seconds += seconds_since(tq);
  HallOfFame hof(config.hof_capacity);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SampledBatch batch = sample_sequences(policy, grammar, config.batch, config.max_len, sample_rng);

    // One fit per distinct skeleton.
    std::map<std::string, std::size_t> index;
    std::vector<OdeSystem> skeletons;
    std::vector<std::size_t> slot(batch.size(), SIZE_MAX);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      OdeSystem sys = sequence_to_system(grammar, batch.sequences[i]);
      if (!sys.complete()) continue;
      auto [it, fresh] = index.emplace(render(sys), skeletons.size());
      if (fresh) skeletons.push_back(std::move(sys));
      slot[i] = it->second;
    }
    auto fit_data = std::make_shared<const FitData>(
        make_fit_data(data, config.fit_dt, config.fit_points, derive_seed(config.seed, {kFitTag, epoch})));
    std::vector<FitProblem> problems;
    problems.reserve(skeletons.size());
    for (std::size_t u = 0; u < skeletons.size(); ++u) {
      problems.push_back({skeletons[u], fit_data, fit_opts, derive_seed(config.seed, {kFitTag, epoch, u})});
    }
    BatchFitResult fits = fit_batch(problems, parallelism);
    rep.fit_seconds += fits.wall_seconds;

    std::vector<std::optional<OdeSystem>> fitted(skeletons.size());
    std::vector<std::size_t> finite;
    for (std::size_t u = 0; u < skeletons.size(); ++u) {
      if (!fits.results[u].finite()) continue;
      fitted[u] = skeletons[u].with_coefficients(fits.results[u].coefficients);
      finite.push_back(u);
    }
    std::stable_sort(finite.begin(), finite.end(),
                     [&](std::size_t a, std::size_t b) { return fits.results[a].nmse < fits.results[b].nmse; });
    std::vector<OdeSystem> top;
    for (std::size_t i = 0; i < finite.size() && top.size() < config.sketch_top_m; ++i) top.push_back(*fitted[finite[i]]);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.distinct_candidates = skeletons.size();
    QueryResult queried;
    tq = Clock::now();
    try {
      queried = query_batch(strategy, top, oracle, config.query_batch, query_grid, data, query_rng);
    } catch (const OracleError& e) {
      if (log) *log << "event=oracle_error epoch=" << epoch << " msg=\"" << e.what() << "\"\n";
      queried = QueryResult{};
    }
    rep.query_seconds += seconds_since(tq);
    if (queried.choice) {
      rec.region = queried.choice->region;
      rec.region_scores = queried.choice->scores;
    }

    // Rewards on the new data only.
    std::vector<double> unique_reward(skeletons.size(), 0.0);
    if (!queried.trajectories.empty()) {
      const FitData fresh = make_fit_data(queried.trajectories, config.fit_dt, 0, 0);
      if (!fresh.empty()) {
        for (std::size_t u : finite) {
          const CompiledSystem compiled(*fitted[u]);
          unique_reward[u] = reward(fit_objective(compiled, fitted[u]->coefficients(), fresh));
        }
      }
    }
    for (std::size_t i = 0; i < batch.size(); ++i) batch.rewards[i] = slot[i] == SIZE_MAX ? 0.0 : unique_reward[slot[i]];

    for (std::size_t u : finite) hof.offer({*fitted[u], render(*fitted[u]), fits.results[u].nmse, epoch});
    for (auto& t : queried.trajectories) data.push_back(std::move(t));

    if (!queried.trajectories.empty()) {
      const UpdateStats st = reinforce_update(policy, optimizer, batch);
      rec.mean_reward = st.mean_reward;
      rec.best_reward = st.max_reward;
      rec.updated = st.applied;
      if (st.nonfinite && log) *log << "event=skipped_update epoch=" << epoch << " reason=nonfinite_gradient\n";
    }
    rec.best_train_nmse = hof.empty() ? kInfiniteNmse : hof.entries().front().train_nmse;
    rec.oracle_queries = oracle.query_count();
    rec.data_size = data.size();
    if (log) log_epoch(*log, rec);
    rep.epochs.push_back(std::move(rec));
  }

  rep.oracle_queries = oracle.query_count();
  rep.dropped_points = oracle.dropped_points();
  rep.data_size = data.size();
  rep.hall_of_fame = hof.entries();
  out.policy = std::move(policy);

  if (!hof.empty()) {
    // Final choice on all collected data.
    const FitData full = make_fit_data(data, config.fit_dt, 0, 0);
    std::size_t best = 0;
    double best_score = kInfiniteNmse;
    for (std::size_t i = 0; i < hof.entries().size(); ++i) {
      const auto& e = hof.entries()[i];
      const double s = fit_objective(CompiledSystem(e.system), e.system.coefficients(), full);
      if (s < best_score) {
        best_score = s;
        best = i;
      }
    }
    if (std::isfinite(best_score)) {
      const OdeSystem& chosen = hof.entries()[best].system;
      rep.discovered = true;
      rep.best_system = render(chosen);
      rep.train_nmse = best_score;
      const OracleConfig test_cfg = test_oracle_config(config, target);
      TestConfig tc{config.test_count, config.test_horizon, config.oracle_dt, config.test_noise};
      const auto starts = test_starts(test_cfg, tc);
      rep.test = test_with_trajectories(chosen, test_cfg, starts, tc, &rep.plot_truth, &rep.plot_pred);
    }
  }
  rep.wall_seconds = seconds_since(t0);
  if (log) {
    *log << "event=done discovered=" << (rep.discovered ? 1 : 0) << " best=\"" << rep.best_system
         << "\" train_nmse=" << format_double(rep.train_nmse) << " test_nmse=" << format_double(rep.test.mean_nmse)
         << " test_r2=" << format_double(rep.test.r2_display) << " queries=" << rep.oracle_queries
         << " wall_seconds=" << format_double(rep.wall_seconds) << "\n";
  }
  return out;
}

TestResult evaluate_on_test(const OdeSystem& system, const OracleConfig& truth, const TestConfig& test) {
  const auto starts = test_starts(truth, test);
  return test_with_trajectories(system, truth, starts, test, nullptr, nullptr);
}

TestResult evaluate_on_starts(const OdeSystem& system, const OracleConfig& truth,
                              std::span<const std::vector<double>> starts, const TestConfig& test) {
  return test_with_trajectories(system, truth, starts, test, nullptr, nullptr);
}

std::string report_to_json(const RunReport& r, bool include_timing) {
  json j;
  j["target"] = r.target;
  j["discovered"] = r.discovered;
  j["best_system"] = r.best_system;
  j["train_nmse"] = number(r.train_nmse);
  j["test"] = {{"mean_nmse", number(r.test.mean_nmse)},
               {"median_nmse", number(r.test.median_nmse)},
               {"r2", number(r.test.r2)},
               {"r2_display", number(r.test.r2_display)}};
  j["oracle_queries"] = r.oracle_queries;
  j["dropped_points"] = r.dropped_points;
  j["data_size"] = r.data_size;
  std::ostringstream fp;
  fp << std::hex << r.grammar_fingerprint;
  j["grammar_fingerprint"] = fp.str();
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json row;
    row["epoch"] = e.epoch;
    row["mean_reward"] = number(e.mean_reward);
    row["best_reward"] = number(e.best_reward);
    row["best_train_nmse"] = number(e.best_train_nmse);
    row["distinct_candidates"] = e.distinct_candidates;
    if (e.region) {
      row["region"] = {{"lower", e.region->lower}, {"width", e.region->width}};
      json scores = json::array();
      for (double s : e.region_scores) scores.push_back(number(s));
      row["region_scores"] = scores;
    }
    row["oracle_queries"] = e.oracle_queries;
    row["data_size"] = e.data_size;
    row["updated"] = e.updated;
    epochs.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs);
  json hof = json::array();
  for (const auto& h : r.hall_of_fame) {
    hof.push_back({{"system", h.text}, {"train_nmse", number(h.train_nmse)}, {"epoch", h.epoch}});
  }
  j["hall_of_fame"] = std::move(hof);
  if (include_timing) {
    j["timing"] = {{"wall_seconds", r.wall_seconds},
                   {"fit_seconds", r.fit_seconds},
                   {"query_seconds", r.query_seconds}};
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Strategy comparison

std::vector<int> rank_by_nmse(std::span<const double> nmse_values) {
  std::vector<std::size_t> order(nmse_values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double x = std::isnan(nmse_values[a]) ? kInfiniteNmse : nmse_values[a];
    const double y = std::isnan(nmse_values[b]) ? kInfiniteNmse : nmse_values[b];
    return x < y;
  });
  std::vector<int> rank(nmse_values.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = static_cast<int>(pos);
  return rank;
}

std::vector<double> score_candidates(std::span<const OdeSystem> candidates, std::span<const Trajectory> data,
                                     double dt) {
  const FitData fd = make_fit_data(data, dt, 0, 0);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (fd.empty()) {
      out.push_back(kInfiniteNmse);
      continue;
    }
    out.push_back(fit_objective(CompiledSystem(c), c.coefficients(), fd));
  }
  return out;
}

ComparisonTable compare_strategies(const CompareConfig& config, std::span<const OdeSystem> candidates,
                                   std::span<const StrategyKind> strategies) {
  if (candidates.size() < 2) throw UsageError("compare needs at least two candidates");
  if (config.budget == 0 || config.rounds == 0) throw UsageError("compare needs a positive budget and round count");
  ComparisonTable table;

  OracleConfig ref_cfg{config.truth, config.domain, 0.0, 0.0, config.oracle_dt,
                       derive_seed(config.seed, {kReferenceTag})};
  Oracle reference(ref_cfg);
  const auto ref_data = reference.sample_training_batch(config.reference_count, config.horizon, config.grid_dt);
  table.reference_ranking = rank_by_nmse(score_candidates(candidates, ref_data, config.grid_dt));

  const TimeGrid grid = TimeGrid::uniform(config.grid_dt, config.horizon);
  for (StrategyKind kind : strategies) {
    OracleConfig cfg{config.truth, config.domain, config.sigma2, config.alpha, config.oracle_dt,
                     derive_seed(config.seed, {kCompareOracleTag})};
    Oracle oracle(cfg);
    Rng rng = make_rng(config.seed, {kCompareQueryTag});
    QueryStrategy qs = config.strategy;
    qs.kind = kind;
    AuxMemory memory;
    StrategyRow row;
    row.kind = kind;
    const auto t0 = Clock::now();
    std::vector<Trajectory> queried;
    for (std::size_t round = 0; round < config.rounds; ++round) {
      // Earlier rounds take the remainder so every strategy spends exactly the budget.
      const std::size_t m = config.budget / config.rounds + (round < config.budget % config.rounds ? 1 : 0);
      if (m == 0) continue;
      QueryResult q = query_batch(qs, candidates, oracle, m, grid, queried, rng, &memory);
      for (auto& t : q.trajectories) queried.push_back(std::move(t));
    }
    row.wall_seconds = seconds_since(t0);
    row.peak_bytes = memory.peak;
    row.ranking = rank_by_nmse(score_candidates(candidates, queried, config.grid_dt));
    row.kendall = kendall_distance(row.ranking, table.reference_ranking);
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_comparison(std::ostream& out, const ComparisonTable& table) {
  out << "strategy\tkendall\twall_seconds\tpeak_bytes\n";
  for (const auto& r : table.rows) {
    out << strategy_name(r.kind) << "\t" << format_double(r.kendall) << "\t" << format_double(r.wall_seconds) << "\t"
        << r.peak_bytes << "\n";
  }
}

// ---------------------------------------------------------------------------
// Plot data

void emit_plot_data(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };

  auto rewards = open("rewards.csv");
  rewards << "epoch,mean_reward,best_reward,best_train_nmse,oracle_queries,data_size\n";
  for (const auto& e : report.epochs) {
    rewards << e.epoch << "," << format_double(e.mean_reward) << "," << format_double(e.best_reward) << ","
            << format_double(e.best_train_nmse) << "," << e.oracle_queries << "," << e.data_size << "\n";
  }

  auto traj = open("trajectories.csv");
  const std::size_t n = report.plot_truth.empty() ? 0 : report.plot_truth.front().dims();
  traj << "start,source,t";
  for (std::size_t j = 0; j < n; ++j) traj << ",x" << j;
  traj << "\n";
  auto emit = [&](std::size_t start, const char* source, const Trajectory& t) {
    traj << start << "," << source << ",0";
    for (double v : t.initial) traj << "," << format_double(v);
    traj << "\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
      traj << start << "," << source << "," << format_double(t.grid.times[i]);
      for (std::size_t j = 0; j < t.dims(); ++j) traj << "," << format_double(t.at(i, j));
      traj << "\n";
    }
  };
  for (std::size_t s = 0; s < report.plot_truth.size(); ++s) {
    emit(s, "truth", report.plot_truth[s]);
    emit(s, "predicted", report.plot_pred[s]);
  }

  auto sketch = open("sketch_scores.csv");
  sketch << "epoch,region,score,selected\n";
  for (const auto& e : report.epochs) {
    if (e.region_scores.empty()) continue;
    const std::size_t chosen = argmax_region(e.region_scores);
    for (std::size_t k = 0; k < e.region_scores.size(); ++k) {
      sketch << e.epoch << "," << k << "," << format_double(e.region_scores[k]) << "," << (k == chosen ? 1 : 0) << "\n";
    }
  }
  if (!rewards || !traj || !sketch) throw IoError("failed writing plot data to " + dir.string());
}

std::vector<PlotTrajectory> read_plot_trajectories(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("start,source,t", 0) != 0) {
    throw ParseError("trajectory file is missing its header", 0);
  }
  const auto n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
  std::vector<PlotTrajectory> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != n + 3) throw ParseError("trajectory row has wrong column count", 0);
    const auto start = static_cast<std::size_t>(std::stoull(cells[0]));
    const double t = parse_double(cells[2]);
    std::vector<double> x;
    for (std::size_t j = 0; j < n; ++j) x.push_back(parse_double(cells[3 + j]));
    if (out.empty() || out.back().start != start || out.back().source != cells[1]) {
      if (t != 0.0) throw ParseError("trajectory does not begin with its t = 0 row", 0);
      PlotTrajectory p;
      p.start = start;
      p.source = cells[1];
      p.trajectory.initial = std::move(x);
      out.push_back(std::move(p));
      continue;
    }
    Trajectory& tr = out.back().trajectory;
    tr.grid.times.push_back(t);
    tr.states.insert(tr.states.end(), x.begin(), x.end());
  }
  for (auto& p : out) {
    Trajectory& tr = p.trajectory;
    tr.finite = std::all_of(tr.states.begin(), tr.states.end(), [](double v) { return std::isfinite(v); });
    if (tr.grid.size() >= 2) tr.grid.step_hint = tr.grid.times[1] - tr.grid.times[0];
  }
  return out;
}

}  // namespace odesketch
