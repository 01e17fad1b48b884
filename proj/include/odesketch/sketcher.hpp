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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odesketch/oracle.hpp"

namespace odesketch {

/// Cap for one pairwise term; also the value of any term involving a
/// diverged trajectory.
inline constexpr double kMaxPairwise = 1e6;

/// The box [lower, lower + width].
struct Region {
  std::vector<double> lower;
  std::vector<double> width;

  std::size_t dims() const { return lower.size(); }
  bool contains(std::span<const double> x) const;
  std::vector<double> sample(Rng& rng) const;
  Domain as_domain() const;

  friend bool operator==(const Region&, const Region&) = default;
};

/// K boxes whose edge j is relative_width * (b_j - a_j), placed uniformly
/// inside the domain.
std::vector<Region> sample_regions(const Domain& domain, std::size_t count, double relative_width, Rng& rng);

/// Short trajectories of one candidate from shared starts in one region.
struct Sketch {
  std::size_t candidate = 0;
  std::size_t region = 0;
  std::vector<Trajectory> trajectories;
};

struct SketchConfig {
  std::size_t regions = 10;
  double relative_width = 0.25;
  std::size_t points = 16;
  double horizon = 0.2;
  double dt = 0.01;

  void validate() const;
  TimeGrid grid() const { return TimeGrid::uniform(dt, horizon); }
};

/// One shared draw of L starts inside `region`; every candidate is
/// integrated from each of them on `grid`.
std::vector<Sketch> sketch_candidates(std::span<const OdeSystem> candidates, const Region& region,
                                      std::size_t points, const TimeGrid& grid, double dt, Rng& rng,
                                      std::size_t region_index = 0);

/// (1/L) sum_l ||tau_l - tau'_l||^2 with each term capped at kMaxPairwise.
double pairwise_if(const Sketch& a, const Sketch& b);

/// (1/M) times the sum of the upper-triangle pairwise values, given in the
/// order (0,1), (0,2), ..., (0,M-1), (1,2), ...
double region_score_from_pairs(std::size_t candidates, std::span<const double> pairs);
double region_score(std::span<const Sketch> sketches);

/// Index of the largest score; the lowest index wins ties.
std::size_t argmax_region(std::span<const double> scores);

/// Bytes held by strategy-owned working sets.
struct AuxMemory {
  std::size_t current = 0;
  std::size_t peak = 0;

  void add(std::size_t bytes) {
    current += bytes;
    if (current > peak) peak = current;
  }
  void release(std::size_t bytes) { current = bytes > current ? 0 : current - bytes; }
};

struct RegionChoice {
  std::size_t index = 0;
  Region region;
  std::vector<double> scores;
};

RegionChoice select_region(std::span<const OdeSystem> candidates, std::span<const Region> regions,
                           std::size_t points, const TimeGrid& grid, double dt, Rng& rng,
                           AuxMemory* memory = nullptr);

/// Top-m points of a uniform pool of P, ranked by the spread of the
/// candidates' endpoints (trace of their covariance). Ties keep pool order.
std::vector<std::vector<double>> qbc_select(std::span<const OdeSystem> candidates, const Domain& domain,
                                            std::size_t m, std::size_t pool_size, const TimeGrid& grid,
                                            double dt, Rng& rng, AuxMemory* memory = nullptr);

/// Greedy k-center over a uniform pool of P points against `existing`.
std::vector<std::vector<double>> coreset_select(std::span<const std::vector<double>> existing,
                                                const Domain& domain, std::size_t m, std::size_t pool_size,
                                                Rng& rng, AuxMemory* memory = nullptr);

enum class StrategyKind { Apps, Qbc, Coreset, Random };

std::string_view strategy_name(StrategyKind kind);
/// Accepts apps, apps-sketch, qbc, coreset, random, uniform-random.
StrategyKind parse_strategy(std::string_view name);

struct QueryStrategy {
  StrategyKind kind = StrategyKind::Apps;
  SketchConfig sketch;
  std::size_t pool_size = 4096;
};

struct QueryResult {
  std::vector<Trajectory> trajectories;
  std::optional<RegionChoice> choice;  // apps only
};

/// Chooses m starts per the strategy and queries each on `query_grid`.
/// `existing` feeds the core-set distances. With fewer than two candidates
/// the committee-based strategies fall back to uniform starts.
QueryResult query_batch(const QueryStrategy& strategy, std::span<const OdeSystem> candidates, Oracle& oracle,
                        std::size_t m, const TimeGrid& query_grid, std::span<const Trajectory> existing,
                        Rng& rng, AuxMemory* memory = nullptr);

}  // namespace odesketch
