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

#include "odesketch/sketcher.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace odesketch {

namespace {

std::size_t trajectory_bytes(const Trajectory& t) {
  return sizeof(double) * (t.initial.size() + t.states.size() + t.grid.times.size());
}

std::vector<CompiledSystem> compile_all(std::span<const OdeSystem> candidates) {
  std::vector<CompiledSystem> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (!c.complete() || (c.constant_count() > 0 && !c.has_coefficients())) {
      throw UsageError("sketching needs complete candidates with fitted coefficients");
    }
    out.emplace_back(c);
  }
  return out;
}

std::vector<Sketch> sketch_compiled(std::span<const OdeSystem> candidates, std::span<const CompiledSystem> compiled,
                                    const Region& region, std::size_t points, const TimeGrid& grid, double dt,
                                    Rng& rng, std::size_t region_index) {
  if (points == 0) throw UsageError("sketch needs at least one point");
  std::vector<std::vector<double>> starts;
  starts.reserve(points);
  for (std::size_t l = 0; l < points; ++l) starts.push_back(region.sample(rng));

  std::vector<Sketch> sketches(candidates.size());
  for (std::size_t m = 0; m < candidates.size(); ++m) {
    sketches[m].candidate = m;
    sketches[m].region = region_index;
    sketches[m].trajectories.reserve(points);
    for (const auto& x0 : starts) {
      sketches[m].trajectories.push_back(integrate(compiled[m], candidates[m].coefficients(), x0, grid, dt));
    }
  }
  return sketches;
}

double pair_term(const Trajectory& a, const Trajectory& b) {
  if (!a.finite || !b.finite) return kMaxPairwise;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    const double d = a.states[i] - b.states[i];
    sum += d * d;
  }
  return std::isfinite(sum) ? std::min(sum, kMaxPairwise) : kMaxPairwise;
}

double region_score_of(std::span<const Sketch> sketches) {
  std::vector<double> pairs;
  for (std::size_t i = 0; i < sketches.size(); ++i) {
    for (std::size_t j = i + 1; j < sketches.size(); ++j) pairs.push_back(pairwise_if(sketches[i], sketches[j]));
  }
  return region_score_from_pairs(sketches.size(), pairs);
}

}  // namespace

bool Region::contains(std::span<const double> x) const {
  if (x.size() != dims()) return false;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < lower[j] || x[j] > lower[j] + width[j]) return false;
  }
  return true;
}

std::vector<double> Region::sample(Rng& rng) const {
  std::vector<double> x(dims());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t j = 0; j < dims(); ++j) x[j] = lower[j] + u(rng) * width[j];
  return x;
}

Domain Region::as_domain() const {
  Domain d;
  for (std::size_t j = 0; j < dims(); ++j) d.bounds.push_back({lower[j], lower[j] + width[j]});
  return d;
}

std::vector<Region> sample_regions(const Domain& domain, std::size_t count, double relative_width, Rng& rng) {
  if (count == 0) throw UsageError("sample_regions: K must be >= 1");
  if (!(relative_width > 0.0 && relative_width <= 1.0)) {
    throw UsageError("sample_regions: relative width must lie in (0, 1]");
  }
  domain.validate();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Region> regions(count);
  for (auto& r : regions) {
    for (const auto& b : domain.bounds) {
      const double w = relative_width * b.width();
      r.width.push_back(w);
      r.lower.push_back(b.lo + u(rng) * (b.width() - w));
    }
  }
  return regions;
}

void SketchConfig::validate() const {
  if (regions == 0) throw ConfigError("sketch regions must be >= 1");
  if (!(relative_width > 0.0 && relative_width <= 1.0)) throw ConfigError("region width must lie in (0, 1]");
  if (points == 0) throw ConfigError("sketch points must be >= 1");
  if (!(dt > 0.0) || !(horizon >= dt)) throw ConfigError("sketch horizon must be >= its dt > 0");
  grid_steps(grid(), dt);
}

std::vector<Sketch> sketch_candidates(std::span<const OdeSystem> candidates, const Region& region,
                                      std::size_t points, const TimeGrid& grid, double dt, Rng& rng,
                                      std::size_t region_index) {
  const auto compiled = compile_all(candidates);
  return sketch_compiled(candidates, compiled, region, points, grid, dt, rng, region_index);
}

double pairwise_if(const Sketch& a, const Sketch& b) {
  if (a.trajectories.size() != b.trajectories.size() || a.trajectories.empty()) {
    throw UsageError("pairwise_if: sketches have different point counts");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < a.trajectories.size(); ++l) {
    const auto& ta = a.trajectories[l];
    const auto& tb = b.trajectories[l];
    if (ta.grid != tb.grid || ta.states.size() != tb.states.size()) {
      throw UsageError("pairwise_if: sketches use different grids");
    }
    total += pair_term(ta, tb);
  }
  return total / static_cast<double>(a.trajectories.size());
}

double region_score_from_pairs(std::size_t candidates, std::span<const double> pairs) {
  if (candidates < 2) throw UsageError("region score needs at least two candidates");
  if (pairs.size() != candidates * (candidates - 1) / 2) throw UsageError("region score: wrong pair count");
  double sum = 0.0;
  for (double v : pairs) sum += v;
  return sum / static_cast<double>(candidates);
}

double region_score(std::span<const Sketch> sketches) { return region_score_of(sketches); }

std::size_t argmax_region(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("argmax over no regions");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

RegionChoice select_region(std::span<const OdeSystem> candidates, std::span<const Region> regions,
                           std::size_t points, const TimeGrid& grid, double dt, Rng& rng, AuxMemory* memory) {
  if (regions.empty()) throw UsageError("select_region: no regions");
  const auto compiled = compile_all(candidates);
  RegionChoice choice;
  choice.scores.reserve(regions.size());
  AuxMemory scratch;
  AuxMemory& mem = memory ? *memory : scratch;
  const std::size_t region_bytes = regions.size() * 2 * sizeof(double) * regions.front().dims();
  mem.add(region_bytes + regions.size() * sizeof(double));
  for (std::size_t k = 0; k < regions.size(); ++k) {
    auto sketches = sketch_compiled(candidates, compiled, regions[k], points, grid, dt, rng, k);
    std::size_t bytes = 0;
    for (const auto& s : sketches) {
      for (const auto& t : s.trajectories) bytes += trajectory_bytes(t);
    }
    mem.add(bytes);
    choice.scores.push_back(candidates.size() >= 2 ? region_score_of(sketches) : 0.0);
    mem.release(bytes);
  }
  mem.release(region_bytes + regions.size() * sizeof(double));
  choice.index = argmax_region(choice.scores);
  choice.region = regions[choice.index];
  return choice;
}

std::vector<std::vector<double>> qbc_select(std::span<const OdeSystem> candidates, const Domain& domain,
                                            std::size_t m, std::size_t pool_size, const TimeGrid& grid,
                                            double dt, Rng& rng, AuxMemory* memory) {
  if (m == 0 || m > pool_size) throw UsageError("qbc_select: need 1 <= m <= pool size");
  const auto compiled = compile_all(candidates);
  const std::size_t n = domain.dims();
  const std::size_t M = candidates.size();
  AuxMemory scratch;
  AuxMemory& mem = memory ? *memory : scratch;
  const std::size_t bytes = sizeof(double) * (pool_size * n + pool_size + M * n) + sizeof(std::size_t) * pool_size;
  mem.add(bytes);

  std::vector<std::vector<double>> pool;
  pool.reserve(pool_size);
  for (std::size_t p = 0; p < pool_size; ++p) pool.push_back(domain.sample(rng));

  std::vector<double> spread(pool_size, 0.0);
  std::vector<double> ends(M * n);
  for (std::size_t p = 0; p < pool_size; ++p) {
    bool finite = true;
    for (std::size_t c = 0; c < M && finite; ++c) {
      auto traj = integrate(compiled[c], candidates[c].coefficients(), pool[p], grid, dt);
      finite = traj.finite;
      if (finite) {
        auto last = traj.row(traj.size() - 1);
        std::copy(last.begin(), last.end(), ends.begin() + static_cast<std::ptrdiff_t>(c * n));
      }
    }
    if (!finite) {
      spread[p] = kMaxPairwise;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (std::size_t c = 0; c < M; ++c) mean += ends[c * n + j];
      mean /= static_cast<double>(M);
      for (std::size_t c = 0; c < M; ++c) total += (ends[c * n + j] - mean) * (ends[c * n + j] - mean);
    }
    spread[p] = std::min(total / static_cast<double>(M), kMaxPairwise);
  }

  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return spread[a] > spread[b]; });
  std::vector<std::vector<double>> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(pool[order[i]]);
  mem.release(bytes);
  return out;
}

std::vector<std::vector<double>> coreset_select(std::span<const std::vector<double>> existing,
                                                const Domain& domain, std::size_t m, std::size_t pool_size,
                                                Rng& rng, AuxMemory* memory) {
  if (m == 0 || m > pool_size) throw UsageError("coreset_select: need 1 <= m <= pool size");
  const std::size_t n = domain.dims();
  AuxMemory scratch;
  AuxMemory& mem = memory ? *memory : scratch;
  const std::size_t bytes =
      sizeof(double) * (pool_size * n + pool_size + existing.size() * n) + sizeof(bool) * pool_size;
  mem.add(bytes);

  std::vector<std::vector<double>> pool;
  pool.reserve(pool_size);
  for (std::size_t p = 0; p < pool_size; ++p) pool.push_back(domain.sample(rng));
  std::vector<std::vector<double>> centers(existing.begin(), existing.end());

  auto dist2 = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
  };
  std::vector<double> nearest(pool_size, std::numeric_limits<double>::infinity());
  for (const auto& c : centers) {
    for (std::size_t p = 0; p < pool_size; ++p) nearest[p] = std::min(nearest[p], dist2(pool[p], c));
  }
  std::vector<bool> taken(pool_size, false);
  std::vector<std::vector<double>> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = pool_size;
    for (std::size_t p = 0; p < pool_size; ++p) {
      if (taken[p]) continue;
      if (best == pool_size || nearest[p] > nearest[best]) best = p;
    }
    taken[best] = true;
    out.push_back(pool[best]);
    for (std::size_t p = 0; p < pool_size; ++p) nearest[p] = std::min(nearest[p], dist2(pool[p], pool[best]));
  }
  mem.release(bytes);
  return out;
}

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Apps: return "apps";
    case StrategyKind::Qbc: return "qbc";
    case StrategyKind::Coreset: return "coreset";
    case StrategyKind::Random: return "random";
  }
  return "?";
}

StrategyKind parse_strategy(std::string_view name) {
  if (name == "apps" || name == "apps-sketch") return StrategyKind::Apps;
  if (name == "qbc") return StrategyKind::Qbc;
  if (name == "coreset") return StrategyKind::Coreset;
  if (name == "random" || name == "uniform-random") return StrategyKind::Random;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

QueryResult query_batch(const QueryStrategy& strategy, std::span<const OdeSystem> candidates, Oracle& oracle,
                        std::size_t m, const TimeGrid& query_grid, std::span<const Trajectory> existing,
                        Rng& rng, AuxMemory* memory) {
  if (m == 0) throw UsageError("query_batch: m must be >= 1");
  const Domain& domain = oracle.config().domain;
  StrategyKind kind = strategy.kind;
  if ((kind == StrategyKind::Apps || kind == StrategyKind::Qbc) && candidates.size() < 2) kind = StrategyKind::Random;

  QueryResult result;
  std::vector<std::vector<double>> starts;
  switch (kind) {
    case StrategyKind::Apps: {
      const auto& sc = strategy.sketch;
      auto regions = sample_regions(domain, sc.regions, sc.relative_width, rng);
      auto choice = select_region(candidates, regions, sc.points, sc.grid(), sc.dt, rng, memory);
      for (std::size_t i = 0; i < m; ++i) starts.push_back(choice.region.sample(rng));
      result.choice = std::move(choice);
      break;
    }
    case StrategyKind::Qbc:
      starts = qbc_select(candidates, domain, m, std::max(m, strategy.pool_size), strategy.sketch.grid(),
                          strategy.sketch.dt, rng, memory);
      break;
    case StrategyKind::Coreset: {
      std::vector<std::vector<double>> seen;
      seen.reserve(existing.size());
      for (const auto& t : existing) seen.push_back(t.initial);
      starts = coreset_select(seen, domain, m, std::max(m, strategy.pool_size), rng, memory);
      break;
    }
    case StrategyKind::Random:
      for (std::size_t i = 0; i < m; ++i) starts.push_back(domain.sample(rng));
      break;
  }
  if (memory) memory->add(starts.size() * domain.dims() * sizeof(double));
  result.trajectories.reserve(starts.size());
  for (const auto& x0 : starts) result.trajectories.push_back(oracle.query(x0, query_grid));
  if (memory) memory->release(starts.size() * domain.dims() * sizeof(double));
  return result;
}

}  // namespace odesketch
