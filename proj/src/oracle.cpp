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

#include "odesketch/oracle.hpp"

#include <fstream>
#include <iostream>
#include <istream>
#include <random>

namespace odesketch {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kNoiseStream = 0x6e6f697365;
constexpr std::uint64_t kDropStream = 0x64726f70;
constexpr std::uint64_t kInitialStream = 0x696e6974;

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto p = text.find(sep, start);
    if (p == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, p - start));
    start = p + 1;
  }
}

}  // namespace

Domain Domain::cube(std::size_t n, double lo, double hi) {
  return Domain{std::vector<Interval>(n, Interval{lo, hi})};
}

bool Domain::contains(std::span<const double> x) const {
  if (x.size() != bounds.size()) return false;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < bounds[j].lo || x[j] > bounds[j].hi) return false;
  }
  return true;
}

void Domain::validate() const {
  if (bounds.empty()) throw ConfigError("domain has no intervals");
  for (const auto& b : bounds) {
    if (!(b.lo < b.hi)) throw ConfigError("domain interval [" + format_double(b.lo) + ", " + format_double(b.hi) + "] is empty");
  }
}

std::vector<double> Domain::sample(Rng& rng) const {
  std::vector<double> x(bounds.size());
  for (std::size_t j = 0; j < bounds.size(); ++j) {
    std::uniform_real_distribution<double> u(bounds[j].lo, bounds[j].hi);
    x[j] = u(rng);
  }
  return x;
}

void OracleConfig::validate() const {
  if (!system.complete()) throw ConfigError("oracle system is incomplete");
  if (system.constant_count() > 0 && !system.has_coefficients()) {
    throw ConfigError("oracle system has unfitted constants");
  }
  domain.validate();
  if (domain.dims() != system.dims()) throw ConfigError("domain dimension does not match the system");
  if (!(sigma2 >= 0.0)) throw ConfigError("sigma2 must be >= 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(dt > 0.0)) throw ConfigError("oracle dt must be > 0");
}

Oracle::Oracle(OracleConfig config)
    : config_((config.validate(), std::move(config))),
      compiled_(config_.system),
      initial_rng_(make_rng(config_.seed, {kInitialStream})) {}

Trajectory Oracle::query(std::span<const double> x0, const TimeGrid& grid) {
  if (x0.size() != dims()) throw UsageError("oracle query: initial condition has wrong dimension");
  if (!config_.domain.contains(x0)) {
    std::clog << "level=warn msg=\"oracle query outside domain\"\n";
  }
  const std::uint64_t call = query_count_++;
  Trajectory traj = integrate(compiled_, config_.system.coefficients(), x0, grid, config_.dt);
  if (!traj.finite) {
    throw OracleError("ground-truth integration diverged from the requested initial condition");
  }

  if (config_.sigma2 > 0.0) {
    Rng rng = make_rng(config_.seed, {kNoiseStream, call});
    std::normal_distribution<double> eps(0.0, std::sqrt(config_.sigma2));
    for (double& v : traj.states) v *= 1.0 + eps(rng);
  }

  if (config_.alpha > 0.0) {
    Rng rng = make_rng(config_.seed, {kDropStream, call});
    std::bernoulli_distribution drop(config_.alpha);
    const std::size_t n = dims();
    Trajectory kept;
    kept.initial = traj.initial;
    kept.grid.step_hint = traj.grid.step_hint;
    for (std::size_t i = 0; i < traj.size(); ++i) {
      if (drop(rng)) {
        ++dropped_points_;
        continue;
      }
      kept.grid.times.push_back(traj.grid.times[i]);
      kept.states.insert(kept.states.end(), traj.states.begin() + static_cast<std::ptrdiff_t>(i * n),
                         traj.states.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
    kept.finite = true;
    return kept;
  }
  return traj;
}

std::vector<double> Oracle::sample_initial() { return config_.domain.sample(initial_rng_); }

std::vector<Trajectory> Oracle::sample_training_batch(std::size_t count, double horizon, double grid_dt) {
  if (count == 0) throw UsageError("sample_training_batch: count must be >= 1");
  const TimeGrid grid = TimeGrid::uniform(grid_dt, horizon);
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto x0 = sample_initial();
    out.push_back(query(x0, grid));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registry

std::vector<RegistryEntry> parse_registry(std::istream& in, const std::string& source) {
  std::vector<RegistryEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto fields = split(text, '|');
    if (fields.size() < 3 || fields.size() > 4) {
      throw ParseError(where + ": expected 'id | name | exprs [| domain]'", 0);
    }
    RegistryEntry e;
    e.id = std::string(trim(fields[0]));
    e.name = std::string(trim(fields[1]));
    try {
      e.system = parse_system(fields[2], VarBase::Zero);
    } catch (const ParseError& err) {
      throw ParseError(where + " (record " + e.id + "): " + err.what(), err.position());
    }
    if (fields.size() == 4) {
      Domain d;
      for (auto part : split(fields[3], ';')) {
        auto colon = part.find(':');
        if (colon == std::string_view::npos) throw ParseError(where + ": domain intervals are lo:hi", 0);
        d.bounds.push_back({parse_double(part.substr(0, colon)), parse_double(part.substr(colon + 1))});
      }
      if (d.dims() != e.system.dims()) throw ParseError(where + ": domain dimension mismatch", 0);
      try {
        d.validate();
      } catch (const ConfigError& err) {
        throw ParseError(where + ": " + err.what(), 0);
      }
      e.domain = std::move(d);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<RegistryEntry> load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open registry " + path.string());
  return parse_registry(in, path.string());
}

const RegistryEntry& find_entry(const std::vector<RegistryEntry>& registry, const std::string& id) {
  for (const auto& e : registry) {
    if (e.id == id) return e;
  }
  throw ConfigError("no registry record with id '" + id + "'");
}

}  // namespace odesketch
