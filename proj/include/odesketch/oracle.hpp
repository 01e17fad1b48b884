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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odesketch/dynamics.hpp"

namespace odesketch {

struct Interval {
  double lo = -5.0;
  double hi = 5.0;
  double width() const { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Axis-aligned box of admissible initial conditions.
struct Domain {
  std::vector<Interval> bounds;

  static Domain cube(std::size_t n, double lo = -5.0, double hi = 5.0);
  std::size_t dims() const { return bounds.size(); }
  bool contains(std::span<const double> x) const;
  void validate() const;
  std::vector<double> sample(Rng& rng) const;

  friend bool operator==(const Domain&, const Domain&) = default;
};

struct OracleConfig {
  OdeSystem system;
  Domain domain;
  double sigma2 = 0.0;  // multiplicative noise variance
  double alpha = 0.0;   // per-point drop probability
  double dt = 0.001;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The data oracle O(x0, T). Every call is reproducible from
/// (seed, number of earlier calls).
class Oracle {
 public:
  explicit Oracle(OracleConfig config);

  const OracleConfig& config() const { return config_; }
  std::size_t dims() const { return config_.system.dims(); }
  std::uint64_t query_count() const { return query_count_; }
  /// Points removed by irregular-time dropping so far.
  std::uint64_t dropped_points() const { return dropped_points_; }

  /// Exact integration, then x <- (1 + eps) x with eps ~ N(0, sigma2) per
  /// entry, then each grid point (never x0) dropped with probability alpha.
  Trajectory query(std::span<const double> x0, const TimeGrid& grid);

  /// `count` uniform starts from the domain, each queried on
  /// grid_dt, 2 grid_dt, ..., horizon.
  std::vector<Trajectory> sample_training_batch(std::size_t count, double horizon, double grid_dt);

  /// Draws one uniform initial condition from the oracle's own stream.
  std::vector<double> sample_initial();

 private:
  OracleConfig config_;
  CompiledSystem compiled_;
  std::uint64_t query_count_ = 0;
  std::uint64_t dropped_points_ = 0;
  Rng initial_rng_;
};

struct RegistryEntry {
  std::string id;
  std::string name;
  OdeSystem system;
  std::optional<Domain> domain;

  std::size_t dims() const { return system.dims(); }
};

/// Records "id | name | e0 ; e1 ; ... [| lo:hi ; lo:hi ...]" with x0-based
/// variables; '#' starts a comment line.
std::vector<RegistryEntry> parse_registry(std::istream& in, const std::string& source = "<input>");
std::vector<RegistryEntry> load_registry(const std::filesystem::path& path);
const RegistryEntry& find_entry(const std::vector<RegistryEntry>& registry, const std::string& id);

}  // namespace odesketch
