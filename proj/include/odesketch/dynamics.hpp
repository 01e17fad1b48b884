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

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "odesketch/expression.hpp"

namespace odesketch {

/// States whose magnitude exceeds this are treated as diverged.
inline constexpr double kDivergenceBound = 1e10;

/// Observation times t_1 < ... < t_k, all > 0. Integration starts at t = 0.
struct TimeGrid {
  std::vector<double> times;
  double step_hint = 0.0;

  /// dt, 2dt, ..., horizon.
  static TimeGrid uniform(double dt, double horizon);
  std::size_t size() const { return times.size(); }
  /// Throws UsageError unless strictly increasing and positive.
  void validate() const;

  /// Grids are equal when their observation times are; the hint is advisory.
  friend bool operator==(const TimeGrid& a, const TimeGrid& b) { return a.times == b.times; }
};

/// A solution (x_0, x(t_1), ..., x(t_k)). `states` is k x n, row-major.
struct Trajectory {
  std::vector<double> initial;
  TimeGrid grid;
  std::vector<double> states;
  bool finite = true;

  std::size_t dims() const { return initial.size(); }
  std::size_t size() const { return grid.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(states).subspan(i * dims(), dims());
  }
  double at(std::size_t i, std::size_t j) const { return states[i * dims() + j]; }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Step counts n_i with t_i = n_i * dt; throws UsageError when a grid time is
/// not a multiple of dt (1e-9 relative).
std::vector<std::size_t> grid_steps(const TimeGrid& grid, double dt);

/// Classical fixed-step RK4 from t = 0 over any vector field
/// `field(const double* x, double* dxdt)`. Once a state leaves the finite
/// bound, every remaining row is NaN and `finite` is false.
template <typename Field>
Trajectory integrate_field(Field&& field, std::span<const double> x0, const TimeGrid& grid, double dt) {
  if (!(dt > 0.0)) throw UsageError("integrate: dt must be positive");
  const std::vector<std::size_t> steps = grid_steps(grid, dt);
  const std::size_t n = x0.size();
  Trajectory traj;
  traj.initial.assign(x0.begin(), x0.end());
  traj.grid = grid;
  traj.states.assign(grid.size() * n, std::numeric_limits<double>::quiet_NaN());

  std::vector<double> x(x0.begin(), x0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::size_t done = 0;
  bool ok = true;
  for (double v : x) ok = ok && std::isfinite(v) && std::abs(v) <= kDivergenceBound;
  for (std::size_t row = 0; row < steps.size() && ok; ++row) {
    for (; done < steps[row] && ok; ++done) {
      field(x.data(), k1.data());
      for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + 0.5 * dt * k1[j];
      field(tmp.data(), k2.data());
      for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + 0.5 * dt * k2[j];
      field(tmp.data(), k3.data());
      for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + dt * k3[j];
      field(tmp.data(), k4.data());
      for (std::size_t j = 0; j < n; ++j) {
        x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        ok = ok && std::isfinite(x[j]) && std::abs(x[j]) <= kDivergenceBound;
      }
    }
    if (ok) std::copy(x.begin(), x.end(), traj.states.begin() + static_cast<std::ptrdiff_t>(row * n));
  }
  traj.finite = ok;
  return traj;
}

/// Integrates a complete system with its own coefficients (or `coeffs`).
Trajectory integrate(const OdeSystem& system, std::span<const double> x0, const TimeGrid& grid, double dt);
Trajectory integrate(const CompiledSystem& system, std::span<const double> coeffs, std::span<const double> x0,
                     const TimeGrid& grid, double dt);

/// +infinity marks a prediction that could not be scored.
inline constexpr double kInfiniteNmse = std::numeric_limits<double>::infinity();

/// Pooled variance of every state entry of a trajectory.
double pooled_variance(const Trajectory& truth);

/// Mean squared entry error over the grid divided by the pooled truth
/// variance (plain MSE when the truth is constant).
double nmse(const Trajectory& truth, const Trajectory& pred);

/// Mean of per-trajectory NMSE values.
double mean_nmse(std::span<const Trajectory> truth, std::span<const Trajectory> pred);

inline double r2(double nmse_value) { return 1.0 - nmse_value; }
inline double r2_display(double nmse_value) {
  double v = r2(nmse_value);
  return std::isfinite(v) && v > 0.0 ? v : 0.0;
}

/// 1 / (1 + nmse); non-finite or negative inputs give 0.
double reward(double nmse_value);

/// Fraction of discordant pairs between two rank vectors over the same
/// items. rank_a[i] is item i's position (any distinct labels work).
double kendall_distance(std::span<const int> rank_a, std::span<const int> rank_b);

/// "t,x0,...,x{n-1}" text with the initial condition as the t = 0 row.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in);

}  // namespace odesketch
