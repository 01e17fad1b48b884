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

#include "odesketch/dynamics.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace odesketch {

TimeGrid TimeGrid::uniform(double dt, double horizon) {
  if (!(dt > 0.0) || !(horizon > 0.0)) throw UsageError("uniform grid needs dt > 0 and horizon > 0");
  const auto count = static_cast<std::size_t>(std::llround(horizon / dt));
  TimeGrid g;
  g.step_hint = dt;
  g.times.reserve(count);
  for (std::size_t i = 1; i <= count; ++i) g.times.push_back(static_cast<double>(i) * dt);
  return g;
}

void TimeGrid::validate() const {
  double prev = 0.0;
  for (double t : times) {
    if (!(t > prev)) throw UsageError("time grid must be positive and strictly increasing");
    prev = t;
  }
}

std::vector<std::size_t> grid_steps(const TimeGrid& grid, double dt) {
  grid.validate();
  std::vector<std::size_t> steps;
  steps.reserve(grid.size());
  for (double t : grid.times) {
    const double q = t / dt;
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-9 * std::max(1.0, q)) {
      throw UsageError("grid time " + format_double(t) + " is not a multiple of dt " + format_double(dt));
    }
    steps.push_back(static_cast<std::size_t>(r));
  }
  return steps;
}

Trajectory integrate(const CompiledSystem& system, std::span<const double> coeffs, std::span<const double> x0,
                     const TimeGrid& grid, double dt) {
  if (x0.size() != system.dims()) throw UsageError("integrate: initial condition has wrong dimension");
  const double* c = coeffs.data();
  return integrate_field([&](const double* x, double* dx) { system.eval(x, c, dx); }, x0, grid, dt);
}

Trajectory integrate(const OdeSystem& system, std::span<const double> x0, const TimeGrid& grid, double dt) {
  if (!system.complete()) throw UsageError("integrate: system is incomplete");
  if (system.constant_count() > 0 && !system.has_coefficients()) {
    throw UsageError("integrate: system has unfitted constant slots");
  }
  CompiledSystem compiled(system);
  return integrate(compiled, system.coefficients(), x0, grid, dt);
}

double pooled_variance(const Trajectory& truth) {
  const auto& s = truth.states;
  if (s.empty()) return 0.0;
  // A rounded mean would leave ulp-sized residue for constant data.
  if (std::all_of(s.begin(), s.end(), [&](double v) { return v == s.front(); })) return 0.0;
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  return var / static_cast<double>(s.size());
}

double nmse(const Trajectory& truth, const Trajectory& pred) {
  if (truth.grid != pred.grid || truth.dims() != pred.dims()) {
    throw UsageError("nmse: trajectories are on different grids");
  }
  if (!truth.finite) throw UsageError("nmse: truth trajectory is not finite");
  if (!pred.finite) return kInfiniteNmse;
  if (truth.states.empty()) return 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < truth.states.size(); ++i) {
    const double d = truth.states[i] - pred.states[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(truth.states.size());
  const double var = pooled_variance(truth);
  const double out = var > 0.0 ? mse / var : mse;
  return std::isfinite(out) ? out : kInfiniteNmse;
}

double mean_nmse(std::span<const Trajectory> truth, std::span<const Trajectory> pred) {
  if (truth.size() != pred.size()) throw UsageError("mean_nmse: size mismatch");
  if (truth.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) total += nmse(truth[i], pred[i]);
  return total / static_cast<double>(truth.size());
}

double reward(double nmse_value) {
  if (!std::isfinite(nmse_value) || nmse_value < 0.0) return 0.0;
  return 1.0 / (1.0 + nmse_value);
}

double kendall_distance(std::span<const int> rank_a, std::span<const int> rank_b) {
  if (rank_a.size() != rank_b.size()) throw UsageError("kendall_distance: rankings differ in size");
  const std::size_t m = rank_a.size();
  if (m < 2) throw UsageError("kendall_distance: need at least two items");
  std::vector<int> sa(rank_a.begin(), rank_a.end()), sb(rank_b.begin(), rank_b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (std::adjacent_find(sa.begin(), sa.end()) != sa.end() || sa != sb) {
    throw UsageError("kendall_distance: inputs are not permutations of the same set");
  }
  std::size_t discordant = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const bool a = rank_a[i] < rank_a[j];
      const bool b = rank_b[i] < rank_b[j];
      if (a != b) ++discordant;
    }
  }
  return static_cast<double>(discordant) / (static_cast<double>(m * (m - 1)) / 2.0);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t n = traj.dims();
  out << "t";
  for (std::size_t j = 0; j < n; ++j) out << ",x" << j;
  out << "\n0";
  for (double v : traj.initial) out << "," << format_double(v);
  out << "\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out << format_double(traj.grid.times[i]);
    for (std::size_t j = 0; j < n; ++j) out << "," << format_double(traj.at(i, j));
    out << "\n";
  }
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line).substr(0, 1) != "t") throw ParseError("missing trajectory header", 0);
  const auto n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  Trajectory traj;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(parse_double(cell));
    if (row.size() != n + 1) throw ParseError("trajectory row has wrong column count", 0);
    if (first) {
      traj.initial.assign(row.begin() + 1, row.end());
      first = false;
      continue;
    }
    traj.grid.times.push_back(row[0]);
    traj.states.insert(traj.states.end(), row.begin() + 1, row.end());
  }
  if (first) throw ParseError("trajectory has no initial condition row", 0);
  traj.finite = std::all_of(traj.states.begin(), traj.states.end(), [](double v) { return std::isfinite(v); });
  if (traj.grid.size() >= 2) traj.grid.step_hint = traj.grid.times[1] - traj.grid.times[0];
  return traj;
}

}  // namespace odesketch
