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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "odesketch/dynamics.hpp"

namespace odesketch {

/// Skeletons with more open constants than this are not fitted.
inline constexpr std::size_t kMaxConstants = 20;

/// Trajectories restricted to the points of a fitting grid, each with the
/// pooled variance of the full trajectory it came from.
struct FitData {
  std::vector<Trajectory> trajectories;
  std::vector<double> variances;
  double dt = 0.01;

  std::size_t points() const;
  bool empty() const { return trajectories.empty(); }
};

/// Keeps the grid points that are multiples of `dt` and adds whole
/// trajectories in a seeded shuffled order until `max_points` rows are
/// reached (a single over-long trajectory is truncated). max_points = 0
/// keeps everything.
FitData make_fit_data(std::span<const Trajectory> data, double dt, std::size_t max_points, std::uint64_t seed);

/// Mean per-trajectory NMSE of the system with coefficients `c`; +inf when
/// any integration diverges.
double fit_objective(const CompiledSystem& system, std::span<const double> c, const FitData& data);

struct FitOptions {
  std::size_t restarts = 4;
  std::size_t max_evals = 500;
  double restart_box = 5.0;

  void validate() const;
};

struct FitProblem {
  OdeSystem skeleton;
  std::shared_ptr<const FitData> data;
  FitOptions options;
  std::uint64_t seed = 0;
};

struct FitResult {
  std::vector<double> coefficients;
  double nmse = kInfiniteNmse;
  std::size_t evaluations = 0;
  std::string error;

  bool finite() const { return std::isfinite(nmse); }
};

/// Multi-start BFGS with central-difference gradients. Starts: the minimizer
/// of a finite-difference slope mismatch (f at row midpoints against the
/// observed slopes), all ones, then `restarts` uniform draws in the box.
/// Returns the best point seen; `evaluations` counts objective calls only.
FitResult fit(const FitProblem& problem);

/// Plain BFGS minimizer over an arbitrary objective; exposed for tests.
struct MinimizeResult {
  std::vector<double> x;
  double value = kInfiniteNmse;
  std::size_t evaluations = 0;
};
MinimizeResult bfgs_minimize(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                             std::size_t max_evals);

struct BatchFitResult {
  std::vector<FitResult> results;
  double wall_seconds = 0.0;
};

/// Runs independent fits on up to `parallelism` threads. Results keep input
/// order and do not depend on the thread count.
BatchFitResult fit_batch(std::span<const FitProblem> problems, std::size_t parallelism);

/// Hardware concurrency capped at 20.
std::size_t default_parallelism();

}  // namespace odesketch
