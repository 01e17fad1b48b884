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

#include "odesketch/constfit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <numeric>
#include <random>
#include <thread>

#include <Eigen/Dense>

namespace odesketch {

namespace {

// Exact fits stop the multi-start early.
constexpr double kExactFit = 1e-14;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool aligned(double t, double dt) {
  const double q = t / dt;
  return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, q);
}

// Consecutive rows further apart than this many fit steps (dropped points)
// give slopes too coarse to regress on.
constexpr double kMaxSlopeGap = 4.0;

// Mean squared mismatch between f(midpoint) and the finite-difference slope
// of each pair of consecutive rows, scaled like fit_objective. Needs no
// integration, so it stays finite where trajectories would blow up.
double slope_objective(const CompiledSystem& system, std::span<const double> c, const FitData& data) {
  const std::size_t n = system.dims();
  std::vector<double> mid(n), f(n);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const Trajectory& t = data.trajectories[i];
    const double* prev = t.initial.data();
    double t_prev = 0.0, sse = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < t.size(); ++r) {
      const double* cur = t.states.data() + r * n;
      const double h = t.grid.times[r] - t_prev;
      if (h <= kMaxSlopeGap * data.dt) {
        for (std::size_t j = 0; j < n; ++j) mid[j] = 0.5 * (prev[j] + cur[j]);
        system.eval(mid.data(), c.data(), f.data());
        for (std::size_t j = 0; j < n; ++j) {
          const double d = f[j] - (cur[j] - prev[j]) / h;
          sse += d * d;
        }
        ++count;
      }
      prev = cur;
      t_prev = t.grid.times[r];
    }
    if (count == 0) continue;
    const double mse = sse / static_cast<double>(count * n);
    total += data.variances[i] > 0.0 ? mse / data.variances[i] : mse;
    ++used;
  }
  if (used == 0) return kInfiniteNmse;
  const double value = total / static_cast<double>(used);
  return std::isfinite(value) ? value : kInfiniteNmse;
}

}  // namespace

std::size_t FitData::points() const {
  std::size_t total = 0;
  for (const auto& t : trajectories) total += t.size();
  return total;
}

FitData make_fit_data(std::span<const Trajectory> data, double dt, std::size_t max_points, std::uint64_t seed) {
  if (!(dt > 0.0)) throw UsageError("fit dt must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (max_points > 0) {
    Rng rng = make_rng(seed, {0x666974});
    std::shuffle(order.begin(), order.end(), rng);
  }
  FitData out;
  out.dt = dt;
  std::size_t used = 0;
  for (std::size_t idx : order) {
    const Trajectory& src = data[idx];
    if (!src.finite) continue;
    Trajectory t;
    t.initial = src.initial;
    t.grid.step_hint = dt;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (!aligned(src.grid.times[i], dt)) continue;
      t.grid.times.push_back(src.grid.times[i]);
      auto row = src.row(i);
      t.states.insert(t.states.end(), row.begin(), row.end());
    }
    if (t.size() == 0) continue;
    if (max_points > 0) {
      if (used == 0 && t.size() > max_points) {
        t.grid.times.resize(max_points);
        t.states.resize(max_points * t.dims());
      } else if (used + t.size() > max_points) {
        break;
      }
    }
    used += t.size();
    out.variances.push_back(pooled_variance(src));
    out.trajectories.push_back(std::move(t));
  }
  return out;
}

double fit_objective(const CompiledSystem& system, std::span<const double> c, const FitData& data) {
  if (data.empty()) throw UsageError("fit data is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const Trajectory& truth = data.trajectories[i];
    Trajectory pred = integrate(system, c, truth.initial, truth.grid, data.dt);
    if (!pred.finite) return kInfiniteNmse;
    double sse = 0.0;
    for (std::size_t j = 0; j < truth.states.size(); ++j) {
      const double d = truth.states[j] - pred.states[j];
      sse += d * d;
    }
    const double mse = sse / static_cast<double>(truth.states.size());
    total += data.variances[i] > 0.0 ? mse / data.variances[i] : mse;
  }
  const double value = total / static_cast<double>(data.trajectories.size());
  return std::isfinite(value) ? value : kInfiniteNmse;
}

void FitOptions::validate() const {
  if (max_evals == 0) throw ConfigError("fit max_evals must be >= 1");
  if (!(restart_box > 0.0)) throw ConfigError("fit restart box must be positive");
}

MinimizeResult bfgs_minimize(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                             std::size_t max_evals) {
  const std::size_t k = x.size();
  MinimizeResult best;
  best.x = x;
  std::size_t evals = 0;
  auto eval = [&](const std::vector<double>& p) {
    ++evals;
    double v = f(p);
    if (!std::isfinite(v)) v = kInfiniteNmse;
    if (v < best.value) {
      best.value = v;
      best.x = p;
    }
    return v;
  };

  double fx = eval(x);
  if (k == 0 || !std::isfinite(fx)) {
    best.evaluations = evals;
    return best;
  }

  // Central differences; one-sided when a probe diverges.
  auto gradient = [&](const std::vector<double>& p, double fp, std::vector<double>& g) {
    g.assign(k, 0.0);
    std::vector<double> q = p;
    for (std::size_t i = 0; i < k; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
      q[i] = p[i] + h;
      const double up = eval(q);
      q[i] = p[i] - h;
      const double down = eval(q);
      q[i] = p[i];
      if (std::isfinite(up) && std::isfinite(down)) {
        g[i] = (up - down) / (2.0 * h);
      } else if (std::isfinite(up)) {
        g[i] = (up - fp) / h;
      } else if (std::isfinite(down)) {
        g[i] = (fp - down) / h;
      } else {
        return false;
      }
    }
    return true;
  };

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  std::vector<double> g, gn, p(k), xn(k), s(k), y(k);
  bool first = true;
  if (evals + 2 * k > max_evals || !gradient(x, fx, g)) {
    best.evaluations = evals;
    return best;
  }
  while (evals + 1 <= max_evals) {
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < 1e-14 || fx < 1e-24) break;

    for (std::size_t i = 0; i < k; ++i) {
      p[i] = 0.0;
      for (std::size_t j = 0; j < k; ++j) p[i] -= H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * g[j];
    }
    double slope = dot(g, p);
    if (!(slope < 0.0)) {
      H.setIdentity();
      for (std::size_t i = 0; i < k; ++i) p[i] = -g[i];
      slope = -dot(g, g);
    }

    double alpha = 1.0;
    double fn = kInfiniteNmse;
    bool accepted = false;
    for (int tries = 0; tries < 50 && evals + 1 <= max_evals; ++tries) {
      for (std::size_t i = 0; i < k; ++i) xn[i] = x[i] + alpha * p[i];
      fn = eval(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    if (evals + 2 * k > max_evals || !gradient(xn, fn, gn)) break;

    for (std::size_t i = 0; i < k; ++i) {
      s[i] = xn[i] - x[i];
      y[i] = gn[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-300 && std::isfinite(sy)) {
      if (first) {
        H *= sy / dot(y, y);
        first = false;
      }
      const double rho = 1.0 / sy;
      Eigen::Map<const Eigen::VectorXd> sv(s.data(), static_cast<Eigen::Index>(k));
      Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(k));
      const Eigen::VectorXd Hy = H * yv;
      const double yHy = yv.dot(Hy);
      H += ((1.0 + rho * yHy) * rho) * (sv * sv.transpose()) - rho * (Hy * sv.transpose() + sv * Hy.transpose());
    }
    const double decrease = fx - fn;
    x = xn;
    fx = fn;
    g = gn;
    if (decrease <= 1e-13 * fx) break;
  }
  best.evaluations = evals;
  return best;
}

FitResult fit(const FitProblem& problem) {
  FitResult result;
  const OdeSystem& sk = problem.skeleton;
  if (!sk.complete()) {
    result.error = "skeleton is incomplete";
    return result;
  }
  const std::size_t k = sk.constant_count();
  if (k > kMaxConstants) {
    result.error = "skeleton has more than " + std::to_string(kMaxConstants) + " constants";
    return result;
  }
  if (!problem.data || problem.data->empty()) throw UsageError("fit: data is empty");
  problem.options.validate();

  const CompiledSystem compiled(sk);
  const FitData& data = *problem.data;
  auto objective = [&](std::span<const double> c) { return fit_objective(compiled, c, data); };

  if (k == 0) {
    result.nmse = objective({});
    result.evaluations = 1;
    return result;
  }

  std::size_t remaining = problem.options.max_evals;
  std::vector<std::vector<double>> starts;
  // Warm start from slope matching. It integrates nothing, so it is not
  // charged to the budget.
  {
    const MinimizeResult warm = bfgs_minimize(
        [&](std::span<const double> c) { return slope_objective(compiled, c, data); }, std::vector<double>(k, 1.0),
        problem.options.max_evals);
    if (std::isfinite(warm.value)) starts.push_back(warm.x);
  }
  starts.emplace_back(k, 1.0);
  Rng rng = make_rng(problem.seed, {0x7374617274});
  std::uniform_real_distribution<double> u(-problem.options.restart_box, problem.options.restart_box);
  for (std::size_t r = 0; r < problem.options.restarts; ++r) {
    std::vector<double> c(k);
    for (double& v : c) v = u(rng);
    starts.push_back(std::move(c));
  }

  result.coefficients = starts.front();
  for (std::size_t i = 0; i < starts.size() && remaining > 0; ++i) {
    const std::size_t share = remaining / (starts.size() - i);
    if (share == 0) break;
    MinimizeResult m = bfgs_minimize(objective, starts[i], share);
    remaining -= std::min(remaining, m.evaluations);
    result.evaluations += m.evaluations;
    if (m.value < result.nmse) {
      result.nmse = m.value;
      result.coefficients = std::move(m.x);
    }
    if (result.nmse < kExactFit) break;
  }
  if (!result.finite()) result.error = "every start diverged";
  return result;
}

BatchFitResult fit_batch(std::span<const FitProblem> problems, std::size_t parallelism) {
  const auto t0 = std::chrono::steady_clock::now();
  BatchFitResult out;
  out.results.resize(problems.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= problems.size()) return;
      try {
        out.results[i] = fit(problems[i]);
      } catch (const std::exception& e) {
        out.results[i] = FitResult{};
        out.results[i].error = e.what();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(parallelism, 1), problems.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::size_t default_parallelism() {
  const unsigned hw = std::thread::hardware_concurrency();
  return std::clamp<std::size_t>(hw == 0 ? 1 : hw, 1, 20);
}

}  // namespace odesketch
