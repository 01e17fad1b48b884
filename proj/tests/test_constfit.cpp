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

#include <cmath>

#include "doctest.h"
#include "odesketch/constfit.hpp"
#include "odesketch/oracle.hpp"

using namespace odesketch;

namespace {

std::vector<Trajectory> noiseless(const char* text, Domain domain, std::size_t count, double horizon = 1.0,
                                  double alpha = 0.0) {
  OracleConfig c;
  c.system = parse_system(text);
  c.domain = std::move(domain);
  c.alpha = alpha;
  c.seed = 17;
  Oracle o(c);
  return o.sample_training_batch(count, horizon, 0.01);
}

FitProblem problem(const char* skeleton, std::shared_ptr<const FitData> data, std::uint64_t seed = 1) {
  return FitProblem{parse_system(skeleton).to_skeleton().with_coefficients({}), std::move(data), FitOptions{}, seed};
}

}  // namespace

TEST_CASE("bfgs minimizes the Rosenbrock function") {
  auto rosen = [](std::span<const double> x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  const MinimizeResult r = bfgs_minimize(rosen, {-1.2, 1.0}, 2000);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.value < 1e-10);
  CHECK(r.evaluations <= 2000);
}

TEST_CASE("bfgs respects the evaluation budget and survives infinities") {
  std::size_t calls = 0;
  auto f = [&](std::span<const double> x) {
    ++calls;
    return x[0] > 2.0 ? kInfiniteNmse : (x[0] - 1.0) * (x[0] - 1.0);
  };
  const MinimizeResult r = bfgs_minimize(f, {0.0}, 50);
  CHECK(calls <= 50);
  CHECK(r.evaluations == calls);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("fit data keeps aligned points and respects the point cap") {
  const auto data = noiseless("-0.5*x0", Domain::cube(1), 10);  // 100 rows each
  const FitData all = make_fit_data(data, 0.05, 0, 0);
  CHECK(all.trajectories.size() == 10);
  CHECK(all.points() == 200);
  CHECK(all.trajectories[0].grid.times.front() == doctest::Approx(0.05));
  CHECK(all.variances[0] == doctest::Approx(pooled_variance(data[0])));
  const FitData capped = make_fit_data(data, 0.01, 250, 3);
  CHECK(capped.points() == 200);
  CHECK(make_fit_data(data, 0.01, 250, 3).trajectories == capped.trajectories);
  const FitData one = make_fit_data(data, 0.01, 40, 3);
  CHECK(one.points() == 40);
  CHECK_THROWS_AS(make_fit_data(data, 0.0, 0, 0), UsageError);
}

TEST_CASE("fit objective is zero at the truth and positive elsewhere") {
  const auto data = std::make_shared<const FitData>(make_fit_data(noiseless("-0.5*x0", Domain::cube(1), 5), 0.01, 0, 0));
  const CompiledSystem sk(parse_system("0.5*x0").to_skeleton());
  CHECK(fit_objective(sk, std::vector<double>{-0.5}, *data) < 1e-20);
  CHECK(fit_objective(sk, std::vector<double>{-0.4}, *data) > 1e-4);
  // x' = 30 x leaves the finite range within the horizon.
  CHECK(fit_objective(sk, std::vector<double>{30.0}, *data) == kInfiniteNmse);
}

TEST_CASE("fit recovers constants of linear and nonlinear skeletons") {
  struct Case {
    const char* truth;
    Domain domain;
  };
  const std::vector<Case> cases = {
      {"-0.5*x0 + 1.5", Domain::cube(1)},
      {"2.1*x0 - 0.5*x0^2", Domain::cube(1, 0.1, 5.0)},
      {"x1 ; -2.1*x0 - 0.43*x1", Domain::cube(2)},
      {"0.7*sin(x0) - 0.2*x0", Domain::cube(1)},
  };
  for (const auto& c : cases) {
    CAPTURE(c.truth);
    const auto data = std::make_shared<const FitData>(make_fit_data(noiseless(c.truth, c.domain, 10), 0.01, 0, 0));
    const FitResult r = fit(problem(c.truth, data));
    const auto want = parse_system(c.truth).to_skeleton().coefficients();
    REQUIRE(r.coefficients.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(r.coefficients[k] == doctest::Approx(want[k]).epsilon(1e-5));
    CHECK(r.nmse < 1e-10);
    CHECK(r.error.empty());
  }
}

TEST_CASE("fit handles skeletons whose unit start blows up") {
  // With c = (1, 1) the field 1 - x^2 escapes to -inf for x < -1.
  const auto data =
      std::make_shared<const FitData>(make_fit_data(noiseless("9.81 - 0.0021175*x0^2", Domain::cube(1), 10), 0.01, 0, 0));
  const FitResult r = fit(problem("9.81 - 0.0021175*x0^2", data));
  REQUIRE(r.finite());
  CHECK(r.coefficients[1] == doctest::Approx(0.0021175).epsilon(1e-4));
}

TEST_CASE("fit works on irregularly sampled data") {
  const auto data = std::make_shared<const FitData>(
      make_fit_data(noiseless("-0.8*x0 + 0.3", Domain::cube(1), 10, 1.0, 0.5), 0.01, 0, 0));
  const FitResult r = fit(problem("-0.8*x0 + 0.3", data));
  CHECK(r.coefficients[0] == doctest::Approx(-0.8).epsilon(1e-6));
  CHECK(r.coefficients[1] == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("fit edge cases") {
  const auto data = std::make_shared<const FitData>(make_fit_data(noiseless("-x0", Domain::cube(1), 3), 0.01, 0, 0));
  // No constants: a single evaluation.
  const FitResult none = fit(FitProblem{parse_system("-1*x0"), data, FitOptions{}, 0});
  CHECK(none.evaluations == 1);
  CHECK(none.nmse < 1e-12);
  // Incomplete skeleton.
  const OdeSystem open({ExpressionTree::leaf(Node::nonterminal(0))});
  CHECK_FALSE(fit(FitProblem{open, data, FitOptions{}, 0}).error.empty());
  // Empty data is a usage error.
  CHECK_THROWS_AS(fit(FitProblem{parse_system("-1*x0"), std::make_shared<const FitData>(), FitOptions{}, 0}),
                  UsageError);
  FitOptions bad;
  bad.max_evals = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("batch fitting keeps order and ignores the thread count") {
  const auto data = std::make_shared<const FitData>(
      make_fit_data(noiseless("x1 ; -2.1*x0 - 0.43*x1", Domain::cube(2), 6), 0.01, 0, 0));
  std::vector<FitProblem> probs;
  for (const char* s : {"0.5*x1 ; 0.5*x0 + 0.5*x1", "0.5*x0 ; 0.5*x1", "0.5*sin(x1) ; 0.5*x0", "0.5*x1 ; 0.5*x0"}) {
    probs.push_back(problem(s, data, probs.size()));
  }
  const BatchFitResult one = fit_batch(probs, 1);
  const BatchFitResult three = fit_batch(probs, 3);
  REQUIRE(one.results.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(one.results[i].coefficients == three.results[i].coefficients);
    CHECK(one.results[i].nmse == three.results[i].nmse);
    CHECK(one.results[i].nmse == fit(probs[i]).nmse);
  }
  CHECK(one.results[0].nmse < 1e-10);
  CHECK(one.results[1].nmse > 1e-3);
  CHECK(default_parallelism() >= 1);
  CHECK(default_parallelism() <= 20);
}

TEST_CASE("small fits with known answers") {
  SUBCASE("growth rate") {
    const auto data = std::make_shared<const FitData>(make_fit_data(noiseless("0.23*x0", Domain::cube(1), 10), 0.01, 0, 0));
    const FitResult r = fit(problem("0.5*x0", data));
    CHECK(r.coefficients[0] >= 0.2277);
    CHECK(r.coefficients[0] <= 0.2323);
  }
  SUBCASE("stationary") {
    const auto data = std::make_shared<const FitData>(make_fit_data(noiseless("0*x0", Domain::cube(1), 5), 0.01, 0, 0));
    const FitResult r = fit(problem("0.5", data));
    CHECK(std::abs(r.coefficients[0]) < 1e-6);
    CHECK(r.nmse < 1e-10);
  }
  SUBCASE("pendulum") {
    const auto data = std::make_shared<const FitData>(
        make_fit_data(noiseless("x1 ; -0.9*sin(x0)", Domain::cube(2), 10), 0.01, 0, 0));
    const FitResult r = fit(problem("x1 ; 0.5*sin(x0)", data));
    CHECK(r.coefficients[0] >= -0.909);
    CHECK(r.coefficients[0] <= -0.891);
  }
}

TEST_CASE("one bad skeleton does not affect the rest of a batch") {
  const auto data = std::make_shared<const FitData>(make_fit_data(noiseless("-0.5*x0", Domain::cube(1), 4), 0.01, 0, 0));
  std::vector<FitProblem> probs = {problem("0.1*x0", data), FitProblem{OdeSystem({ExpressionTree::leaf(Node::nonterminal(0))}), data, {}, 0},
                                   problem("0.1*x0 + 0.1", data)};
  const BatchFitResult r = fit_batch(probs, 2);
  REQUIRE(r.results.size() == 3);
  CHECK(r.results[0].nmse < 1e-10);
  CHECK(r.results[1].nmse == kInfiniteNmse);
  CHECK(r.results[2].nmse < 1e-10);
}
