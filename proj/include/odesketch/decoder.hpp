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
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "odesketch/grammar.hpp"

namespace odesketch {

/// Single-layer GRU policy over a rule vocabulary. Token `vocab` is the
/// start symbol. All parameters live in one flat vector laid out as
/// embedding (d_emb x vocab+1), W (3h x d_emb), U (3h x h), b (3h),
/// V (vocab x h), c (vocab); matrices are column-major.
class Policy {
 public:
  Policy(std::size_t vocab, std::size_t d_emb = 256, std::size_t d_hidden = 256);

  /// Uniform in [-scale, scale], deterministic in the seed.
  static Policy random(std::size_t vocab, std::size_t d_emb, std::size_t d_hidden, std::uint64_t seed,
                       double scale = 0.05);
  static Policy zeros(std::size_t vocab, std::size_t d_emb, std::size_t d_hidden);

  std::size_t vocab() const { return vocab_; }
  std::size_t d_emb() const { return d_emb_; }
  std::size_t d_hidden() const { return d_hidden_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }
  std::uint32_t start_token() const { return static_cast<std::uint32_t>(vocab_); }

  const Eigen::VectorXd& theta() const { return theta_; }
  Eigen::VectorXd& theta() { return theta_; }
  bool finite() const { return theta_.allFinite(); }

  /// Distribution of the rule that follows `prefix`.
  Eigen::VectorXd next_distribution(const RuleSequence& prefix) const;

  /// Teacher-forced sum of log p(s_t | s_<t).
  double logprob(const RuleSequence& seq) const;

  /// log p(seq) and its exact gradient (overwrites `grad`).
  double logprob_and_grad(const RuleSequence& seq, Eigen::VectorXd& grad) const;

  /// sum_i weights[i] * log p(seqs[i]) and its gradient (overwrites `grad`).
  double weighted_logprob_grad(std::span<const RuleSequence> seqs, std::span<const double> weights,
                               Eigen::VectorXd& grad) const;

  friend bool operator==(const Policy& a, const Policy& b) {
    return a.vocab_ == b.vocab_ && a.d_emb_ == b.d_emb_ && a.d_hidden_ == b.d_hidden_ && a.theta_ == b.theta_;
  }

 private:
  std::size_t vocab_;
  std::size_t d_emb_;
  std::size_t d_hidden_;
  Eigen::VectorXd theta_;
};

struct SampledBatch {
  std::vector<RuleSequence> sequences;
  std::vector<double> logprobs;
  std::vector<double> rewards;

  std::size_t size() const { return sequences.size(); }
};

enum class SampleMode { Stochastic, Argmax };

/// Samples N sequences; each stops at max_len or once its system has no
/// open nonterminals.
SampledBatch sample_sequences(const Policy& policy, const Grammar& grammar, std::size_t count,
                              std::size_t max_len, Rng& rng, SampleMode mode = SampleMode::Stochastic);

/// Grammar-free variant: every sequence has exactly `length` tokens.
SampledBatch sample_fixed_length(const Policy& policy, std::size_t count, std::size_t length, Rng& rng,
                                 SampleMode mode = SampleMode::Stochastic);

/// (1/N) sum_i (r_i - mean r) grad log p(s_i).
Eigen::VectorXd policy_gradient(const Policy& policy, const SampledBatch& batch);

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.009;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
};

/// Gradient-ascent optimizer state.
class PolicyOptimizer {
 public:
  explicit PolicyOptimizer(OptimizerConfig config = {}) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  /// Clips `grad` to the configured norm and ascends. Returns false (no
  /// change) when the gradient is non-finite or exactly zero.
  bool step(Policy& policy, Eigen::VectorXd grad);

 private:
  OptimizerConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::uint64_t steps_ = 0;
};

struct UpdateStats {
  double mean_reward = 0.0;
  double max_reward = 0.0;
  double grad_norm = 0.0;
  bool applied = false;
  bool nonfinite = false;
};

UpdateStats reinforce_update(Policy& policy, PolicyOptimizer& optimizer, const SampledBatch& batch);

/// Versioned text checkpoint tagged with the grammar fingerprint.
void save_policy(std::ostream& out, const Policy& policy, std::uint64_t fingerprint);
Policy load_policy(std::istream& in, std::uint64_t expected_fingerprint);

}  // namespace odesketch
