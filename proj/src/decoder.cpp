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

#include "odesketch/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace odesketch {

namespace {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;
using CVec = Eigen::Map<const VectorXd>;
using MVec = Eigen::Map<VectorXd>;

constexpr const char* kCheckpointMagic = "odesketch-policy";
constexpr int kCheckpointVersion = 1;

struct Layout {
  std::size_t vocab, emb, hid;
  std::size_t e_off, w_off, u_off, b_off, v_off, c_off, total;

  Layout(std::size_t v, std::size_t e, std::size_t h) : vocab(v), emb(e), hid(h) {
    e_off = 0;
    w_off = e_off + emb * (vocab + 1);
    u_off = w_off + 3 * hid * emb;
    b_off = u_off + 3 * hid * hid;
    v_off = b_off + 3 * hid;
    c_off = v_off + vocab * hid;
    total = c_off + vocab;
  }
};

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

/// Read-only views of the parameter blocks.
struct Weights {
  CMap E, W, U;
  CVec b;
  CMap V;
  CVec c;

  Weights(const Layout& L, const double* t)
      : E(t + L.e_off, ix(L.emb), ix(L.vocab + 1)),
        W(t + L.w_off, ix(3 * L.hid), ix(L.emb)),
        U(t + L.u_off, ix(3 * L.hid), ix(L.hid)),
        b(t + L.b_off, ix(3 * L.hid)),
        V(t + L.v_off, ix(L.vocab), ix(L.hid)),
        c(t + L.c_off, ix(L.vocab)) {}
};

struct Step {
  std::vector<std::uint32_t> tokens;  // inputs at this step
  MatrixXd h_prev, z, r, n, gh_n, h;
  MatrixXd logp;  // vocab x B
};

ArrayXXd sigmoid(const ArrayXXd& a) { return (1.0 + (-a).exp()).inverse(); }

/// Runs the cell over batch columns. `proj` holds W E + b for every token.
class Runner {
 public:
  Runner(const Policy& p)
      : layout_(p.vocab(), p.d_emb(), p.d_hidden()), w_(layout_, p.theta().data()) {
    proj_ = w_.W * w_.E;
    proj_.colwise() += w_.b;
  }

  const Layout& layout() const { return layout_; }
  const Weights& weights() const { return w_; }
  const MatrixXd& proj() const { return proj_; }

  /// Advances `step.h_prev` by the inputs in `step.tokens`, filling the
  /// cached activations and column log-probabilities.
  void advance(Step& step) const {
    const auto h = ix(layout_.hid);
    const auto B = ix(step.tokens.size());
    MatrixXd gx(3 * h, B);
    for (Eigen::Index i = 0; i < B; ++i) gx.col(i) = proj_.col(step.tokens[static_cast<std::size_t>(i)]);
    MatrixXd gh = w_.U * step.h_prev;
    step.z = sigmoid(gx.topRows(h).array() + gh.topRows(h).array()).matrix();
    step.r = sigmoid(gx.middleRows(h, h).array() + gh.middleRows(h, h).array()).matrix();
    step.gh_n = gh.bottomRows(h);
    step.n = (gx.bottomRows(h).array() + step.r.array() * step.gh_n.array()).tanh().matrix();
    step.h = ((1.0 - step.z.array()) * step.n.array() + step.z.array() * step.h_prev.array()).matrix();
    MatrixXd logits = w_.V * step.h;
    logits.colwise() += w_.c;
    for (Eigen::Index i = 0; i < B; ++i) {
      const double mx = logits.col(i).maxCoeff();
      const double lse = mx + std::log((logits.col(i).array() - mx).exp().sum());
      logits.col(i).array() -= lse;
    }
    step.logp = std::move(logits);
  }

 private:
  Layout layout_;
  Weights w_;
  MatrixXd proj_;
};

std::uint32_t draw(const Eigen::Ref<const VectorXd>& logp, Rng& rng, SampleMode mode) {
  const auto V = static_cast<std::size_t>(logp.size());
  if (mode == SampleMode::Argmax) {
    Eigen::Index best = 0;
    logp.maxCoeff(&best);
    return static_cast<std::uint32_t>(best);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double target = u(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < V; ++k) {
    acc += std::exp(logp(ix(k)));
    if (target < acc) return static_cast<std::uint32_t>(k);
  }
  return static_cast<std::uint32_t>(V - 1);
}

template <typename Done>
SampledBatch sample_impl(const Policy& policy, std::size_t count, std::size_t max_len, Rng& rng, SampleMode mode,
                         Done&& on_token) {
  Runner run(policy);
  SampledBatch batch;
  batch.sequences.assign(count, {});
  batch.logprobs.assign(count, 0.0);
  std::vector<bool> active(count, true);
  Step step;
  step.tokens.assign(count, policy.start_token());
  step.h_prev = MatrixXd::Zero(ix(policy.d_hidden()), ix(count));
  for (std::size_t t = 0; t < max_len; ++t) {
    if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) break;
    run.advance(step);
    for (std::size_t i = 0; i < count; ++i) {
      if (!active[i]) continue;
      const std::uint32_t tok = draw(step.logp.col(ix(i)), rng, mode);
      batch.sequences[i].push_back(tok);
      batch.logprobs[i] += step.logp(ix(tok), ix(i));
      step.tokens[i] = tok;
      if (on_token(i, tok)) active[i] = false;
    }
    step.h_prev = std::move(step.h);
  }
  batch.rewards.assign(count, 0.0);
  return batch;
}

}  // namespace

Policy::Policy(std::size_t vocab, std::size_t d_emb, std::size_t d_hidden)
    : vocab_(vocab), d_emb_(d_emb), d_hidden_(d_hidden) {
  if (vocab == 0 || d_emb == 0 || d_hidden == 0) throw ConfigError("policy dimensions must be >= 1");
  theta_ = VectorXd::Zero(ix(Layout(vocab, d_emb, d_hidden).total));
}

Policy Policy::random(std::size_t vocab, std::size_t d_emb, std::size_t d_hidden, std::uint64_t seed,
                      double scale) {
  Policy p(vocab, d_emb, d_hidden);
  Rng rng = make_rng(seed, {0x706f6c});
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Eigen::Index i = 0; i < p.theta_.size(); ++i) p.theta_(i) = u(rng);
  return p;
}

Policy Policy::zeros(std::size_t vocab, std::size_t d_emb, std::size_t d_hidden) {
  return Policy(vocab, d_emb, d_hidden);
}

VectorXd Policy::next_distribution(const RuleSequence& prefix) const {
  Runner run(*this);
  Step step;
  step.tokens = {start_token()};
  step.h_prev = MatrixXd::Zero(ix(d_hidden_), 1);
  for (std::size_t t = 0;; ++t) {
    run.advance(step);
    if (t == prefix.size()) break;
    step.tokens[0] = prefix[t];
    step.h_prev = std::move(step.h);
  }
  return step.logp.col(0).array().exp().matrix();
}

double Policy::logprob(const RuleSequence& seq) const {
  Runner run(*this);
  Step step;
  step.tokens = {start_token()};
  step.h_prev = MatrixXd::Zero(ix(d_hidden_), 1);
  double total = 0.0;
  for (std::uint32_t tok : seq) {
    if (tok >= vocab_) throw UsageError("rule id outside the policy vocabulary");
    run.advance(step);
    total += step.logp(ix(tok), 0);
    step.tokens[0] = tok;
    step.h_prev = std::move(step.h);
  }
  return total;
}

double Policy::logprob_and_grad(const RuleSequence& seq, VectorXd& grad) const {
  const double one = 1.0;
  return weighted_logprob_grad(std::span<const RuleSequence>(&seq, 1), std::span<const double>(&one, 1), grad);
}

double Policy::weighted_logprob_grad(std::span<const RuleSequence> seqs, std::span<const double> weights,
                                     VectorXd& grad) const {
  if (seqs.size() != weights.size()) throw UsageError("one weight per sequence is required");
  const Runner run(*this);
  const Layout& L = run.layout();
  const Weights& w = run.weights();
  const auto h = ix(d_hidden_);
  const auto B = ix(seqs.size());
  std::size_t T = 0;
  for (const auto& s : seqs) {
    T = std::max(T, s.size());
    for (auto tok : s) {
      if (tok >= vocab_) throw UsageError("rule id outside the policy vocabulary");
    }
  }

  grad = VectorXd::Zero(theta_.size());
  if (B == 0 || T == 0) return 0.0;

  // Forward pass with cached activations.
  std::vector<Step> steps(T);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    Step& st = steps[t];
    st.tokens.resize(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      st.tokens[i] = t == 0 ? start_token() : (t - 1 < seqs[i].size() ? seqs[i][t - 1] : start_token());
    }
    st.h_prev = t == 0 ? MatrixXd::Zero(h, B) : steps[t - 1].h;
    run.advance(st);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      if (t < seqs[i].size()) total += weights[i] * st.logp(ix(seqs[i][t]), ix(i));
    }
  }

  MMap dE(grad.data() + L.e_off, ix(L.emb), ix(L.vocab + 1));
  MMap dW(grad.data() + L.w_off, 3 * h, ix(L.emb));
  MMap dU(grad.data() + L.u_off, 3 * h, h);
  MVec db(grad.data() + L.b_off, 3 * h);
  MMap dV(grad.data() + L.v_off, ix(L.vocab), h);
  MVec dc(grad.data() + L.c_off, ix(L.vocab));
  MatrixXd dproj = MatrixXd::Zero(3 * h, ix(L.vocab + 1));

  MatrixXd dh = MatrixXd::Zero(h, B);
  MatrixXd dlogit(ix(L.vocab), B);
  MatrixXd dgx(3 * h, B), dgh(3 * h, B);
  for (std::size_t t = T; t-- > 0;) {
    Step& st = steps[t];
    // d(w log softmax)/d logits = w (onehot - p).
    dlogit.setZero();
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      if (t >= seqs[i].size() || weights[i] == 0.0) continue;
      dlogit.col(ix(i)) = -weights[i] * st.logp.col(ix(i)).array().exp().matrix();
      dlogit(ix(seqs[i][t]), ix(i)) += weights[i];
    }
    dV.noalias() += dlogit * st.h.transpose();
    dc += dlogit.rowwise().sum();
    dh.noalias() += w.V.transpose() * dlogit;

    const ArrayXXd z = st.z.array(), r = st.r.array(), n = st.n.array();
    const ArrayXXd dn = dh.array() * (1.0 - z);
    const ArrayXXd dz = dh.array() * (st.h_prev.array() - n);
    const ArrayXXd dan = dn * (1.0 - n * n);
    const ArrayXXd daz = dz * z * (1.0 - z);
    const ArrayXXd dr = dan * st.gh_n.array();
    const ArrayXXd dar = dr * r * (1.0 - r);
    dgx.topRows(h) = daz.matrix();
    dgx.middleRows(h, h) = dar.matrix();
    dgx.bottomRows(h) = dan.matrix();
    dgh.topRows(h) = daz.matrix();
    dgh.middleRows(h, h) = dar.matrix();
    dgh.bottomRows(h) = (dan * r).matrix();

    dU.noalias() += dgh * st.h_prev.transpose();
    MatrixXd dh_prev = (dh.array() * z).matrix();
    dh_prev.noalias() += w.U.transpose() * dgh;
    dh = std::move(dh_prev);
    for (std::size_t i = 0; i < seqs.size(); ++i) dproj.col(st.tokens[i]) += dgx.col(ix(i));
  }
  // proj = W E + b 1^T.
  dW.noalias() = dproj * w.E.transpose();
  dE.noalias() = w.W.transpose() * dproj;
  db = dproj.rowwise().sum();
  return total;
}

SampledBatch sample_sequences(const Policy& policy, const Grammar& grammar, std::size_t count,
                              std::size_t max_len, Rng& rng, SampleMode mode) {
  if (grammar.size() != policy.vocab()) throw UsageError("policy vocabulary does not match the grammar");
  std::vector<ExpansionTracker> trackers(count, ExpansionTracker(grammar));
  return sample_impl(policy, count, max_len, rng, mode, [&](std::size_t i, std::uint32_t tok) {
    trackers[i].apply(tok);
    return trackers[i].complete();
  });
}

SampledBatch sample_fixed_length(const Policy& policy, std::size_t count, std::size_t length, Rng& rng,
                                 SampleMode mode) {
  return sample_impl(policy, count, length, rng, mode, [](std::size_t, std::uint32_t) { return false; });
}

VectorXd policy_gradient(const Policy& policy, const SampledBatch& batch) {
  const std::size_t N = batch.size();
  if (batch.rewards.size() != N) throw UsageError("batch rewards are not populated");
  VectorXd grad;
  if (N == 0) return VectorXd::Zero(policy.theta().size());
  // Equal rewards carry no signal. The rounded baseline would leave a tiny
  // residual that Adam's normalization turns into a full step.
  const auto [lo, hi] = std::minmax_element(batch.rewards.begin(), batch.rewards.end());
  if (*lo == *hi) return VectorXd::Zero(policy.theta().size());
  double baseline = 0.0;
  for (double r : batch.rewards) baseline += r;
  baseline /= static_cast<double>(N);
  std::vector<double> weights(N);
  for (std::size_t i = 0; i < N; ++i) weights[i] = (batch.rewards[i] - baseline) / static_cast<double>(N);
  policy.weighted_logprob_grad(batch.sequences, weights, grad);
  return grad;
}

bool PolicyOptimizer::step(Policy& policy, VectorXd grad) {
  if (!grad.allFinite()) return false;
  const double norm = grad.norm();
  if (norm == 0.0) return false;
  if (norm > config_.clip_norm) grad *= config_.clip_norm / norm;
  VectorXd& theta = policy.theta();
  if (config_.kind == OptimizerKind::Sgd) {
    theta += config_.lr * grad;
  } else {
    if (m_.size() != theta.size()) {
      m_ = VectorXd::Zero(theta.size());
      v_ = VectorXd::Zero(theta.size());
    }
    const double t = static_cast<double>(steps_ + 1);
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    theta.array() += config_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
  }
  ++steps_;
  return true;
}

UpdateStats reinforce_update(Policy& policy, PolicyOptimizer& optimizer, const SampledBatch& batch) {
  UpdateStats stats;
  if (batch.size() == 0) return stats;
  for (double r : batch.rewards) {
    if (!(r >= 0.0 && r <= 1.0)) throw UsageError("rewards must lie in [0, 1]");
    stats.mean_reward += r;
    stats.max_reward = std::max(stats.max_reward, r);
  }
  stats.mean_reward /= static_cast<double>(batch.size());
  VectorXd grad = policy_gradient(policy, batch);
  stats.grad_norm = grad.norm();
  stats.nonfinite = !grad.allFinite();
  const VectorXd before = stats.nonfinite ? VectorXd() : policy.theta();
  stats.applied = optimizer.step(policy, std::move(grad));
  if (stats.applied && !policy.finite()) {
    policy.theta() = before;
    stats.applied = false;
    stats.nonfinite = true;
  }
  return stats;
}

void save_policy(std::ostream& out, const Policy& policy, std::uint64_t fingerprint) {
  out << kCheckpointMagic << " " << kCheckpointVersion << "\n";
  out << "fingerprint " << std::hex << fingerprint << std::dec << "\n";
  out << "shape " << policy.vocab() << " " << policy.d_emb() << " " << policy.d_hidden() << "\n";
  const auto& theta = policy.theta();
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << format_double(theta(i)) << "\n";
  if (!out) throw IoError("failed to write policy checkpoint");
}

Policy load_policy(std::istream& in, std::uint64_t expected_fingerprint) {
  std::string magic, key;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) throw ParseError("not a policy checkpoint", 0);
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  std::uint64_t fingerprint = 0;
  if (!(in >> key >> std::hex >> fingerprint >> std::dec) || key != "fingerprint") {
    throw ParseError("checkpoint is missing its grammar fingerprint", 0);
  }
  if (fingerprint != expected_fingerprint) throw ConfigError("checkpoint was trained on a different grammar");
  std::size_t vocab = 0, emb = 0, hid = 0;
  if (!(in >> key >> vocab >> emb >> hid) || key != "shape") throw ParseError("checkpoint is missing its shape", 0);
  Policy p(vocab, emb, hid);
  std::string token;
  for (Eigen::Index i = 0; i < p.theta().size(); ++i) {
    if (!(in >> token)) throw ParseError("checkpoint is truncated", 0);
    p.theta()(i) = parse_double(token);
  }
  return p;
}

}  // namespace odesketch
