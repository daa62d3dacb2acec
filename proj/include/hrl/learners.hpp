#pragma once

// Value learners: n-step double DQN for the lock, high-level n-step SARSA and
// low-level 1-step SARSA for the (double) SHARSA agents. Loss functions are
// templated so the gradient checker can run them in double.

#include <string>
#include <vector>

#include "hrl/data.hpp"
#include "hrl/nn.hpp"

namespace hrl::learn {

enum class LossKind { regression, bce };
enum class DoubleQ { ddqn, cross, clipped };
enum class NstepCut { greedy, none };
enum class Aggregate { mean, min };

const char* to_string(LossKind k);
const char* to_string(DoubleQ k);
const char* to_string(NstepCut k);
const char* to_string(Aggregate k);
LossKind loss_kind_from_string(const std::string& s);
DoubleQ double_q_from_string(const std::string& s);
NstepCut nstep_cut_from_string(const std::string& s);
Aggregate aggregate_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Loss kernels. Each returns the batch-mean loss and, if `grads` is non-null,
// its gradient w.r.t. the network parameters.

// mean_k (Q(s_k, a_k) - y_k)^2, Q read from output column a_k.
template <class T>
T dqn_loss(const nn::MlpParams<T>& q, const nn::Mat<T>& s, const std::vector<int>& a, const nn::Vec<T>& y,
           nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads);

// Every output column (one per Q head) is fitted to the same label:
// mean over rows of the sum over heads of D(out, y). For bce, outputs are
// logits and labels must lie in [0, 1].
template <class T>
T value_loss(const nn::MlpParams<T>& net, const nn::Mat<T>& in, const nn::Vec<T>& y, LossKind kind,
             nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads);

// Scalar kernels with the names used in the paper's notation.
double bce_loss(double logit, double y);
double reg_loss(double x, double y);

// ---------------------------------------------------------------------------

struct DqnConfig {
  int state_dim = 0;
  int horizon = 0;  // lock size, used by the greedy n-step cut
  std::vector<int> hidden{128, 128};
  bool layer_norm = true;
  int n = 1;
  double gamma = 1.0;
  double lr = 3e-4;
  double tau = 0.005;
  DoubleQ double_q = DoubleQ::ddqn;
  NstepCut cut = NstepCut::greedy;
  int cut_refresh = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// Bootstrapped regression targets of one batch: y = rsum + disc * Qeval(s_boot).
struct DqnTargets {
  nn::MatF s_boot;
  nn::VecF rsum;
  nn::VecF disc;  // gamma^k, or 0 for terminal rows
  std::vector<int> a;
};

class DqnLearner {
 public:
  explicit DqnLearner(const DqnConfig& cfg);

  const DqnConfig& config() const { return cfg_; }

  // One gradient step on the online net(s) and a Polyak step on the targets.
  // Returns the TD loss of the batch before the update.
  float update(const data::Batch& b);

  // TD loss of a batch without touching parameters.
  float td_loss(const data::Batch& b) const;

  // Online Q values (head 0 for the two-network variants), batch x 2.
  nn::MatF q_values(const nn::MatF& states) const;

  // Greedy action table over lock indices, as used by the n-step cut.
  const std::vector<std::uint8_t>& greedy_table() const { return greedy_; }

  const nn::MlpParams<float>& online(int head = 0) const { return q_[head]; }
  nn::MlpParams<float>& online(int head = 0) { return q_[head]; }
  const nn::MlpParams<float>& target(int head = 0) const { return tq_[head]; }
  int heads() const { return static_cast<int>(q_.size()); }
  std::int64_t steps() const { return steps_; }

  void refresh_greedy_table();

 private:
  DqnTargets build_targets(const data::Batch& b) const;
  nn::VecF targets_for(const DqnTargets& t, int head) const;

  DqnConfig cfg_;
  std::vector<nn::MlpParams<float>> q_;
  std::vector<nn::MlpParams<float>> tq_;
  std::vector<nn::AdamState<float>> adam_;
  nn::MlpCache<float> cache_;
  nn::MlpGrads<float> grads_;
  std::vector<std::uint8_t> greedy_;
  nn::MatF all_codes_;
  std::int64_t steps_ = 0;
};

// ---------------------------------------------------------------------------

struct SarsaConfig {
  int state_dim = 0;
  int goal_dim = 0;
  int action_dim = 0;  // high level: the subgoal width (= goal_dim)
  std::vector<int> hidden{256, 256};
  bool layer_norm = true;
  int heads = 2;
  Aggregate aggregate = Aggregate::mean;
  LossKind loss = LossKind::bce;
  double lr = 3e-4;
  double tau = 0.005;
  std::uint64_t seed = 0;

  void validate() const;
};

// High level: s_h, w = phi(s_{h+n}), g, reward sums, discount of the bootstrap
// (gamma^eff, 0 when done) and the bootstrap state s_{h+eff}.
struct HighBatch {
  nn::MatF s;
  nn::MatF w;
  nn::MatF g;
  nn::VecF rsum;
  nn::VecF disc;
  nn::MatF s_boot;
};

// Low level: s_h, a_h, s_{h+1}, w; hit flags mark r(s_h, w) and r(s_{h+1}, w).
struct LowBatch {
  nn::MatF s;
  nn::MatF a;
  nn::MatF s_next;
  nn::MatF w;
  nn::VecF hit_now;
  nn::VecF hit_next;
};

struct SarsaLosses {
  float v_loss = 0.0f;
  float q_loss = 0.0f;
};

// V(x, c) with input [x, c] and Q(x, u, c) with input [x, u, c], trained by
// V <- aggregated target Q on the same (x, u, c), Q <- label. Shared by both
// levels: the high level uses (s, w, g), the low level (s, a, w).
class SarsaNets {
 public:
  explicit SarsaNets(const SarsaConfig& cfg);

  const SarsaConfig& config() const { return cfg_; }

  // Aggregated Q score (logit for bce) of rows [x, u, c].
  nn::VecF q_score(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const;
  nn::VecF q_score_target(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const;
  // V in value space (sigmoid applied for bce).
  nn::VecF v_value(const nn::MatF& x, const nn::MatF& c) const;

  float v_step(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c, double lr);
  float q_step(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c, const nn::VecF& label, double lr);
  void polyak();

  float v_loss(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const;
  float q_loss(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c, const nn::VecF& label) const;

  const nn::MlpParams<float>& v_net() const { return v_; }
  const nn::MlpParams<float>& q_net() const { return q_; }
  const nn::MlpParams<float>& q_target() const { return tq_; }
  nn::MlpParams<float>& v_net() { return v_; }
  nn::MlpParams<float>& q_net() { return q_; }
  nn::MlpParams<float>& q_target() { return tq_; }

 private:
  nn::VecF v_label(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const;

  SarsaConfig cfg_;
  nn::MlpParams<float> v_;
  nn::MlpParams<float> q_;
  nn::MlpParams<float> tq_;
  nn::AdamState<float> v_adam_;
  nn::AdamState<float> q_adam_;
  nn::MlpCache<float> cache_;
  nn::MlpGrads<float> grads_;
};

class SarsaHigh {
 public:
  SarsaHigh(const SarsaConfig& cfg, data::RewardKind reward_kind);

  // V then Q, then the Polyak step. Returns the pre-update losses.
  SarsaLosses update(const HighBatch& b);
  SarsaLosses losses(const HighBatch& b) const;
  nn::VecF q_label(const HighBatch& b) const;

  const SarsaNets& nets() const { return nets_; }
  SarsaNets& nets() { return nets_; }

 private:
  SarsaNets nets_;
};

class SarsaLow {
 public:
  SarsaLow(const SarsaConfig& cfg, data::RewardKind reward_kind, int n);

  double gamma_tilde() const { return gamma_tilde_; }
  SarsaLosses update(const LowBatch& b);
  SarsaLosses losses(const LowBatch& b) const;
  nn::VecF q_label(const LowBatch& b) const;

  const SarsaNets& nets() const { return nets_; }
  SarsaNets& nets() { return nets_; }

 private:
  SarsaNets nets_;
  data::RewardKind reward_kind_;
  double gamma_tilde_;
};

// Label clamp for bce soft labels.
nn::VecF clamp_labels(nn::VecF y, LossKind kind);

// [a, b, c] column concatenation.
nn::MatF hcat(const nn::MatF& a, const nn::MatF& b);
nn::MatF hcat(const nn::MatF& a, const nn::MatF& b, const nn::MatF& c);

}  // namespace hrl::learn
