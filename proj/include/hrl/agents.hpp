#pragma once

// Goal-conditioned maze agents: flat flow BC, hierarchical flow BC, SHARSA
// and double SHARSA. All components train from one loop; the acting modes
// share the trained networks.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hrl/data.hpp"
#include "hrl/envs.hpp"
#include "hrl/evalkit.hpp"
#include "hrl/flow.hpp"
#include "hrl/learners.hpp"

namespace hrl::agents {

enum class Method { fbc, hfbc, sharsa, dsharsa };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

// Isotropic map of world positions into [-1, 1]^2 and of actions into
// [-1, 1]^2 (division by d_max).
struct Normalizer {
  float cx = 0.0f, cy = 0.0f, half = 1.0f, action_scale = 1.0f;

  static Normalizer for_maze(const envs::MazeSpec& spec);
  nn::MatF state(const nn::MatF& raw) const;
  nn::MatF state_inv(const nn::MatF& norm) const;
  nn::MatF action(const nn::MatF& raw) const;
  nn::MatF action_inv(const nn::MatF& norm) const;
};

struct AgentConfig {
  int n = 25;                 // segment length / horizon reduction factor
  int rs_n = 32;              // rejection-sampling candidates N
  int subgoal_period = 0;     // 0 -> n
  std::vector<int> actor_hidden{256, 256};
  std::vector<int> value_hidden{256, 256};
  bool layer_norm = true;
  double lr = 3e-4;
  double tau = 0.005;
  double gamma = 0.99;
  learn::LossKind loss = learn::LossKind::bce;
  int q_heads = 2;
  learn::Aggregate aggregate = learn::Aggregate::mean;
  data::GoalSampleConfig actor_goals{0.0, 1.0, 0.0, 0.0, 0.99};  // flat BC
  data::GoalSampleConfig hier_goals{0.0, 0.0, 1.0, 0.0, 0.99};   // pi_high, pi_low, low-level values
  data::GoalSampleConfig value_goals{0.2, 0.0, 0.5, 0.3, 0.99};
  int flow_steps = 10;
  std::size_t batch = 256;
  std::uint64_t seed = 0;

  bool train_flat = true;
  bool train_hier = true;
  bool train_value_high = true;
  bool train_value_low = false;

  int period() const { return subgoal_period > 0 ? subgoal_period : n; }
  data::RewardKind reward_kind() const {
    return loss == learn::LossKind::bce ? data::RewardKind::zero_one : data::RewardKind::minus_one_zero;
  }
  void validate() const;
};

// Which components a set of methods needs.
void enable_components(AgentConfig& cfg, const std::vector<Method>& methods);

struct TrainMetrics {
  float flat_loss = 0.0f;
  float high_flow_loss = 0.0f;
  float low_flow_loss = 0.0f;
  float v_high_loss = 0.0f;
  float q_high_loss = 0.0f;
  float v_low_loss = 0.0f;
  float q_low_loss = 0.0f;
};

class MazeAgent {
 public:
  MazeAgent(const envs::MazeSpec& spec, const AgentConfig& cfg);

  const AgentConfig& config() const { return cfg_; }
  const envs::MazeSpec& spec() const { return spec_; }
  const Normalizer& normalizer() const { return norm_; }

  // One batch per trained component; returns the pre-update losses.
  TrainMetrics train_step(const data::Dataset& ds, Rng& rng);

  // Losses of freshly sampled batches without updating anything.
  TrainMetrics eval_losses(const data::Dataset& ds, Rng& rng) const;

  const flow::FlowTrainer* flat() const { return flat_.get(); }
  const flow::FlowTrainer* high() const { return high_.get(); }
  const flow::FlowTrainer* low() const { return low_.get(); }
  const learn::SarsaHigh* sarsa_high() const { return sarsa_high_.get(); }
  const learn::SarsaLow* sarsa_low() const { return sarsa_low_.get(); }
  learn::SarsaHigh* sarsa_high() { return sarsa_high_.get(); }
  learn::SarsaLow* sarsa_low() { return sarsa_low_.get(); }
  flow::FlowTrainer* high() { return high_.get(); }
  flow::FlowTrainer* low() { return low_.get(); }

  // Combined parameter checksum of every component.
  std::uint64_t checksum() const;

  // Component checkpoints plus manifest.json.
  void save(const std::filesystem::path& dir) const;

 private:
  envs::MazeSpec spec_;
  AgentConfig cfg_;
  Normalizer norm_;
  data::GoalSpace goals_;
  std::unique_ptr<flow::FlowTrainer> flat_;
  std::unique_ptr<flow::FlowTrainer> high_;
  std::unique_ptr<flow::FlowTrainer> low_;
  std::unique_ptr<learn::SarsaHigh> sarsa_high_;
  std::unique_ptr<learn::SarsaLow> sarsa_low_;
};

// One rejection-sampling decision: candidate scores and the kept index.
struct Decision {
  std::vector<float> scores;
  int chosen = 0;
};

// Optional hook that sees every scored decision. Used by tests and audits.
struct DecisionLog {
  std::vector<Decision> subgoal;
  std::vector<Decision> action;
  bool keep = true;
};

// Optional replacement score functions (tests use constants).
using ScoreFn = std::function<nn::VecF(const nn::MatF& s, const nn::MatF& u, const nn::MatF& c)>;

// Batched acting state for one evaluation: remembers the active subgoal of
// every episode row. Inputs and outputs are in world units.
class Policy {
 public:
  Policy(const MazeAgent& agent, Method method, int rs_n, int subgoal_period);

  nn::MatF act(const nn::MatF& s, const nn::MatF& g, const std::vector<int>& t, Rng& rng);

  eval::BatchActFn as_fn();

  void set_log(DecisionLog* log) { log_ = log; }
  void set_high_score(ScoreFn f) { high_score_ = std::move(f); }
  void set_low_score(ScoreFn f) { low_score_ = std::move(f); }

  // Active subgoals in world units, one row per episode.
  nn::MatF subgoals() const;
  int replans() const { return replans_; }

 private:
  nn::MatF fbc_act(const nn::MatF& sn, const nn::MatF& gn, Rng& rng) const;
  void replan(const nn::MatF& sn, const nn::MatF& gn, const std::vector<Eigen::Index>& rows, Rng& rng);
  nn::MatF low_act(const nn::MatF& sn, Rng& rng);

  const MazeAgent& agent_;
  Method method_;
  int rs_n_;
  int period_;
  nn::MatF w_;  // normalized subgoals
  std::vector<int> last_plan_;
  int replans_ = 0;
  DecisionLog* log_ = nullptr;
  ScoreFn high_score_;
  ScoreFn low_score_;
  flow::FlowSampleConfig action_cfg_;
  flow::FlowSampleConfig subgoal_cfg_;
};

// Plain hierarchical flow BC acting without any candidate machinery: a
// subgoal from pi_high every `subgoal_period` steps, then one action from pi_low.
class HfbcPolicy {
 public:
  HfbcPolicy(const MazeAgent& agent, int subgoal_period);
  nn::MatF act(const nn::MatF& s, const nn::MatF& g, const std::vector<int>& t, Rng& rng);

 private:
  const MazeAgent& agent_;
  int period_;
  nn::MatF w_;
  flow::FlowSampleConfig action_cfg_;
  flow::FlowSampleConfig subgoal_cfg_;
};

// First index of the maximum.
int argmax_first(const float* scores, int count);

}  // namespace hrl::agents
