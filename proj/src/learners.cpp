#include "hrl/learners.hpp"

#include <algorithm>
#include <cmath>

#include "hrl/envs.hpp"
#include "hrl/error.hpp"

namespace hrl::learn {

const char* to_string(LossKind k) { return k == LossKind::bce ? "bce" : "regression"; }

const char* to_string(DoubleQ k) {
  switch (k) {
    case DoubleQ::ddqn: return "ddqn";
    case DoubleQ::cross: return "cross";
    case DoubleQ::clipped: return "clipped";
  }
  return "?";
}

const char* to_string(NstepCut k) { return k == NstepCut::greedy ? "greedy" : "none"; }
const char* to_string(Aggregate k) { return k == Aggregate::mean ? "mean" : "min"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "regression") return LossKind::regression;
  throw Error(ErrorKind::config, "unknown loss kind '" + s + "'");
}

DoubleQ double_q_from_string(const std::string& s) {
  if (s == "ddqn") return DoubleQ::ddqn;
  if (s == "cross") return DoubleQ::cross;
  if (s == "clipped") return DoubleQ::clipped;
  throw Error(ErrorKind::config, "unknown double-q mode '" + s + "'");
}

NstepCut nstep_cut_from_string(const std::string& s) {
  if (s == "greedy") return NstepCut::greedy;
  if (s == "none") return NstepCut::none;
  throw Error(ErrorKind::config, "unknown n-step cut '" + s + "'");
}

Aggregate aggregate_from_string(const std::string& s) {
  if (s == "mean") return Aggregate::mean;
  if (s == "min") return Aggregate::min;
  throw Error(ErrorKind::config, "unknown aggregation '" + s + "'");
}

// ---------------------------------------------------------------------------

template <class T>
T dqn_loss(const nn::MlpParams<T>& q, const nn::Mat<T>& s, const std::vector<int>& a, const nn::Vec<T>& y,
           nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads) {
  const auto rows = s.rows();
  if (static_cast<Eigen::Index>(a.size()) != rows || y.size() != rows) {
    throw Error(ErrorKind::contract, "dqn loss inputs are not batch-aligned");
  }
  const auto& out = nn::mlp_forward(q, s, cache);
  const T inv_b = T(1) / static_cast<T>(rows);
  T loss = 0;
  nn::Mat<T> dy;
  if (grads != nullptr) dy = nn::Mat<T>::Zero(rows, out.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const T d = out(r, a[static_cast<std::size_t>(r)]) - y[r];
    loss += d * d;
    if (grads != nullptr) dy(r, a[static_cast<std::size_t>(r)]) = T(2) * d * inv_b;
  }
  if (grads != nullptr) nn::mlp_backward(q, cache, dy, *grads);
  return loss * inv_b;
}

template <class T>
T value_loss(const nn::MlpParams<T>& net, const nn::Mat<T>& in, const nn::Vec<T>& y, LossKind kind,
             nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads) {
  if (y.size() != in.rows()) throw Error(ErrorKind::contract, "value loss inputs are not batch-aligned");
  const auto& out = nn::mlp_forward(net, in, cache);
  const T inv_b = T(1) / static_cast<T>(in.rows());
  T loss = 0;
  nn::Mat<T> dy;
  if (grads != nullptr) dy.resize(out.rows(), out.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const T x = out(r, c);
      if (kind == LossKind::bce) {
        loss += nn::bce_logit(x, y[r]);
        if (grads != nullptr) dy(r, c) = (nn::sigmoid(x) - y[r]) * inv_b;
      } else {
        loss += (x - y[r]) * (x - y[r]);
        if (grads != nullptr) dy(r, c) = T(2) * (x - y[r]) * inv_b;
      }
    }
  }
  if (grads != nullptr) nn::mlp_backward(net, cache, dy, *grads);
  return loss * inv_b;
}

template float dqn_loss(const nn::MlpParams<float>&, const nn::MatF&, const std::vector<int>&, const nn::VecF&,
                        nn::MlpCache<float>&, nn::MlpGrads<float>*);
template double dqn_loss(const nn::MlpParams<double>&, const nn::MatD&, const std::vector<int>&, const nn::VecD&,
                         nn::MlpCache<double>&, nn::MlpGrads<double>*);
template float value_loss(const nn::MlpParams<float>&, const nn::MatF&, const nn::VecF&, LossKind,
                          nn::MlpCache<float>&, nn::MlpGrads<float>*);
template double value_loss(const nn::MlpParams<double>&, const nn::MatD&, const nn::VecD&, LossKind,
                           nn::MlpCache<double>&, nn::MlpGrads<double>*);

double bce_loss(double logit, double y) { return nn::bce_logit(logit, y); }
double reg_loss(double x, double y) { return nn::reg_loss(x, y); }

nn::VecF clamp_labels(nn::VecF y, LossKind kind) {
  if (kind == LossKind::bce) y = y.cwiseMax(0.0f).cwiseMin(1.0f);
  return y;
}

nn::MatF hcat(const nn::MatF& a, const nn::MatF& b) {
  nn::MatF out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

nn::MatF hcat(const nn::MatF& a, const nn::MatF& b, const nn::MatF& c) {
  nn::MatF out(a.rows(), a.cols() + b.cols() + c.cols());
  out << a, b, c;
  return out;
}

// ---------------------------------------------------------------------------

void DqnConfig::validate() const {
  if (state_dim < 1) throw Error(ErrorKind::config, "dqn: state_dim must be positive");
  if (n < 1) throw Error(ErrorKind::config, "dqn: n must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(ErrorKind::config, "dqn: gamma must lie in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::config, "dqn: tau must lie in (0, 1]");
  if (lr < 0.0) throw Error(ErrorKind::config, "dqn: lr must be non-negative");
  if (cut == NstepCut::greedy && n > 1 && horizon < 2) {
    throw Error(ErrorKind::config, "dqn: greedy n-step cut needs the lock horizon");
  }
  if (cut_refresh < 1) throw Error(ErrorKind::config, "dqn: cut_refresh must be >= 1");
}

DqnLearner::DqnLearner(const DqnConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::MlpConfig mc;
  mc.layer_dims.push_back(cfg.state_dim);
  mc.layer_dims.insert(mc.layer_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  mc.layer_dims.push_back(2);
  mc.use_layer_norm = cfg.layer_norm;
  const int heads = cfg.double_q == DoubleQ::ddqn ? 1 : 2;
  for (int k = 0; k < heads; ++k) {
    q_.push_back(nn::mlp_init(mc, cfg.seed + static_cast<std::uint64_t>(k)));
    tq_.push_back(q_.back());
    adam_.push_back(nn::adam_init(q_.back()));
  }
  if (cfg.n > 1 && cfg.cut == NstepCut::greedy) {
    const auto spec_dim = cfg.state_dim;
    all_codes_.resize(cfg.horizon, spec_dim);
    for (int i = 0; i < cfg.horizon; ++i) {
      for (int b = 0; b < spec_dim; ++b) all_codes_(i, b) = static_cast<float>((i >> b) & 1);
    }
    refresh_greedy_table();
  }
}

void DqnLearner::refresh_greedy_table() {
  if (all_codes_.rows() == 0) return;
  const nn::MatF q = nn::mlp_predict(q_[0], all_codes_);
  greedy_.resize(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) greedy_[static_cast<std::size_t>(i)] = q(i, 1) > q(i, 0) ? 1 : 0;
}

DqnTargets DqnLearner::build_targets(const data::Batch& b) const {
  const auto rows = static_cast<Eigen::Index>(b.size());
  const auto sd = b.s_h.cols();
  const auto ad = b.a_h.cols();
  DqnTargets t;
  t.s_boot = b.s_hn;
  t.rsum.resize(rows);
  t.disc.resize(rows);
  t.a.resize(static_cast<std::size_t>(rows));
  const bool cut = cfg_.cut == NstepCut::greedy && cfg_.n > 1;
  if (cut && b.mid_states.cols() == 0) throw Error(ErrorKind::contract, "greedy n-step cut needs segment paths");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    t.a[ur] = b.a_h(r, 0) > 0.5f ? 1 : 0;
    const int m = b.segment_len[ur];
    int k = m;
    if (cut) {
      for (int i = 1; i < m; ++i) {
        const float* st = b.mid_states.row(r).data() + (i - 1) * sd;
        const int idx = envs::lock_decode({st, static_cast<std::size_t>(sd)});
        const int act = b.mid_actions(r, (i - 1) * ad) > 0.5f ? 1 : 0;
        if (act != greedy_[static_cast<std::size_t>(idx)]) {
          k = i;
          t.s_boot.row(r) = Eigen::Map<const nn::VecF>(st, sd).transpose();
          break;
        }
      }
    }
    double sum = 0.0;
    double disc = 1.0;
    for (int i = 0; i < k; ++i) {
      sum += disc * data::kStepReward;
      disc *= cfg_.gamma;
    }
    const bool done = b.done_mask[r] > 0.5f && k == m;
    t.rsum[r] = static_cast<float>(sum);
    t.disc[r] = done ? 0.0f : static_cast<float>(disc);
  }
  return t;
}

namespace {

int argmax2(const nn::MatF& q, Eigen::Index r) { return q(r, 1) > q(r, 0) ? 1 : 0; }

}  // namespace

nn::VecF DqnLearner::targets_for(const DqnTargets& t, int head) const {
  const auto rows = t.s_boot.rows();
  nn::VecF boot(rows);
  switch (cfg_.double_q) {
    case DoubleQ::ddqn: {
      const nn::MatF sel = nn::mlp_predict(q_[0], t.s_boot);
      const nn::MatF ev = nn::mlp_predict(tq_[0], t.s_boot);
      for (Eigen::Index r = 0; r < rows; ++r) boot[r] = ev(r, argmax2(sel, r));
      break;
    }
    case DoubleQ::cross: {
      const nn::MatF sel = nn::mlp_predict(q_[head], t.s_boot);
      const nn::MatF ev = nn::mlp_predict(tq_[1 - head], t.s_boot);
      for (Eigen::Index r = 0; r < rows; ++r) boot[r] = ev(r, argmax2(sel, r));
      break;
    }
    case DoubleQ::clipped: {
      const nn::MatF lo = nn::mlp_predict(tq_[0], t.s_boot).cwiseMin(nn::mlp_predict(tq_[1], t.s_boot));
      for (Eigen::Index r = 0; r < rows; ++r) boot[r] = lo.row(r).maxCoeff();
      break;
    }
  }
  nn::VecF y = t.rsum;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (t.disc[r] != 0.0f) y[r] += t.disc[r] * boot[r];
  }
  return y;
}

float DqnLearner::update(const data::Batch& b) {
  if (cfg_.n > 1 && cfg_.cut == NstepCut::greedy && steps_ % cfg_.cut_refresh == 0) refresh_greedy_table();
  const DqnTargets t = build_targets(b);
  std::vector<nn::VecF> ys;
  for (int k = 0; k < heads(); ++k) ys.push_back(targets_for(t, k));
  float loss = 0.0f;
  for (int k = 0; k < heads(); ++k) {
    loss += dqn_loss(q_[k], b.s_h, t.a, ys[static_cast<std::size_t>(k)], cache_, &grads_);
    nn::adam_step(adam_[k], q_[k], grads_.params, cfg_.lr);
  }
  for (int k = 0; k < heads(); ++k) nn::target_update(tq_[k], q_[k], cfg_.tau);
  ++steps_;
  return loss / static_cast<float>(heads());
}

float DqnLearner::td_loss(const data::Batch& b) const {
  const DqnTargets t = build_targets(b);
  nn::MlpCache<float> cache;
  float loss = 0.0f;
  for (int k = 0; k < heads(); ++k) loss += dqn_loss<float>(q_[k], b.s_h, t.a, targets_for(t, k), cache, nullptr);
  return loss / static_cast<float>(heads());
}

nn::MatF DqnLearner::q_values(const nn::MatF& states) const { return nn::mlp_predict(q_[0], states); }

// ---------------------------------------------------------------------------

void SarsaConfig::validate() const {
  if (state_dim < 1 || goal_dim < 1 || action_dim < 1) throw Error(ErrorKind::config, "sarsa: dims must be positive");
  if (heads < 1) throw Error(ErrorKind::config, "sarsa: heads must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::config, "sarsa: tau must lie in (0, 1]");
  if (lr < 0.0) throw Error(ErrorKind::config, "sarsa: lr must be non-negative");
}

namespace {

nn::MlpConfig net_config(int in, const std::vector<int>& hidden, int out, bool ln) {
  nn::MlpConfig mc;
  mc.layer_dims.push_back(in);
  mc.layer_dims.insert(mc.layer_dims.end(), hidden.begin(), hidden.end());
  mc.layer_dims.push_back(out);
  mc.use_layer_norm = ln;
  return mc;
}

nn::VecF aggregate_rows(const nn::MatF& q, Aggregate agg) {
  return agg == Aggregate::min ? nn::VecF(q.rowwise().minCoeff()) : nn::VecF(q.rowwise().mean());
}

nn::VecF to_value(nn::VecF x, LossKind kind) {
  if (kind == LossKind::bce) x = x.unaryExpr([](float v) { return nn::sigmoid(v); });
  return x;
}

void check_reward(LossKind loss, data::RewardKind reward) {
  if (loss == LossKind::bce && reward != data::RewardKind::zero_one) {
    throw Error(ErrorKind::config, "bce value loss requires zero-one rewards");
  }
}

}  // namespace

SarsaNets::SarsaNets(const SarsaConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  v_ = nn::mlp_init(net_config(cfg.state_dim + cfg.goal_dim, cfg.hidden, 1, cfg.layer_norm), cfg.seed);
  q_ = nn::mlp_init(net_config(cfg.state_dim + cfg.action_dim + cfg.goal_dim, cfg.hidden, cfg.heads, cfg.layer_norm),
                    cfg.seed + 1);
  tq_ = q_;
  v_adam_ = nn::adam_init(v_);
  q_adam_ = nn::adam_init(q_);
}

nn::VecF SarsaNets::q_score(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const {
  return aggregate_rows(nn::mlp_predict(q_, hcat(x, u, c)), cfg_.aggregate);
}

nn::VecF SarsaNets::q_score_target(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const {
  return aggregate_rows(nn::mlp_predict(tq_, hcat(x, u, c)), cfg_.aggregate);
}

nn::VecF SarsaNets::v_value(const nn::MatF& x, const nn::MatF& c) const {
  return to_value(nn::mlp_predict(v_, hcat(x, c)).col(0), cfg_.loss);
}

nn::VecF SarsaNets::v_label(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const {
  return clamp_labels(to_value(q_score_target(x, u, c), cfg_.loss), cfg_.loss);
}

float SarsaNets::v_step(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c, double lr) {
  const nn::VecF y = v_label(x, u, c);
  const float loss = value_loss(v_, hcat(x, c), y, cfg_.loss, cache_, &grads_);
  nn::adam_step(v_adam_, v_, grads_.params, lr);
  return loss;
}

float SarsaNets::q_step(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c, const nn::VecF& label, double lr) {
  const float loss = value_loss(q_, hcat(x, u, c), label, cfg_.loss, cache_, &grads_);
  nn::adam_step(q_adam_, q_, grads_.params, lr);
  return loss;
}

void SarsaNets::polyak() { nn::target_update(tq_, q_, cfg_.tau); }

float SarsaNets::v_loss(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c) const {
  nn::MlpCache<float> cache;
  return value_loss<float>(v_, hcat(x, c), v_label(x, u, c), cfg_.loss, cache, nullptr);
}

float SarsaNets::q_loss(const nn::MatF& x, const nn::MatF& u, const nn::MatF& c, const nn::VecF& label) const {
  nn::MlpCache<float> cache;
  return value_loss<float>(q_, hcat(x, u, c), label, cfg_.loss, cache, nullptr);
}

// ---------------------------------------------------------------------------

SarsaHigh::SarsaHigh(const SarsaConfig& cfg, data::RewardKind reward_kind) : nets_(cfg) {
  check_reward(cfg.loss, reward_kind);
}

nn::VecF SarsaHigh::q_label(const HighBatch& b) const {
  const nn::VecF v = nets_.v_value(b.s_boot, b.g);
  nn::VecF y = b.rsum;
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    if (b.disc[r] != 0.0f) y[r] += b.disc[r] * v[r];
  }
  return clamp_labels(std::move(y), nets_.config().loss);
}

SarsaLosses SarsaHigh::update(const HighBatch& b) {
  SarsaLosses out;
  out.v_loss = nets_.v_step(b.s, b.w, b.g, nets_.config().lr);
  out.q_loss = nets_.q_step(b.s, b.w, b.g, q_label(b), nets_.config().lr);
  nets_.polyak();
  return out;
}

SarsaLosses SarsaHigh::losses(const HighBatch& b) const {
  return {nets_.v_loss(b.s, b.w, b.g), nets_.q_loss(b.s, b.w, b.g, q_label(b))};
}

SarsaLow::SarsaLow(const SarsaConfig& cfg, data::RewardKind reward_kind, int n)
    : nets_(cfg), reward_kind_(reward_kind), gamma_tilde_(1.0 - 1.0 / static_cast<double>(n)) {
  check_reward(cfg.loss, reward_kind);
  if (n < 2) throw Error(ErrorKind::config, "low-level SARSA needs n >= 2 so that the discount is positive");
}

nn::VecF SarsaLow::q_label(const LowBatch& b) const {
  const float r_hit = reward_kind_ == data::RewardKind::zero_one ? 1.0f : 0.0f;
  const float r_miss = reward_kind_ == data::RewardKind::zero_one ? 0.0f : -1.0f;
  const nn::VecF v = nets_.v_value(b.s_next, b.w);
  nn::VecF y(b.s.rows());
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    if (b.hit_now[r] > 0.5f) {
      y[r] = r_hit;
    } else {
      const float next = b.hit_next[r] > 0.5f ? r_hit : v[r];
      y[r] = r_miss + static_cast<float>(gamma_tilde_) * next;
    }
  }
  return clamp_labels(std::move(y), nets_.config().loss);
}

SarsaLosses SarsaLow::update(const LowBatch& b) {
  SarsaLosses out;
  out.v_loss = nets_.v_step(b.s, b.a, b.w, nets_.config().lr);
  out.q_loss = nets_.q_step(b.s, b.a, b.w, q_label(b), nets_.config().lr);
  nets_.polyak();
  return out;
}

SarsaLosses SarsaLow::losses(const LowBatch& b) const {
  return {nets_.v_loss(b.s, b.a, b.w), nets_.q_loss(b.s, b.a, b.w, q_label(b))};
}

}  // namespace hrl::learn
