#include "hrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hrl/error.hpp"

namespace hrl::agents {

const char* to_string(Method m) {
  switch (m) {
    case Method::fbc: return "fbc";
    case Method::hfbc: return "hfbc";
    case Method::sharsa: return "sharsa";
    case Method::dsharsa: return "dsharsa";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "fbc") return Method::fbc;
  if (s == "hfbc") return Method::hfbc;
  if (s == "sharsa") return Method::sharsa;
  if (s == "dsharsa") return Method::dsharsa;
  throw Error(ErrorKind::config, "unknown maze method '" + s + "'");
}

Normalizer Normalizer::for_maze(const envs::MazeSpec& spec) {
  const auto hi = spec.world_max();
  Normalizer n;
  n.cx = static_cast<float>(hi[0] / 2.0);
  n.cy = static_cast<float>(hi[1] / 2.0);
  n.half = static_cast<float>(std::max(hi[0], hi[1]) / 2.0);
  n.action_scale = static_cast<float>(spec.action_bound);
  return n;
}

nn::MatF Normalizer::state(const nn::MatF& raw) const {
  nn::MatF out(raw.rows(), 2);
  out.col(0) = (raw.col(0).array() - cx) / half;
  out.col(1) = (raw.col(1).array() - cy) / half;
  return out;
}

nn::MatF Normalizer::state_inv(const nn::MatF& norm) const {
  nn::MatF out(norm.rows(), 2);
  out.col(0) = norm.col(0).array() * half + cx;
  out.col(1) = norm.col(1).array() * half + cy;
  return out;
}

nn::MatF Normalizer::action(const nn::MatF& raw) const { return raw / action_scale; }
nn::MatF Normalizer::action_inv(const nn::MatF& norm) const { return norm * action_scale; }

void AgentConfig::validate() const {
  if (n < 2) throw Error(ErrorKind::config, "agent: n must be >= 2");
  if (rs_n < 1) throw Error(ErrorKind::config, "agent: rs_n must be >= 1");
  if (subgoal_period < 0) throw Error(ErrorKind::config, "agent: subgoal_period must be >= 1 (0 means n)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorKind::config, "agent: gamma must lie in (0, 1)");
  if (flow_steps < 1) throw Error(ErrorKind::config, "agent: flow_steps must be >= 1");
  if (batch < 1) throw Error(ErrorKind::config, "agent: batch must be >= 1");
  actor_goals.validate();
  hier_goals.validate();
  value_goals.validate();
  if (train_value_high && !train_hier) throw Error(ErrorKind::config, "agent: SHARSA values need the hierarchical policy");
  if (train_value_low && !train_value_high) throw Error(ErrorKind::config, "agent: double SHARSA needs high-level values");
}

void enable_components(AgentConfig& cfg, const std::vector<Method>& methods) {
  cfg.train_flat = cfg.train_hier = cfg.train_value_high = cfg.train_value_low = false;
  for (const auto m : methods) {
    switch (m) {
      case Method::fbc: cfg.train_flat = true; break;
      case Method::hfbc: cfg.train_hier = true; break;
      case Method::sharsa: cfg.train_hier = cfg.train_value_high = true; break;
      case Method::dsharsa: cfg.train_hier = cfg.train_value_high = cfg.train_value_low = true; break;
    }
  }
}

// ---------------------------------------------------------------------------

MazeAgent::MazeAgent(const envs::MazeSpec& spec, const AgentConfig& cfg)
    : spec_(spec), cfg_(cfg), norm_(Normalizer::for_maze(spec)), goals_{spec.goal_tol} {
  cfg_.validate();
  const std::uint64_t s = cfg.seed;
  if (cfg.train_flat) {
    flat_ = std::make_unique<flow::FlowTrainer>(flow::flow_new(4, 2, cfg.actor_hidden, cfg.layer_norm, s + 11), cfg.lr);
  }
  if (cfg.train_hier) {
    high_ = std::make_unique<flow::FlowTrainer>(flow::flow_new(4, 2, cfg.actor_hidden, cfg.layer_norm, s + 21), cfg.lr);
    low_ = std::make_unique<flow::FlowTrainer>(flow::flow_new(4, 2, cfg.actor_hidden, cfg.layer_norm, s + 31), cfg.lr);
  }
  learn::SarsaConfig sc;
  sc.state_dim = 2;
  sc.goal_dim = 2;
  sc.action_dim = 2;
  sc.hidden = cfg.value_hidden;
  sc.layer_norm = cfg.layer_norm;
  sc.heads = cfg.q_heads;
  sc.aggregate = cfg.aggregate;
  sc.loss = cfg.loss;
  sc.lr = cfg.lr;
  sc.tau = cfg.tau;
  if (cfg.train_value_high) {
    sc.seed = s + 41;
    sarsa_high_ = std::make_unique<learn::SarsaHigh>(sc, cfg.reward_kind());
  }
  if (cfg.train_value_low) {
    sc.seed = s + 51;
    sarsa_low_ = std::make_unique<learn::SarsaLow>(sc, cfg.reward_kind(), cfg.n);
  }
}

namespace {

struct Prepared {
  nn::MatF s, a, s_next, s_hn, g;
};

Prepared normalize(const Normalizer& norm, const data::Batch& b) {
  Prepared p;
  p.s = norm.state(b.s_h);
  p.a = norm.action(b.a_h);
  p.s_next = norm.state(b.s_next);
  p.s_hn = norm.state(b.s_hn);
  if (b.g.size() > 0) p.g = norm.state(b.g);
  return p;
}

learn::HighBatch high_batch(const Prepared& p, const data::Batch& b, double gamma) {
  learn::HighBatch hb;
  hb.s = p.s;
  hb.w = p.s_hn;
  hb.g = p.g;
  hb.rsum = b.reward_sums;
  hb.disc.resize(b.reward_sums.size());
  for (Eigen::Index r = 0; r < hb.disc.size(); ++r) {
    hb.disc[r] = b.done_mask[r] > 0.5f ? 0.0f
                                        : static_cast<float>(std::pow(gamma, b.effective_n[static_cast<std::size_t>(r)]));
  }
  hb.s_boot = p.s_hn;
  return hb;
}

learn::LowBatch low_batch(const Prepared& p, const data::Batch& b, const data::GoalSpace& goals) {
  learn::LowBatch lb;
  lb.s = p.s;
  lb.a = p.a;
  lb.s_next = p.s_next;
  lb.w = p.s_hn;
  const auto rows = b.s_h.rows();
  lb.hit_now.resize(rows);
  lb.hit_next.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::span<const float> w(b.s_hn.row(r).data(), 2);
    lb.hit_now[r] = goals.reached({b.s_h.row(r).data(), 2}, w) ? 1.0f : 0.0f;
    lb.hit_next[r] = goals.reached({b.s_next.row(r).data(), 2}, w) ? 1.0f : 0.0f;
  }
  return lb;
}

}  // namespace

TrainMetrics MazeAgent::train_step(const data::Dataset& ds, Rng& rng) {
  TrainMetrics m;
  const data::BatchRequest req{cfg_.batch, cfg_.n, cfg_.gamma, false};
  if (flat_) {
    const auto ab = data::sample_batch(ds, req, cfg_.actor_goals, cfg_.reward_kind(), goals_, rng);
    const auto p = normalize(norm_, ab);
    m.flat_loss = flat_->step(learn::hcat(p.s, p.g), p.a, rng);
  }
  if (high_) {
    const auto hb = data::sample_batch(ds, req, cfg_.hier_goals, cfg_.reward_kind(), goals_, rng);
    const auto p = normalize(norm_, hb);
    m.high_flow_loss = high_->step(learn::hcat(p.s, p.g), p.s_hn, rng);
    m.low_flow_loss = low_->step(learn::hcat(p.s, p.s_hn), p.a, rng);
    if (sarsa_low_) {
      const auto l = sarsa_low_->update(low_batch(p, hb, goals_));
      m.v_low_loss = l.v_loss;
      m.q_low_loss = l.q_loss;
    }
  }
  if (sarsa_high_) {
    const auto vb = data::sample_batch(ds, req, cfg_.value_goals, cfg_.reward_kind(), goals_, rng);
    const auto l = sarsa_high_->update(high_batch(normalize(norm_, vb), vb, cfg_.gamma));
    m.v_high_loss = l.v_loss;
    m.q_high_loss = l.q_loss;
  }
  return m;
}

TrainMetrics MazeAgent::eval_losses(const data::Dataset& ds, Rng& rng) const {
  TrainMetrics m;
  const data::BatchRequest req{cfg_.batch, cfg_.n, cfg_.gamma, false};
  nn::MlpCache<float> cache;
  if (flat_) {
    const auto ab = data::sample_batch(ds, req, cfg_.actor_goals, cfg_.reward_kind(), goals_, rng);
    const auto p = normalize(norm_, ab);
    m.flat_loss = flow::flow_loss<float>(flat_->net(), learn::hcat(p.s, p.g), p.a, rng, cache, nullptr);
  }
  if (high_) {
    const auto hb = data::sample_batch(ds, req, cfg_.hier_goals, cfg_.reward_kind(), goals_, rng);
    const auto p = normalize(norm_, hb);
    m.high_flow_loss = flow::flow_loss<float>(high_->net(), learn::hcat(p.s, p.g), p.s_hn, rng, cache, nullptr);
    m.low_flow_loss = flow::flow_loss<float>(low_->net(), learn::hcat(p.s, p.s_hn), p.a, rng, cache, nullptr);
    if (sarsa_low_) {
      const auto l = sarsa_low_->losses(low_batch(p, hb, goals_));
      m.v_low_loss = l.v_loss;
      m.q_low_loss = l.q_loss;
    }
  }
  if (sarsa_high_) {
    const auto vb = data::sample_batch(ds, req, cfg_.value_goals, cfg_.reward_kind(), goals_, rng);
    const auto l = sarsa_high_->losses(high_batch(normalize(norm_, vb), vb, cfg_.gamma));
    m.v_high_loss = l.v_loss;
    m.q_high_loss = l.q_loss;
  }
  return m;
}

std::uint64_t MazeAgent::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  if (flat_) mix(nn::checksum(flat_->net().net));
  if (high_) {
    mix(nn::checksum(high_->net().net));
    mix(nn::checksum(low_->net().net));
  }
  for (const learn::SarsaNets* s : {sarsa_high_ ? &sarsa_high_->nets() : nullptr, sarsa_low_ ? &sarsa_low_->nets() : nullptr}) {
    if (s == nullptr) continue;
    mix(nn::checksum(s->v_net()));
    mix(nn::checksum(s->q_net()));
    mix(nn::checksum(s->q_target()));
  }
  return h;
}

void MazeAgent::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"layout", spec_.layout},
                             {"n", cfg_.n},
                             {"rs_n", cfg_.rs_n},
                             {"subgoal_period", cfg_.period()},
                             {"loss", learn::to_string(cfg_.loss)},
                             {"gamma", cfg_.gamma},
                             {"components", nlohmann::json::array()}};
  auto put = [&](const std::string& name, const nn::MlpParams<float>& p) {
    std::ofstream os(dir / (name + ".hrlw"), std::ios::binary);
    if (!os) throw Error(ErrorKind::io, "cannot write checkpoint " + name);
    nn::save_params(os, p);
    manifest["components"].push_back(name);
  };
  if (flat_) put("pi_flat", flat_->net().net);
  if (high_) {
    put("pi_high", high_->net().net);
    put("pi_low", low_->net().net);
  }
  if (sarsa_high_) {
    put("v_high", sarsa_high_->nets().v_net());
    put("q_high", sarsa_high_->nets().q_net());
    put("q_high_target", sarsa_high_->nets().q_target());
  }
  if (sarsa_low_) {
    put("v_low", sarsa_low_->nets().v_net());
    put("q_low", sarsa_low_->nets().q_net());
    put("q_low_target", sarsa_low_->nets().q_target());
  }
  eval::write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int argmax_first(const float* scores, int count) {
  int best = 0;
  for (int i = 1; i < count; ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

namespace {

flow::FlowSampleConfig box_config(int steps, float lo0, float lo1, float hi0, float hi1) {
  flow::FlowSampleConfig c;
  c.steps = steps;
  c.clip_lo = {lo0, lo1};
  c.clip_hi = {hi0, hi1};
  return c;
}

flow::FlowSampleConfig subgoal_box(const MazeAgent& agent) {
  const auto& n = agent.normalizer();
  const auto lo = agent.spec().world_min();
  const auto hi = agent.spec().world_max();
  return box_config(agent.config().flow_steps, static_cast<float>((lo[0] - n.cx) / n.half),
                    static_cast<float>((lo[1] - n.cy) / n.half), static_cast<float>((hi[0] - n.cx) / n.half),
                    static_cast<float>((hi[1] - n.cy) / n.half));
}

nn::MatF repeat_rows(const nn::MatF& m, int times) {
  nn::MatF out(m.rows() * times, m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (int k = 0; k < times; ++k) out.row(r * times + k) = m.row(r);
  }
  return out;
}

}  // namespace

Policy::Policy(const MazeAgent& agent, Method method, int rs_n, int subgoal_period)
    : agent_(agent), method_(method), rs_n_(rs_n), period_(subgoal_period) {
  if (rs_n < 1) throw Error(ErrorKind::config, "rs_n must be >= 1");
  if (subgoal_period < 1) throw Error(ErrorKind::config, "subgoal_period must be >= 1");
  if (method == Method::fbc && agent.flat() == nullptr) throw Error(ErrorKind::config, "agent has no flat policy");
  if (method != Method::fbc && agent.high() == nullptr) {
    throw Error(ErrorKind::config, "agent has no hierarchical policy");
  }
  if (method == Method::sharsa && agent.sarsa_high() == nullptr) {
    throw Error(ErrorKind::config, "SHARSA acting needs high-level values");
  }
  if (method == Method::dsharsa && (agent.sarsa_high() == nullptr || agent.sarsa_low() == nullptr)) {
    throw Error(ErrorKind::config, "double SHARSA acting needs low-level values");
  }
  action_cfg_ = box_config(agent.config().flow_steps, -1.0f, -1.0f, 1.0f, 1.0f);
  subgoal_cfg_ = subgoal_box(agent);
}

nn::MatF Policy::fbc_act(const nn::MatF& sn, const nn::MatF& gn, Rng& rng) const {
  return flow::flow_sample_batch(agent_.flat()->net(), learn::hcat(sn, gn), action_cfg_, rng);
}

void Policy::replan(const nn::MatF& sn, const nn::MatF& gn, const std::vector<Eigen::Index>& rows, Rng& rng) {
  ++replans_;
  const int n_cand = method_ == Method::hfbc ? 1 : rs_n_;
  const auto k = static_cast<Eigen::Index>(rows.size());
  nn::MatF s_sel(k, 2), g_sel(k, 2);
  for (Eigen::Index i = 0; i < k; ++i) {
    s_sel.row(i) = sn.row(rows[static_cast<std::size_t>(i)]);
    g_sel.row(i) = gn.row(rows[static_cast<std::size_t>(i)]);
  }
  const nn::MatF s_rep = repeat_rows(s_sel, n_cand);
  const nn::MatF g_rep = repeat_rows(g_sel, n_cand);
  const nn::MatF cand = flow::flow_sample_batch(agent_.high()->net(), learn::hcat(s_rep, g_rep), subgoal_cfg_, rng);
  nn::VecF scores;
  if (n_cand > 1) {
    scores = high_score_ ? high_score_(s_rep, cand, g_rep) : agent_.sarsa_high()->nets().q_score(s_rep, cand, g_rep);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    int best = 0;
    if (n_cand > 1) {
      best = argmax_first(scores.data() + i * n_cand, n_cand);
      if (log_ != nullptr && log_->keep) {
        log_->subgoal.push_back({{scores.data() + i * n_cand, scores.data() + (i + 1) * n_cand}, best});
      }
    }
    w_.row(rows[static_cast<std::size_t>(i)]) = cand.row(i * n_cand + best);
  }
}

nn::MatF Policy::low_act(const nn::MatF& sn, Rng& rng) {
  if (method_ != Method::dsharsa || rs_n_ == 1) {
    return flow::flow_sample_batch(agent_.low()->net(), learn::hcat(sn, w_), action_cfg_, rng);
  }
  const nn::MatF s_rep = repeat_rows(sn, rs_n_);
  const nn::MatF w_rep = repeat_rows(w_, rs_n_);
  const nn::MatF cand = flow::flow_sample_batch(agent_.low()->net(), learn::hcat(s_rep, w_rep), action_cfg_, rng);
  const nn::VecF scores =
      low_score_ ? low_score_(s_rep, cand, w_rep) : agent_.sarsa_low()->nets().q_score(s_rep, cand, w_rep);
  nn::MatF a(sn.rows(), 2);
  for (Eigen::Index r = 0; r < sn.rows(); ++r) {
    const int best = argmax_first(scores.data() + r * rs_n_, rs_n_);
    if (log_ != nullptr && log_->keep) {
      log_->action.push_back({{scores.data() + r * rs_n_, scores.data() + (r + 1) * rs_n_}, best});
    }
    a.row(r) = cand.row(r * rs_n_ + best);
  }
  return a;
}

nn::MatF Policy::act(const nn::MatF& s, const nn::MatF& g, const std::vector<int>& t, Rng& rng) {
  const auto& norm = agent_.normalizer();
  const nn::MatF sn = norm.state(s);
  const nn::MatF gn = norm.state(g);
  if (method_ == Method::fbc) return norm.action_inv(fbc_act(sn, gn, rng));
  if (w_.rows() != s.rows()) {
    w_ = nn::MatF::Zero(s.rows(), 2);
    last_plan_.assign(static_cast<std::size_t>(s.rows()), -1);
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const auto ur = static_cast<std::size_t>(r);
    if (last_plan_[ur] < 0 || t[ur] < last_plan_[ur] || t[ur] - last_plan_[ur] >= period_) {
      rows.push_back(r);
      last_plan_[ur] = t[ur];
    }
  }
  if (!rows.empty()) replan(sn, gn, rows, rng);
  return norm.action_inv(low_act(sn, rng));
}

eval::BatchActFn Policy::as_fn() {
  return [this](const nn::MatF& s, const nn::MatF& g, const std::vector<int>& t, Rng& rng) {
    return act(s, g, t, rng);
  };
}

nn::MatF Policy::subgoals() const { return agent_.normalizer().state_inv(w_); }

HfbcPolicy::HfbcPolicy(const MazeAgent& agent, int subgoal_period) : agent_(agent), period_(subgoal_period) {
  if (agent.high() == nullptr) throw Error(ErrorKind::config, "agent has no hierarchical policy");
  if (subgoal_period < 1) throw Error(ErrorKind::config, "subgoal_period must be >= 1");
  action_cfg_ = box_config(agent.config().flow_steps, -1.0f, -1.0f, 1.0f, 1.0f);
  subgoal_cfg_ = subgoal_box(agent);
}

nn::MatF HfbcPolicy::act(const nn::MatF& s, const nn::MatF& g, const std::vector<int>& t, Rng& rng) {
  const auto& norm = agent_.normalizer();
  const nn::MatF sn = norm.state(s);
  if (t.front() % period_ == 0 || w_.rows() != s.rows()) {
    w_ = flow::flow_sample_batch(agent_.high()->net(), learn::hcat(sn, norm.state(g)), subgoal_cfg_, rng);
  }
  return norm.action_inv(flow::flow_sample_batch(agent_.low()->net(), learn::hcat(sn, w_), action_cfg_, rng));
}

}  // namespace hrl::agents
