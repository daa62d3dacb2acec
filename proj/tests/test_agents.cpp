#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "hrl/agents.hpp"
#include "hrl/error.hpp"

using namespace hrl;
using namespace hrl::agents;
using nn::MatF;
using nn::VecF;

namespace {

AgentConfig tiny_config(std::uint64_t seed) {
  AgentConfig c;
  c.n = 4;
  c.rs_n = 8;
  c.actor_hidden = {16, 16};
  c.value_hidden = {16, 16};
  c.batch = 16;
  c.seed = seed;
  c.train_value_low = true;
  return c;
}

const envs::MazeSpec& corridor() {
  static const auto spec = envs::maze_new("corridor-s", 0);
  return spec;
}

const data::Dataset& corridor_data() {
  static const auto ds = data::gen_maze_play(corridor(), {20, 100, 0.05, 3});
  return ds;
}

// Trained a little so the networks are not at their symmetric init.
const MazeAgent& warm_agent() {
  static const MazeAgent agent = [] {
    MazeAgent a(corridor(), tiny_config(7));
    Rng rng(8);
    for (int k = 0; k < 50; ++k) a.train_step(corridor_data(), rng);
    return a;
  }();
  return agent;
}

MatF row2(double x, double y, Eigen::Index rows) {
  MatF m(rows, 2);
  m.col(0).setConstant(static_cast<float>(x));
  m.col(1).setConstant(static_cast<float>(y));
  return m;
}

// Drives `act` through a closed-loop rollout of `steps` steps; returns all actions.
template <class Act>
std::vector<MatF> rollout(Act&& act, int steps, std::uint64_t seed) {
  const auto& spec = corridor();
  MatF s = row2(1.5, 1.5, 3);
  s(1, 0) = 4.5f;
  s(2, 1) = 3.5f;
  const MatF g = row2(6.5, 5.5, 3);
  Rng rng(seed);
  std::vector<MatF> out;
  for (int k = 0; k < steps; ++k) {
    const std::vector<int> t(3, k);
    MatF a = act(s, g, t, rng);
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const auto next = envs::maze_step(spec, {{s(r, 0), s(r, 1)}}, {a(r, 0), a(r, 1)});
      s(r, 0) = static_cast<float>(next.pos[0]);
      s(r, 1) = static_cast<float>(next.pos[1]);
    }
    out.push_back(std::move(a));
  }
  return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("method names and component selection") {
  for (auto m : {Method::fbc, Method::hfbc, Method::sharsa, Method::dsharsa}) CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("sac"), Error);
  AgentConfig c;
  enable_components(c, {Method::fbc});
  CHECK((c.train_flat && !c.train_hier && !c.train_value_high && !c.train_value_low));
  enable_components(c, {Method::hfbc, Method::dsharsa});
  CHECK((!c.train_flat && c.train_hier && c.train_value_high && c.train_value_low));
  CHECK(c.period() == c.n);
  c.subgoal_period = 3;
  CHECK(c.period() == 3);
  c = AgentConfig{};
  c.n = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = AgentConfig{};
  c.train_hier = false;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(AgentConfig{}.reward_kind() == data::RewardKind::zero_one);
}

TEST_CASE("normalizer") {
  const auto spec = envs::maze_new("rooms-4", 0);
  const auto n = Normalizer::for_maze(spec);
  MatF corners(2, 2);
  corners << 0.0f, 0.0f, 11.0f, 11.0f;
  const MatF z = n.state(corners);
  CHECK(z(0, 0) == doctest::Approx(-1.0));
  CHECK(z(1, 1) == doctest::Approx(1.0));
  CHECK((n.state_inv(z) - corners).cwiseAbs().maxCoeff() < 1e-5f);
  MatF a(1, 2);
  a << 0.25f, -0.125f;
  CHECK(n.action(a)(0, 0) == doctest::Approx(1.0));
  CHECK((n.action_inv(n.action(a)) - a).cwiseAbs().maxCoeff() < 1e-7f);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto c = tiny_config(1);
  c.lr = 0.0;
  MazeAgent a(corridor(), c);
  Rng rng(2);
  for (int k = 0; k < 3; ++k) {
    const auto m = a.train_step(corridor_data(), rng);
    for (float v : {m.flat_loss, m.high_flow_loss, m.low_flow_loss, m.v_high_loss, m.q_high_loss, m.v_low_loss,
                    m.q_low_loss}) {
      CHECK(std::isfinite(v));
    }
  }
  Rng r2(3);
  a.eval_losses(corridor_data(), r2);
  MazeAgent b(corridor(), c);
  CHECK(a.flat()->net().net.out_w == b.flat()->net().net.out_w);
  CHECK(a.sarsa_high()->nets().q_net().out_w == b.sarsa_high()->nets().q_net().out_w);
  CHECK(a.sarsa_low()->nets().v_net().out_w == b.sarsa_low()->nets().v_net().out_w);
}

TEST_CASE("training is deterministic and evaluation does not mutate") {
  MazeAgent a(corridor(), tiny_config(4)), b(corridor(), tiny_config(4));
  Rng ra(5), rb(5);
  for (int k = 0; k < 5; ++k) {
    const auto ma = a.train_step(corridor_data(), ra);
    const auto mb = b.train_step(corridor_data(), rb);
    CHECK(ma.flat_loss == mb.flat_loss);
    CHECK(ma.q_high_loss == mb.q_high_loss);
    CHECK(ma.q_low_loss == mb.q_low_loss);
  }
  CHECK(a.checksum() == b.checksum());
  const auto sum = a.checksum();
  Rng r(6);
  a.eval_losses(corridor_data(), r);
  Policy p(a, Method::dsharsa, 4, 3);
  rollout([&](auto&&... x) { return p.act(x...); }, 5, 1);
  CHECK(a.checksum() == sum);
}

TEST_CASE("policy construction checks components") {
  auto c = tiny_config(1);
  c.train_value_low = false;
  MazeAgent a(corridor(), c);
  CHECK_THROWS_AS(Policy(a, Method::dsharsa, 4, 4), Error);
  CHECK_NOTHROW(Policy(a, Method::sharsa, 4, 4));
  CHECK_THROWS_AS(Policy(a, Method::sharsa, 0, 4), Error);
  CHECK_THROWS_AS(Policy(a, Method::sharsa, 4, 0), Error);
  enable_components(c, {Method::hfbc});
  MazeAgent h(corridor(), c);
  CHECK_THROWS_AS(Policy(h, Method::fbc, 1, 4), Error);
  CHECK_THROWS_AS(Policy(h, Method::sharsa, 4, 4), Error);
}

TEST_CASE("N = 1 SHARSA and double SHARSA equal HFBC bitwise") {
  const auto& agent = warm_agent();
  HfbcPolicy hfbc(agent, 3);
  const auto ref = rollout([&](auto&&... x) { return hfbc.act(x...); }, 20, 11);
  for (auto m : {Method::hfbc, Method::sharsa, Method::dsharsa}) {
    Policy p(agent, m, 1, 3);
    const auto got = rollout([&](auto&&... x) { return p.act(x...); }, 20, 11);
    bool same = true;
    for (std::size_t k = 0; k < ref.size(); ++k) same = same && got[k] == ref[k];
    CHECK_MESSAGE(same, to_string(m));
  }
}

TEST_CASE("subgoal refresh period") {
  const auto& agent = warm_agent();
  Policy p(agent, Method::sharsa, 4, 5);
  rollout([&](auto&&... x) { return p.act(x...); }, 23, 1);
  CHECK(p.replans() == 5);  // t = 0, 5, 10, 15, 20
  Policy once(agent, Method::sharsa, 4, 1 << 30);
  rollout([&](auto&&... x) { return once.act(x...); }, 40, 2);
  CHECK(once.replans() == 1);
  Policy every(agent, Method::hfbc, 1, 1);
  rollout([&](auto&&... x) { return every.act(x...); }, 7, 1);
  CHECK(every.replans() == 7);
}

TEST_CASE("rejection sampling keeps the maximum") {
  const auto& agent = warm_agent();
  DecisionLog log;
  Policy p(agent, Method::dsharsa, 16, 2);
  p.set_log(&log);
  rollout([&](auto&&... x) { return p.act(x...); }, 30, 3);
  REQUIRE(!log.subgoal.empty());
  REQUIRE(!log.action.empty());
  bool ok = true;
  for (const auto* decisions : {&log.subgoal, &log.action}) {
    for (const auto& d : *decisions) {
      const float best = *std::max_element(d.scores.begin(), d.scores.end());
      ok = ok && d.scores[static_cast<std::size_t>(d.chosen)] == best;
      for (int k = 0; k < d.chosen; ++k) ok = ok && d.scores[static_cast<std::size_t>(k)] < best;
    }
  }
  CHECK(ok);
  const float s[] = {0.1f, 0.7f, 0.7f, -1.0f};
  CHECK(argmax_first(s, 4) == 1);
}

TEST_CASE("logit and sigmoid scoring select the same candidates") {
  const auto& agent = warm_agent();
  DecisionLog a, b;
  Policy logit(agent, Method::sharsa, 16, 2);
  Policy prob(agent, Method::sharsa, 16, 2);
  logit.set_log(&a);
  prob.set_log(&b);
  prob.set_high_score([&](const MatF& s, const MatF& u, const MatF& c) {
    VecF z = agent.sarsa_high()->nets().q_score(s, u, c);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = nn::sigmoid(z[i]);
    return z;
  });
  const auto ra = rollout([&](auto&&... x) { return logit.act(x...); }, 20, 4);
  const auto rb = rollout([&](auto&&... x) { return prob.act(x...); }, 20, 4);
  REQUIRE(a.subgoal.size() == b.subgoal.size());
  for (std::size_t k = 0; k < a.subgoal.size(); ++k) CHECK(a.subgoal[k].chosen == b.subgoal[k].chosen);
  for (std::size_t k = 0; k < ra.size(); ++k) CHECK(ra[k] == rb[k]);
}

TEST_CASE("constant scores reproduce the N = 1 subgoal distribution") {
  const auto& agent = warm_agent();
  const int decisions = 10000;
  const MatF s = row2(1.5, 3.5, decisions), g = row2(6.5, 5.5, decisions);
  const std::vector<int> t(decisions, 0);

  Policy flat(agent, Method::sharsa, 1, 1);
  Policy constant(agent, Method::sharsa, 8, 1);
  constant.set_high_score([](const MatF& x, const MatF&, const MatF&) { return VecF(VecF::Zero(x.rows())); });
  Rng r1(21), r2(22);
  flat.act(s, g, t, r1);
  constant.act(s, g, t, r2);
  const MatF w1 = flat.subgoals(), w2 = constant.subgoals();
  // Two-sample KS at alpha = 0.001 on each coordinate.
  const double crit = 1.95 * std::sqrt(2.0 / decisions);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> a(w1.col(c).data(), w1.col(c).data() + decisions);
    std::vector<double> b(w2.col(c).data(), w2.col(c).data() + decisions);
    CHECK(ks_statistic(a, b) < crit);
  }
}

TEST_CASE("more candidates never lower the expected best score") {
  const auto& agent = warm_agent();
  const int decisions = 2000;
  const MatF s = row2(1.5, 3.5, decisions), g = row2(6.5, 5.5, decisions);
  const std::vector<int> t(decisions, 0);
  double prev = -1e30;
  for (int n : {2, 4, 16}) {
    DecisionLog log;
    Policy p(agent, Method::sharsa, n, 1);
    p.set_log(&log);
    Rng rng(30);
    p.act(s, g, t, rng);
    double mean = 0.0;
    for (const auto& d : log.subgoal) mean += d.scores[static_cast<std::size_t>(d.chosen)];
    mean /= static_cast<double>(log.subgoal.size());
    CHECK(mean >= prev);
    prev = mean;
  }
}

TEST_CASE("flat policy acting") {
  const auto& agent = warm_agent();
  Policy a(agent, Method::fbc, 1, 1), b(agent, Method::fbc, 1, 1);
  const auto ra = rollout([&](auto&&... x) { return a.act(x...); }, 10, 9);
  const auto rb = rollout([&](auto&&... x) { return b.act(x...); }, 10, 9);
  bool same = true, boxed = true;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    same = same && ra[k] == rb[k];
    boxed = boxed && ra[k].cwiseAbs().maxCoeff() <= 0.25f + 1e-7f;
  }
  CHECK(same);
  CHECK(boxed);
}

TEST_CASE("agent checkpoint") {
  const auto dir = std::filesystem::temp_directory_path() / "hrl_test_agent_ckpt";
  std::filesystem::remove_all(dir);
  warm_agent().save(dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  std::ifstream in(dir / "pi_high.hrlw", std::ios::binary);
  REQUIRE(in);
  const auto p = nn::load_params(in);
  CHECK(nn::checksum(p) == nn::checksum(warm_agent().high()->net().net));
}
