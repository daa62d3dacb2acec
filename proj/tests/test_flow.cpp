#include <cmath>
#include <functional>

#include "doctest.h"
#include "hrl/flow.hpp"

using namespace hrl;
using namespace hrl::flow;
using nn::MatF;

namespace {

// Cosine-decayed Adam on freshly drawn batches.
FlowTrainer train(int cond_dim, int sample_dim, const std::vector<int>& hidden, int steps, int batch,
                  std::uint64_t seed, const std::function<void(Rng&, MatF&, MatF&)>& draw) {
  const double lr = 1e-3;
  FlowTrainer tr(flow_new(cond_dim, sample_dim, hidden, true, seed), lr);
  Rng rng(seed + 1);
  MatF cond(batch, cond_dim), target(batch, sample_dim);
  for (int k = 0; k < steps; ++k) {
    tr.set_lr(0.5 * lr * (1.0 + std::cos(M_PI * k / steps)));
    draw(rng, cond, target);
    tr.step(cond, target, rng);
  }
  return tr;
}

}  // namespace

TEST_CASE("flow net shapes") {
  const auto f = flow_new(3, 2, {16}, true, 0);
  CHECK(f.net.cfg.input_dim() == 1 + 3 + 2);
  CHECK(f.net.cfg.output_dim() == 2);
  FlowSampleConfig c;
  c.steps = 0;
  Rng rng(0);
  CHECK_THROWS(flow_sample_batch(f, MatF(MatF::Zero(1, 3)), c, rng));
}

TEST_CASE("zero field returns the initial noise") {
  auto f = flow_new(1, 2, {8}, true, 0);
  f.net.out_w.setZero();
  f.net.out_b.setZero();
  MatF x0(3, 2);
  x0 << 0.1f, -2.0f, 1.5f, 0.3f, -0.7f, 0.0f;
  FlowSampleConfig c;
  const MatF x = flow_integrate(f, MatF(MatF::Zero(3, 1)), x0, c);
  CHECK(x == x0);
}

TEST_CASE("one Euler step of the optimal one-point field lands on the point") {
  // Affine field v(t, x) = a - x: the optimal field for a single target a at t = 0.
  auto f = flow_new(0, 2, {}, false, 0);
  f.net.out_w.setZero();
  f.net.out_w(1, 0) = -1.0f;  // rows: t, x0, x1
  f.net.out_w(2, 1) = -1.0f;
  f.net.out_b << 0.4f, -0.3f;
  FlowSampleConfig c;
  c.steps = 1;
  Rng rng(3);
  const MatF x = flow_sample_batch(f, MatF(MatF::Zero(50, 0)), c, rng);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    CHECK(x(r, 0) == doctest::Approx(0.4f).epsilon(1e-6));
    CHECK(x(r, 1) == doctest::Approx(-0.3f).epsilon(1e-6));
  }
}

TEST_CASE("interpolant regression target") {
  // Target forced equal to the noise: the regression target x - z is zero, so
  // the loss is the mean squared field output.
  const auto f = flow_new(1, 2, {8}, true, 1);
  Rng rng(2);
  MatF z(16, 2), cond(16, 1);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(rng.normal());
  cond.setZero();
  nn::VecF t(16);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
  nn::MlpCache<float> cache;
  const float loss = flow_loss_given<float>(f, cond, z, z, t, cache, nullptr);
  MatF in(16, 4);
  in << t, cond, z;
  const MatF v = nn::mlp_predict(f.net, in);
  CHECK(loss == doctest::Approx(v.squaredNorm() / 16.0f).epsilon(1e-5));

  // Training on target == z drives the field to zero.
  FlowTrainer tr(flow_new(1, 2, {32}, true, 4), 3e-3);
  nn::MlpGrads<float> grads;
  auto adam = nn::adam_init(tr.net().net);
  for (int k = 0; k < 1500; ++k) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(rng.normal());
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
    flow_loss_given<float>(tr.net(), cond, z, z, t, cache, &grads);
    nn::adam_step(adam, tr.net().net, grads.params, 3e-3);
  }
  const float after = flow_loss_given<float>(tr.net(), cond, z, z, t, cache, nullptr);
  CHECK(after < 1e-3f);
}

TEST_CASE("one-point dataset: samples converge to the point") {
  const float a = 0.3f;
  auto tr = train(1, 1, {64, 64}, 30000, 256, 5, [&](Rng&, MatF& c, MatF& x) {
    c.setZero();
    x.setConstant(a);
  });
  Rng rng(6);
  const MatF s = flow_sample_batch(tr.net(), MatF(MatF::Zero(1000, 1)), {}, rng);
  CHECK((s.array() - a).abs().maxCoeff() < 0.02f);
}

TEST_CASE("bimodal target: samples land on the modes in equal mass") {
  auto tr = train(1, 1, {64, 64, 64, 64}, 20000, 256, 5, [](Rng& rng, MatF& c, MatF& x) {
    c.setZero();
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, 0) = rng.bernoulli(0.5) ? 0.5f : -0.5f;
  });
  Rng rng(6);
  const MatF s = flow_sample_batch(tr.net(), MatF(MatF::Zero(1000, 1)), {}, rng);
  int near = 0, upper = 0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    near += std::abs(std::abs(s(r, 0)) - 0.5f) < 0.05f ? 1 : 0;
    upper += s(r, 0) > 0.0f ? 1 : 0;
  }
  CHECK(near >= 950);
  CHECK(std::abs(upper / 1000.0 - 0.5) <= 0.1);
}

TEST_CASE("conditioning separates disjoint targets") {
  auto tr = train(1, 2, {64, 64}, 3000, 128, 7, [](Rng& rng, MatF& c, MatF& x) {
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      const bool left = rng.bernoulli(0.5);
      c(r, 0) = left ? -1.0f : 1.0f;
      x(r, 0) = (left ? -0.7f : 0.7f) + 0.05f * static_cast<float>(rng.normal());
      x(r, 1) = 0.05f * static_cast<float>(rng.normal());
    }
  });
  Rng rng(8);
  MatF c(1000, 1);
  for (Eigen::Index r = 0; r < c.rows(); ++r) c(r, 0) = r % 2 == 0 ? -1.0f : 1.0f;
  const MatF s = flow_sample_batch(tr.net(), c, {}, rng);
  int right = 0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const float own = c(r, 0) < 0 ? -0.7f : 0.7f;
    right += std::abs(s(r, 0) - own) < std::abs(s(r, 0) + own) ? 1 : 0;
  }
  CHECK(right >= 990);
}

TEST_CASE("sampling is deterministic and respects the clip box") {
  const auto f = flow_new(2, 2, {16}, true, 3);
  FlowSampleConfig c;
  c.clip_lo = {-0.1f, -0.2f};
  c.clip_hi = {0.1f, 0.2f};
  Rng a(4), b(4);
  const MatF cond = MatF(MatF::Ones(20, 2));
  const MatF x = flow_sample_batch(f, cond, c, a);
  CHECK(x == flow_sample_batch(f, cond, c, b));
  CHECK(x.col(0).maxCoeff() <= 0.1f);
  CHECK(x.col(1).minCoeff() >= -0.2f);
  const float v[2] = {1.0f, 1.0f};
  Rng d(4);
  CHECK(flow_sample(f, v, c, d).size() == 2);
}
