#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hrl/error.hpp"
#include "hrl/gradcheck.hpp"
#include "hrl/nn.hpp"

using namespace hrl;
using namespace hrl::nn;

namespace {

// Maclaurin series of erf, independent of the library erf used by the MLP.
double series_erf(double x) {
  double term = x, sum = x;
  for (int k = 1; k < 60; ++k) {
    term *= -x * x / k;
    sum += term / (2 * k + 1);
  }
  return 2.0 / std::sqrt(3.14159265358979323846) * sum;
}

MlpConfig cfg(std::vector<int> dims, bool ln = true) {
  MlpConfig c;
  c.layer_dims = std::move(dims);
  c.use_layer_norm = ln;
  return c;
}

// Numeric gradient of sum(w .* y) for a double network.
double weighted_sum(const MlpParams<double>& p, const MatD& x, const MatD& w) {
  return mlp_predict(p, x).cwiseProduct(w).sum();
}

}  // namespace

TEST_CASE("GELU matches an independent erf") {
  const double oracle = 0.5 * 1.0 * (1.0 + series_erf(1.0 / std::sqrt(2.0)));
  CHECK(gelu(1.0) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(gelu(1.0) == doctest::Approx(0.8413447).epsilon(1e-7));
  CHECK(gelu(0.0) == 0.0);
  for (double x : {-2.5, -0.7, 0.3, 1.9}) {
    CHECK(gelu(x) == doctest::Approx(0.5 * x * (1.0 + series_erf(x / std::sqrt(2.0)))).epsilon(1e-12));
  }
}

TEST_CASE("mlp_init is deterministic and follows the stated scheme") {
  const auto c = cfg({5, 16, 7, 3});
  const auto a = mlp_init(c, 9);
  const auto b = mlp_init(c, 9);
  CHECK(checksum(a) == checksum(b));
  CHECK(checksum(a) != checksum(mlp_init(c, 10)));
  for (const auto& l : a.hidden) {
    CHECK(l.b.isZero());
    CHECK(l.ln_scale.isOnes());
    CHECK(l.ln_shift.isZero());
  }
  CHECK(a.out_b.isZero());
  const double bound0 = std::sqrt(6.0 / (5 + 16));
  CHECK(a.hidden[0].w.cwiseAbs().maxCoeff() <= bound0);
  CHECK(a.hidden[0].w.cwiseAbs().maxCoeff() > 0.5 * bound0);
  CHECK(a.parameter_count() == (5 * 16 + 16 * 3) + (16 * 7 + 7 * 3) + (7 * 3 + 3));
  CHECK_THROWS_AS(cfg({4}).validate(), Error);
  CHECK_THROWS_AS(cfg({4, 0, 2}).validate(), Error);
}

TEST_CASE("affine-only network and GELU path") {
  auto p = mlp_init_as<double>(cfg({3, 2}), 1);
  p.out_b << 0.5, -1.0;
  MatD x(2, 3);
  x << 1, 2, 3, -1, 0, 4;
  const MatD y = mlp_predict(p, x);
  const MatD expect = (x * p.out_w).rowwise() + p.out_b.row(0);
  CHECK((y - expect).cwiseAbs().maxCoeff() == 0.0);

  // One hidden unit without layer norm: zero input gives GELU(0) = 0.
  auto q = mlp_init_as<double>(cfg({1, 1, 1}, false), 2);
  CHECK(mlp_predict(q, MatD(MatD::Zero(1, 1)))(0, 0) == 0.0);
}

TEST_CASE("forward rejects bad inputs") {
  const auto p = mlp_init(cfg({3, 4, 2}), 0);
  MlpCache<float> cache;
  CHECK_THROWS_AS(mlp_forward(p, MatF(MatF::Zero(2, 4)), cache), Error);
  MatF x = MatF(MatF::Zero(2, 3));
  x(1, 1) = std::nanf("");
  try {
    mlp_forward(p, x, cache);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
}

TEST_CASE("layer norm rows are standardized before the affine") {
  const auto p = mlp_init_as<double>(cfg({6, 32, 2}), 3);
  Rng rng(4);
  MatD x(20, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 3.0 * rng.normal() + 1.0;
  MlpCache<double> cache;
  mlp_forward(p, x, cache);
  const auto& xhat = cache.layers[0].xhat;
  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
    const double mean = xhat.row(r).mean();
    const double var = (xhat.row(r).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("backward: linear case, zero upstream, finite differences") {
  auto p = mlp_init_as<double>(cfg({3, 2}), 1);
  MatD x(4, 3);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9, -1, -2, -3;
  MlpCache<double> cache;
  mlp_forward(p, x, cache);
  MlpGrads<double> g;
  mlp_backward(p, cache, MatD(MatD::Ones(4, 2)), g);
  for (int c = 0; c < 2; ++c) {
    CHECK((g.params.out_w.col(c) - x.colwise().sum().transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.params.out_b(0, c) == 4.0);
  }

  auto deep = mlp_init_as<double>(cfg({4, 6, 5, 3}), 2);
  Rng rng(3);
  for (auto* t : deep.tensors()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += 0.2 * rng.normal();
  }
  MatD xin(5, 4), w(5, 3);
  for (Eigen::Index i = 0; i < xin.size(); ++i) xin.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  mlp_forward(deep, xin, cache);
  mlp_backward(deep, cache, MatD(MatD::Zero(5, 3)), g);
  for (const auto* t : g.params.tensors()) CHECK(t->isZero());
  mlp_backward(deep, cache, w, g, true);
  auto numeric = deep.zeros_like();
  auto pt = deep.tensors();
  auto nt = numeric.tensors();
  const double h = 1e-5;
  for (std::size_t t = 0; t < pt.size(); ++t) {
    for (Eigen::Index i = 0; i < pt[t]->size(); ++i) {
      double& v = pt[t]->data()[i];
      const double keep = v;
      v = keep + h;
      const double up = weighted_sum(deep, xin, w);
      v = keep - h;
      const double down = weighted_sum(deep, xin, w);
      v = keep;
      nt[t]->data()[i] = (up - down) / (2 * h);
    }
  }
  CHECK(max_rel_error(g.params, numeric) < 1e-4);
  // Input gradient.
  MatD dx_num(xin.rows(), xin.cols());
  for (Eigen::Index i = 0; i < xin.size(); ++i) {
    MatD xp = xin, xm = xin;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    dx_num.data()[i] = (weighted_sum(deep, xp, w) - weighted_sum(deep, xm, w)) / (2 * h);
  }
  CHECK((g.dx - dx_num).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(mlp_backward(deep, cache, MatD(MatD::Zero(2, 3)), g), Error);
}

TEST_CASE("Adam: zero gradients, closed-form first step, lr 0, non-finite") {
  auto p = mlp_init(cfg({1, 1}, false), 0);
  p.out_w(0, 0) = 0.25f;
  const auto start = p;
  auto st = adam_init(p);
  auto g = p.zeros_like();
  for (int k = 0; k < 5; ++k) adam_step(st, p, g, 1e-3);
  CHECK(checksum(p) == checksum(start));
  CHECK(st.t == 5);

  auto q = mlp_init_as<double>(cfg({1, 1}, false), 0);
  q.out_w(0, 0) = 0.25;
  auto sq = adam_init(q);
  auto gq = q.zeros_like();
  gq.out_w(0, 0) = 1.0;
  adam_step(sq, q, gq, 0.1);
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps).
  CHECK(q.out_w(0, 0) == doctest::Approx(0.25 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));

  auto frozen = q;
  adam_step(sq, q, gq, 0.0);
  CHECK(checksum(q) == checksum(frozen));

  gq.out_w(0, 0) = std::numeric_limits<double>::infinity();
  const auto t_before = sq.t;
  CHECK_THROWS_AS(adam_step(sq, q, gq, 0.1), Error);
  CHECK(sq.t == t_before);
}

TEST_CASE("Adam runs are deterministic") {
  auto run = [] {
    auto p = mlp_init(cfg({2, 8, 1}), 5);
    auto st = adam_init(p);
    Rng rng(1);
    MlpCache<float> cache;
    MlpGrads<float> g;
    for (int k = 0; k < 20; ++k) {
      MatF x(4, 2);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
      const MatF y = mlp_forward(p, x, cache);
      mlp_backward(p, cache, y, g);
      adam_step(st, p, g.params, 1e-2);
    }
    return checksum(p);
  };
  CHECK(run() == run());
}

TEST_CASE("Polyak target updates") {
  auto online = mlp_init_as<double>(cfg({1, 1}, false), 0);
  auto tgt = online.zeros_like();
  online.out_w(0, 0) = 1.0;
  online.out_b(0, 0) = 1.0;
  target_update(tgt, online, 0.005);
  CHECK(tgt.out_w(0, 0) == doctest::Approx(0.005));
  for (int k = 0; k < 5000; ++k) target_update(tgt, online, 0.005);
  CHECK(tgt.out_w(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  target_update(tgt, online, 1.0);
  CHECK(max_rel_error(tgt, online) == 0.0);
  CHECK_THROWS_AS(target_update(tgt, online, 0.0), Error);
}

TEST_CASE("numeric helpers") {
  CHECK(bce_logit(0.0, 0.5) == doctest::Approx(std::log(2.0)));
  CHECK(bce_logit(20.0, 1.0) == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(bce_logit(20.0, 1.0) == doctest::Approx(2.06e-9).epsilon(1e-2));
  CHECK(std::isfinite(bce_logit(-500.0, 1.0)));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(reg_loss(0.3, 0.3) == 0.0);
}

TEST_CASE("checkpoint round trip") {
  const auto p = mlp_init(cfg({3, 5, 2}), 8);
  std::stringstream ss;
  save_params(ss, p);
  const auto q = load_params(ss);
  CHECK(q.cfg == p.cfg);
  CHECK(checksum(q) == checksum(p));
  std::stringstream bad("HRLX....");
  CHECK_THROWS_AS(load_params(bad), Error);
}

TEST_CASE("gradient checker over every registered loss") {
  for (auto loss : gradcheck::all_losses()) {
    const auto r = gradcheck::grad_check(loss, 11);
    INFO(gradcheck::to_string(loss));
    CHECK(r.parameters <= 300);
    CHECK(r.max_rel_error < 1e-4);
  }
  auto p = mlp_init_as<double>(cfg({2, 3, 1}), 1);
  CHECK(max_rel_error(p, p) == 0.0);
  CHECK_THROWS_AS(gradcheck::loss_from_string("iql"), Error);
}
