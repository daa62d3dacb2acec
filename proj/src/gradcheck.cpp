#include "hrl/gradcheck.hpp"

#include <functional>

#include "hrl/error.hpp"
#include "hrl/flow.hpp"
#include "hrl/learners.hpp"
#include "hrl/rng.hpp"

namespace hrl::gradcheck {

const char* to_string(Loss l) {
  switch (l) {
    case Loss::dqn: return "dqn";
    case Loss::sarsa_regression: return "sarsa-regression";
    case Loss::sarsa_bce: return "sarsa-bce";
    case Loss::flow_matching: return "flow-matching";
  }
  return "?";
}

Loss loss_from_string(const std::string& s) {
  for (auto l : all_losses()) {
    if (s == to_string(l)) return l;
  }
  throw Error(ErrorKind::config, "unknown loss '" + s + "' (dqn, sarsa-regression, sarsa-bce, flow-matching)");
}

std::vector<Loss> all_losses() { return {Loss::dqn, Loss::sarsa_regression, Loss::sarsa_bce, Loss::flow_matching}; }

namespace {

using nn::MatD;
using nn::VecD;

MatD random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Randomizes LN affine parameters and biases so their gradients are exercised
// away from the initial values.
void perturb(nn::MlpParams<double>& p, Rng& rng) {
  for (auto* t : p.tensors()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += 0.3 * rng.normal();
  }
}

Result check(nn::MlpParams<double> p, const std::function<double(const nn::MlpParams<double>&, nn::MlpGrads<double>*)>& f,
             double h) {
  if (p.parameter_count() > 300) throw Error(ErrorKind::contract, "grad-check instance exceeds 300 parameters");
  nn::MlpGrads<double> analytic;
  f(p, &analytic);
  nn::MlpParams<double> numeric = p.zeros_like();
  auto tensors = p.tensors();
  auto out = numeric.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (Eigen::Index i = 0; i < tensors[t]->size(); ++i) {
      double& x = tensors[t]->data()[i];
      const double keep = x;
      x = keep + h;
      const double up = f(p, nullptr);
      x = keep - h;
      const double down = f(p, nullptr);
      x = keep;
      out[t]->data()[i] = (up - down) / (2.0 * h);
    }
  }
  return {nn::max_rel_error(analytic.params, numeric), p.parameter_count()};
}

nn::MlpConfig small(int in, int out) {
  nn::MlpConfig c;
  c.layer_dims = {in, 8, 8, out};
  c.use_layer_norm = true;
  return c;
}

}  // namespace

Result grad_check(Loss loss, std::uint64_t seed, double h) {
  Rng rng(seed);
  const Eigen::Index batch = 6;
  switch (loss) {
    case Loss::dqn: {
      auto p = nn::mlp_init_as<double>(small(3, 2), seed);
      perturb(p, rng);
      const MatD s = random_mat(rng, batch, 3);
      std::vector<int> a;
      for (Eigen::Index r = 0; r < batch; ++r) a.push_back(static_cast<int>(rng.below(2)));
      const VecD y = random_mat(rng, batch, 1, 2.0).col(0);
      return check(p, [&](const nn::MlpParams<double>& q, nn::MlpGrads<double>* g) {
        nn::MlpCache<double> cache;
        return learn::dqn_loss(q, s, a, y, cache, g);
      }, h);
    }
    case Loss::sarsa_regression:
    case Loss::sarsa_bce: {
      const auto kind = loss == Loss::sarsa_bce ? learn::LossKind::bce : learn::LossKind::regression;
      auto p = nn::mlp_init_as<double>(small(4, 2), seed);
      perturb(p, rng);
      const MatD in = random_mat(rng, batch, 4);
      VecD y(batch);
      for (Eigen::Index r = 0; r < batch; ++r) y[r] = kind == learn::LossKind::bce ? rng.uniform() : 2.0 * rng.normal();
      return check(p, [&](const nn::MlpParams<double>& q, nn::MlpGrads<double>* g) {
        nn::MlpCache<double> cache;
        return learn::value_loss(q, in, y, kind, cache, g);
      }, h);
    }
    case Loss::flow_matching: {
      flow::FlowNet<double> f{nn::mlp_init_as<double>(small(5, 2), seed), 2, 2};
      perturb(f.net, rng);
      const MatD cond = random_mat(rng, batch, 2);
      const MatD target = random_mat(rng, batch, 2);
      const MatD z = random_mat(rng, batch, 2);
      VecD t(batch);
      for (Eigen::Index r = 0; r < batch; ++r) t[r] = rng.uniform();
      return check(f.net, [&](const nn::MlpParams<double>& q, nn::MlpGrads<double>* g) {
        nn::MlpCache<double> cache;
        const flow::FlowNet<double> ff{q, 2, 2};
        return flow::flow_loss_given(ff, cond, target, z, t, cache, g);
      }, h);
    }
  }
  throw Error(ErrorKind::contract, "unhandled loss");
}

}  // namespace hrl::gradcheck
