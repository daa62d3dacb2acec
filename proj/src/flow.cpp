#include "hrl/flow.hpp"

#include <algorithm>

#include "hrl/error.hpp"

namespace hrl::flow {

FlowNet<float> flow_new(int cond_dim, int sample_dim, const std::vector<int>& hidden, bool layer_norm,
                        std::uint64_t seed) {
  if (cond_dim < 0 || sample_dim < 1) throw Error(ErrorKind::config, "flow dims must be positive");
  nn::MlpConfig cfg;
  cfg.layer_dims.push_back(1 + cond_dim + sample_dim);
  cfg.layer_dims.insert(cfg.layer_dims.end(), hidden.begin(), hidden.end());
  cfg.layer_dims.push_back(sample_dim);
  cfg.use_layer_norm = layer_norm;
  return {nn::mlp_init(cfg, seed), cond_dim, sample_dim};
}

namespace {

template <class T>
void assemble(nn::Mat<T>& in, const nn::Vec<T>& t, const nn::Mat<T>& cond, const nn::Mat<T>& x) {
  const auto rows = x.rows();
  in.resize(rows, 1 + cond.cols() + x.cols());
  in.col(0) = t;
  if (cond.cols() > 0) in.middleCols(1, cond.cols()) = cond;
  in.rightCols(x.cols()) = x;
}

}  // namespace

template <class T>
T flow_loss_given(const FlowNet<T>& f, const nn::Mat<T>& cond, const nn::Mat<T>& target, const nn::Mat<T>& z,
                  const nn::Vec<T>& t, nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads) {
  if (cond.rows() != target.rows() || z.rows() != target.rows() || t.size() != target.rows()) {
    throw Error(ErrorKind::contract, "flow loss inputs are not batch-aligned");
  }
  if (cond.cols() != f.cond_dim || target.cols() != f.sample_dim || z.cols() != f.sample_dim) {
    throw Error(ErrorKind::contract, "flow loss inputs have wrong widths");
  }
  // x_t = (1 - t) z + t x
  nn::Mat<T> xt = z.array().colwise() * (T(1) - t.array());
  xt.array() += target.array().colwise() * t.array();
  nn::Mat<T> in;
  assemble(in, t, cond, xt);
  const auto& v = nn::mlp_forward(f.net, in, cache);
  const nn::Mat<T> diff = v - (target - z);
  const T inv_b = T(1) / static_cast<T>(target.rows());
  const T loss = diff.squaredNorm() * inv_b;
  if (grads != nullptr) nn::mlp_backward(f.net, cache, (T(2) * inv_b * diff).eval(), *grads);
  return loss;
}

template <class T>
T flow_loss(const FlowNet<T>& f, const nn::Mat<T>& cond, const nn::Mat<T>& target, Rng& rng,
            nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads) {
  const auto rows = target.rows();
  nn::Mat<T> z(rows, target.cols());
  nn::Vec<T> t(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    t[r] = static_cast<T>(rng.uniform());
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = static_cast<T>(rng.normal());
  }
  return flow_loss_given(f, cond, target, z, t, cache, grads);
}

template float flow_loss_given(const FlowNet<float>&, const nn::MatF&, const nn::MatF&, const nn::MatF&,
                               const nn::VecF&, nn::MlpCache<float>&, nn::MlpGrads<float>*);
template double flow_loss_given(const FlowNet<double>&, const nn::MatD&, const nn::MatD&, const nn::MatD&,
                                const nn::VecD&, nn::MlpCache<double>&, nn::MlpGrads<double>*);
template float flow_loss(const FlowNet<float>&, const nn::MatF&, const nn::MatF&, Rng&, nn::MlpCache<float>&,
                         nn::MlpGrads<float>*);
template double flow_loss(const FlowNet<double>&, const nn::MatD&, const nn::MatD&, Rng&, nn::MlpCache<double>&,
                          nn::MlpGrads<double>*);

nn::MatF flow_integrate(const FlowNet<float>& f, const nn::MatF& cond, nn::MatF x, const FlowSampleConfig& cfg) {
  if (cfg.steps < 1) throw Error(ErrorKind::config, "flow sampling needs at least one Euler step");
  if (cond.cols() != f.cond_dim || x.cols() != f.sample_dim || cond.rows() != x.rows()) {
    throw Error(ErrorKind::contract, "flow sampling inputs have wrong shapes");
  }
  nn::MlpCache<float> cache;
  nn::MatF in;
  nn::VecF t(x.rows());
  const float dt = 1.0f / static_cast<float>(cfg.steps);
  for (int k = 0; k < cfg.steps; ++k) {
    t.setConstant(static_cast<float>(k) / static_cast<float>(cfg.steps));
    assemble(in, t, cond, x);
    x += dt * nn::mlp_forward(f.net, in, cache);
  }
  if (!cfg.clip_lo.empty()) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const auto ci = static_cast<std::size_t>(c);
      x.col(c) = x.col(c).cwiseMax(cfg.clip_lo[ci]).cwiseMin(cfg.clip_hi[ci]);
    }
  }
  return x;
}

nn::MatF flow_sample_batch(const FlowNet<float>& f, const nn::MatF& cond, const FlowSampleConfig& cfg, Rng& rng) {
  nn::MatF x(cond.rows(), f.sample_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
  return flow_integrate(f, cond, std::move(x), cfg);
}

std::vector<float> flow_sample(const FlowNet<float>& f, std::span<const float> cond, const FlowSampleConfig& cfg,
                               Rng& rng) {
  nn::MatF c(1, static_cast<Eigen::Index>(cond.size()));
  std::copy(cond.begin(), cond.end(), c.data());
  const auto x = flow_sample_batch(f, c, cfg, rng);
  return {x.data(), x.data() + x.size()};
}

float FlowTrainer::step(const nn::MatF& cond, const nn::MatF& target, Rng& rng) {
  const float loss = flow_loss(net_, cond, target, rng, cache_, &grads_);
  nn::adam_step(adam_, net_.net, grads_.params, lr_);
  return loss;
}

}  // namespace hrl::flow
