#pragma once

// Conditional flow-matching behavioural cloning. The vector field is an MLP
// over [t, condition, x_t]; samples are produced by Euler integration from
// standard normal noise.

#include <span>
#include <vector>

#include "hrl/nn.hpp"
#include "hrl/rng.hpp"

namespace hrl::flow {

template <class T>
struct FlowNet {
  nn::MlpParams<T> net;
  int cond_dim = 0;
  int sample_dim = 0;
};

FlowNet<float> flow_new(int cond_dim, int sample_dim, const std::vector<int>& hidden, bool layer_norm,
                        std::uint64_t seed);

struct FlowSampleConfig {
  int steps = 10;
  // Optional per-dimension clip box for the final sample; empty means none.
  std::vector<float> clip_lo;
  std::vector<float> clip_hi;
};

// Mean over rows of ||v(t, cond, x_t) - (target - z)||^2 with the given noise
// and times. Gradients (if requested) are w.r.t. the field parameters.
template <class T>
T flow_loss_given(const FlowNet<T>& f, const nn::Mat<T>& cond, const nn::Mat<T>& target, const nn::Mat<T>& z,
                  const nn::Vec<T>& t, nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads);

// Draws t ~ U[0,1] and z ~ N(0, I) per row (t first, then z) and evaluates
// flow_loss_given.
template <class T>
T flow_loss(const FlowNet<T>& f, const nn::Mat<T>& cond, const nn::Mat<T>& target, Rng& rng,
            nn::MlpCache<T>& cache, nn::MlpGrads<T>* grads);

// One sample per row of `cond`.
nn::MatF flow_sample_batch(const FlowNet<float>& f, const nn::MatF& cond, const FlowSampleConfig& cfg, Rng& rng);

// Integrates from the given initial noise (rows of x0) without drawing.
nn::MatF flow_integrate(const FlowNet<float>& f, const nn::MatF& cond, nn::MatF x0, const FlowSampleConfig& cfg);

std::vector<float> flow_sample(const FlowNet<float>& f, std::span<const float> cond, const FlowSampleConfig& cfg,
                               Rng& rng);

// Owns a field, its optimizer state and scratch buffers.
class FlowTrainer {
 public:
  FlowTrainer(FlowNet<float> f, double lr) : net_(std::move(f)), adam_(nn::adam_init(net_.net)), lr_(lr) {}

  float step(const nn::MatF& cond, const nn::MatF& target, Rng& rng);

  const FlowNet<float>& net() const { return net_; }
  FlowNet<float>& net() { return net_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  FlowNet<float> net_;
  nn::AdamState<float> adam_;
  nn::MlpCache<float> cache_;
  nn::MlpGrads<float> grads_;
  double lr_;
};

}  // namespace hrl::flow
