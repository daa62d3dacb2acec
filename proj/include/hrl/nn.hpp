#pragma once

// Dense MLP with layer norm and exact GELU, analytic backprop, Adam and
// Polyak target updates. Templated on the scalar so training can run in
// float while the gradient checker runs in double.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <string>
#include <unsupported/Eigen/SpecialFunctions>
#include <vector>

#include "hrl/error.hpp"
#include "hrl/rng.hpp"

namespace hrl::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

enum class FinalActivation { none, sigmoid_eval_only };

struct MlpConfig {
  std::vector<int> layer_dims;  // input, hidden..., output
  bool use_layer_norm = true;
  FinalActivation final_activation = FinalActivation::none;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  void validate() const;
  bool operator==(const MlpConfig&) const = default;
};

inline constexpr double kLayerNormEps = 1e-6;

template <class T>
struct HiddenLayer {
  Mat<T> w;         // in x out
  Mat<T> b;         // 1 x out
  Mat<T> ln_scale;  // 1 x out
  Mat<T> ln_shift;  // 1 x out
};

template <class T>
struct MlpParams {
  MlpConfig cfg;
  std::vector<HiddenLayer<T>> hidden;
  Mat<T> out_w;
  Mat<T> out_b;

  // Every tensor in declaration order. Layer-norm tensors are listed even when
  // layer norm is disabled (they stay at their initial values).
  std::vector<Mat<T>*> tensors();
  std::vector<const Mat<T>*> tensors() const;
  std::size_t parameter_count() const;

  MlpParams zeros_like() const;
  template <class U>
  MlpParams<U> cast() const;
};

template <class T>
using TargetParams = MlpParams<T>;

template <class T>
struct LayerCache {
  Mat<T> xhat;   // normalized pre-activation (layer norm only)
  Vec<T> rstd;   // 1/sqrt(var + eps) per row
  Mat<T> z;      // GELU input
  Mat<T> cdf;    // Phi(z)
  Mat<T> act;    // GELU output
};

template <class T>
struct MlpCache {
  Mat<T> input;
  std::vector<LayerCache<T>> layers;
  Mat<T> output;
};

template <class T>
struct MlpGrads {
  MlpParams<T> params;  // same shapes as the network
  Mat<T> dx;            // filled only when requested
};

MlpParams<float> mlp_init(const MlpConfig& cfg, std::uint64_t seed);

template <class T>
MlpParams<T> mlp_init_as(const MlpConfig& cfg, std::uint64_t seed) {
  return mlp_init(cfg, seed).template cast<T>();
}

// Forward pass retaining activations in `cache`. Returns a reference to
// cache.output.
template <class T>
const Mat<T>& mlp_forward(const MlpParams<T>& p, const Mat<T>& x, MlpCache<T>& cache);

// Forward without keeping a cache the caller cares about.
template <class T>
Mat<T> mlp_predict(const MlpParams<T>& p, const Mat<T>& x);

// Gradients of sum(dy .* y) w.r.t. the parameters of the cached forward.
// `grads` is resized as needed and overwritten.
template <class T>
void mlp_backward(const MlpParams<T>& p, const MlpCache<T>& cache, const Mat<T>& dy, MlpGrads<T>& grads,
                  bool want_dx = false);

template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

// ---------------------------------------------------------------------------

template <class T>
struct AdamState {
  std::vector<Mat<T>> m;
  std::vector<Mat<T>> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
AdamState<T> adam_init(const MlpParams<T>& p);

// Throws ErrorKind::numeric on non-finite gradients before touching state.
template <class T>
void adam_step(AdamState<T>& st, MlpParams<T>& p, const MlpParams<T>& g, double lr);

template <class T>
void target_update(TargetParams<T>& tgt, const MlpParams<T>& online, double tau);

template <class T>
bool all_finite(const MlpParams<T>& p);

// FNV-1a over the raw bytes of every tensor; used to prove evaluation does
// not mutate parameters.
template <class T>
std::uint64_t checksum(const MlpParams<T>& p);

// Checkpoint: "HRLW", u16 version, config echo, f32 tensors in declaration order.
void save_params(std::ostream& os, const MlpParams<float>& p);
MlpParams<float> load_params(std::istream& is);

// ---------------------------------------------------------------------------
// Numeric helpers shared by losses.

template <class T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <class T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Binary cross-entropy of sigmoid(logit) against a soft label y in [0, 1].
template <class T>
T bce_logit(T logit, T y) {
  return (T(1) - y) * logit + softplus(-logit);
}

template <class T>
T reg_loss(T x, T y) {
  return (x - y) * (x - y);
}

// Max over entries of |a - b| / max(|a|, |b|, floor).
double max_rel_error(const MlpParams<double>& a, const MlpParams<double>& b, double floor = 1e-6);

// ---------------------------------------------------------------------------

extern template struct MlpParams<float>;
extern template struct MlpParams<double>;
extern template const Mat<float>& mlp_forward(const MlpParams<float>&, const Mat<float>&, MlpCache<float>&);
extern template const Mat<double>& mlp_forward(const MlpParams<double>&, const Mat<double>&, MlpCache<double>&);
extern template void mlp_backward(const MlpParams<float>&, const MlpCache<float>&, const Mat<float>&,
                                  MlpGrads<float>&, bool);
extern template void mlp_backward(const MlpParams<double>&, const MlpCache<double>&, const Mat<double>&,
                                  MlpGrads<double>&, bool);

template <class T>
template <class U>
MlpParams<U> MlpParams<T>::cast() const {
  MlpParams<U> out;
  out.cfg = cfg;
  out.hidden.resize(hidden.size());
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    out.hidden[i].w = hidden[i].w.template cast<U>();
    out.hidden[i].b = hidden[i].b.template cast<U>();
    out.hidden[i].ln_scale = hidden[i].ln_scale.template cast<U>();
    out.hidden[i].ln_shift = hidden[i].ln_shift.template cast<U>();
  }
  out.out_w = out_w.template cast<U>();
  out.out_b = out_b.template cast<U>();
  return out;
}

}  // namespace hrl::nn
