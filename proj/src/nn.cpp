#include "hrl/nn.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace hrl::nn {

void MlpConfig::validate() const {
  if (layer_dims.size() < 2) throw Error(ErrorKind::config, "MLP needs at least input and output dims");
  for (int d : layer_dims) {
    if (d <= 0) throw Error(ErrorKind::config, "MLP layer widths must be positive");
  }
}

template <class T>
std::vector<Mat<T>*> MlpParams<T>::tensors() {
  std::vector<Mat<T>*> out;
  for (auto& l : hidden) {
    out.push_back(&l.w);
    out.push_back(&l.b);
    out.push_back(&l.ln_scale);
    out.push_back(&l.ln_shift);
  }
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

template <class T>
std::vector<const Mat<T>*> MlpParams<T>::tensors() const {
  std::vector<const Mat<T>*> out;
  for (const auto& l : hidden) {
    out.push_back(&l.w);
    out.push_back(&l.b);
    out.push_back(&l.ln_scale);
    out.push_back(&l.ln_shift);
  }
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

template <class T>
std::size_t MlpParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

template <class T>
MlpParams<T> MlpParams<T>::zeros_like() const {
  MlpParams<T> z = *this;
  for (auto* t : z.tensors()) t->setZero();
  return z;
}

template struct MlpParams<float>;
template struct MlpParams<double>;

MlpParams<float> mlp_init(const MlpConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  auto uniform_fill = [&rng](MatF& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  };
  MlpParams<float> p;
  p.cfg = cfg;
  const auto& dims = cfg.layer_dims;
  for (std::size_t l = 0; l + 2 < dims.size(); ++l) {
    HiddenLayer<float> h;
    h.w.resize(dims[l], dims[l + 1]);
    uniform_fill(h.w);
    h.b = MatF::Zero(1, dims[l + 1]);
    h.ln_scale = MatF::Ones(1, dims[l + 1]);
    h.ln_shift = MatF::Zero(1, dims[l + 1]);
    p.hidden.push_back(std::move(h));
  }
  p.out_w.resize(dims[dims.size() - 2], dims.back());
  uniform_fill(p.out_w);
  p.out_b = MatF::Zero(1, dims.back());
  return p;
}

template <class T>
const Mat<T>& mlp_forward(const MlpParams<T>& p, const Mat<T>& x, MlpCache<T>& cache) {
  if (x.cols() != p.cfg.input_dim()) {
    throw Error(ErrorKind::contract, "MLP input width " + std::to_string(x.cols()) + " != " +
                                         std::to_string(p.cfg.input_dim()));
  }
  if (!x.allFinite()) throw Error(ErrorKind::numeric, "non-finite MLP input");
  cache.input = x;
  cache.layers.resize(p.hidden.size());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const Mat<T>* in = &cache.input;
  for (std::size_t l = 0; l < p.hidden.size(); ++l) {
    const auto& layer = p.hidden[l];
    auto& c = cache.layers[l];
    c.z.noalias() = (*in) * layer.w;
    c.z.rowwise() += layer.b.row(0);
    if (p.cfg.use_layer_norm) {
      const Eigen::Index width = c.z.cols();
      const Vec<T> mean = c.z.rowwise().sum() / T(width);
      c.xhat = c.z.colwise() - mean;
      const Vec<T> var = c.xhat.array().square().rowwise().sum() / T(width);
      c.rstd = (var.array() + T(kLayerNormEps)).rsqrt();
      c.xhat.array().colwise() *= c.rstd.array();
      c.z.noalias() = c.xhat;
      c.z.array().rowwise() *= layer.ln_scale.row(0).array();
      c.z.rowwise() += layer.ln_shift.row(0);
    }
    c.cdf = (T(0.5) * ((c.z.array() * inv_sqrt2).erf() + T(1))).matrix();
    c.act = c.z.cwiseProduct(c.cdf);
    in = &c.act;
  }
  cache.output.noalias() = (*in) * p.out_w;
  cache.output.rowwise() += p.out_b.row(0);
  return cache.output;
}

template <class T>
Mat<T> mlp_predict(const MlpParams<T>& p, const Mat<T>& x) {
  MlpCache<T> cache;
  Mat<T> y = mlp_forward(p, x, cache);
  if (p.cfg.final_activation == FinalActivation::sigmoid_eval_only) {
    y = y.unaryExpr([](T v) { return sigmoid(v); });
  }
  return y;
}

template <class T>
void mlp_backward(const MlpParams<T>& p, const MlpCache<T>& cache, const Mat<T>& dy, MlpGrads<T>& grads,
                  bool want_dx) {
  if (dy.rows() != cache.output.rows() || dy.cols() != cache.output.cols()) {
    throw Error(ErrorKind::contract, "dy shape does not match the cached forward");
  }
  if (cache.layers.size() != p.hidden.size()) throw Error(ErrorKind::contract, "cache from a different network");
  auto& g = grads.params;
  if (g.hidden.size() != p.hidden.size()) g = p.zeros_like();
  const Mat<T>& last = p.hidden.empty() ? cache.input : cache.layers.back().act;
  g.out_w.noalias() = last.transpose() * dy;
  g.out_b = dy.colwise().sum();
  if (p.hidden.empty()) {
    if (want_dx) grads.dx.noalias() = dy * p.out_w.transpose();
    return;
  }
  const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  Mat<T> da;
  da.noalias() = dy * p.out_w.transpose();
  Mat<T> dz, dxhat;
  Vec<T> m1, m2;
  for (std::size_t li = p.hidden.size(); li-- > 0;) {
    const auto& layer = p.hidden[li];
    const auto& c = cache.layers[li];
    auto& gl = g.hidden[li];
    // d/dz [z Phi(z)] = Phi(z) + z phi(z)
    dz = (da.array() * (c.cdf.array() + c.z.array() * (T(-0.5) * c.z.array().square()).exp() * inv_sqrt_2pi))
             .matrix();
    if (p.cfg.use_layer_norm) {
      gl.ln_scale = dz.cwiseProduct(c.xhat).colwise().sum();
      gl.ln_shift = dz.colwise().sum();
      dxhat = dz;
      dxhat.array().rowwise() *= layer.ln_scale.row(0).array();
      const T inv_w = T(1) / T(dz.cols());
      m1 = dxhat.rowwise().sum() * inv_w;
      m2 = dxhat.cwiseProduct(c.xhat).rowwise().sum() * inv_w;
      dz = dxhat.colwise() - m1;
      dz -= (c.xhat.array().colwise() * m2.array()).matrix();
      dz.array().colwise() *= c.rstd.array();
    } else {
      gl.ln_scale.setZero();
      gl.ln_shift.setZero();
    }
    const Mat<T>& in = li == 0 ? cache.input : cache.layers[li - 1].act;
    gl.w.noalias() = in.transpose() * dz;
    gl.b = dz.colwise().sum();
    if (li > 0) {
      da.noalias() = dz * layer.w.transpose();
    } else if (want_dx) {
      grads.dx.noalias() = dz * layer.w.transpose();
    }
  }
}

template const Mat<float>& mlp_forward(const MlpParams<float>&, const Mat<float>&, MlpCache<float>&);
template const Mat<double>& mlp_forward(const MlpParams<double>&, const Mat<double>&, MlpCache<double>&);
template Mat<float> mlp_predict(const MlpParams<float>&, const Mat<float>&);
template Mat<double> mlp_predict(const MlpParams<double>&, const Mat<double>&);
template void mlp_backward(const MlpParams<float>&, const MlpCache<float>&, const Mat<float>&, MlpGrads<float>&,
                           bool);
template void mlp_backward(const MlpParams<double>&, const MlpCache<double>&, const Mat<double>&,
                           MlpGrads<double>&, bool);

// ---------------------------------------------------------------------------

template <class T>
AdamState<T> adam_init(const MlpParams<T>& p) {
  AdamState<T> st;
  for (const auto* t : p.tensors()) {
    st.m.push_back(Mat<T>::Zero(t->rows(), t->cols()));
    st.v.push_back(Mat<T>::Zero(t->rows(), t->cols()));
  }
  return st;
}

template <class T>
void adam_step(AdamState<T>& st, MlpParams<T>& p, const MlpParams<T>& g, double lr) {
  auto params = p.tensors();
  const auto grads = g.tensors();
  if (params.size() != grads.size() || params.size() != st.m.size()) {
    throw Error(ErrorKind::contract, "Adam state, params and grads disagree in shape");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i]->rows() != params[i]->rows() || grads[i]->cols() != params[i]->cols()) {
      throw Error(ErrorKind::contract, "gradient tensor shape mismatch");
    }
    if (!grads[i]->allFinite()) {
      throw Error(ErrorKind::numeric, "non-finite gradient in tensor " + std::to_string(i) + " at Adam step " +
                                          std::to_string(st.t + 1));
    }
  }
  ++st.t;
  const T b1 = static_cast<T>(st.beta1);
  const T b2 = static_cast<T>(st.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(st.beta1, static_cast<double>(st.t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(st.beta2, static_cast<double>(st.t)));
  const T step = static_cast<T>(lr) / bc1;
  const T eps = static_cast<T>(st.eps);
  const T inv_sqrt_bc2 = T(1) / std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = st.m[i].array();
    auto v = st.v[i].array();
    const auto gr = grads[i]->array();
    m = b1 * m + (T(1) - b1) * gr;
    v = b2 * v + (T(1) - b2) * gr.square();
    if (lr != 0.0) params[i]->array() -= step * m / (v.sqrt() * inv_sqrt_bc2 + eps);
  }
}

template <class T>
void target_update(TargetParams<T>& tgt, const MlpParams<T>& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::invalid_argument, "tau must lie in (0, 1]");
  auto dst = tgt.tensors();
  const auto src = online.tensors();
  if (dst.size() != src.size()) throw Error(ErrorKind::contract, "target and online networks differ in shape");
  const T a = static_cast<T>(tau);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (tau == 1.0) {
      *dst[i] = *src[i];
    } else {
      dst[i]->array() = (T(1) - a) * dst[i]->array() + a * src[i]->array();
    }
  }
}

template <class T>
bool all_finite(const MlpParams<T>& p) {
  for (const auto* t : p.tensors()) {
    if (!t->allFinite()) return false;
  }
  return true;
}

template <class T>
std::uint64_t checksum(const MlpParams<T>& p) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto* t : p.tensors()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t->size()) * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template AdamState<float> adam_init(const MlpParams<float>&);
template AdamState<double> adam_init(const MlpParams<double>&);
template void adam_step(AdamState<float>&, MlpParams<float>&, const MlpParams<float>&, double);
template void adam_step(AdamState<double>&, MlpParams<double>&, const MlpParams<double>&, double);
template void target_update(TargetParams<float>&, const MlpParams<float>&, double);
template void target_update(TargetParams<double>&, const MlpParams<double>&, double);
template bool all_finite(const MlpParams<float>&);
template bool all_finite(const MlpParams<double>&);
template std::uint64_t checksum(const MlpParams<float>&);
template std::uint64_t checksum(const MlpParams<double>&);

double max_rel_error(const MlpParams<double>& a, const MlpParams<double>& b, double floor) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) throw Error(ErrorKind::contract, "parameter sets differ in shape");
  double worst = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    for (Eigen::Index k = 0; k < ta[i]->size(); ++k) {
      const double x = ta[i]->data()[k];
      const double y = tb[i]->data()[k];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints (little-endian).

namespace {

constexpr char kWeightsMagic[4] = {'H', 'R', 'L', 'W'};
constexpr std::uint16_t kWeightsVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw Error(ErrorKind::format, "truncated weights checkpoint");
  return v;
}

}  // namespace

void save_params(std::ostream& os, const MlpParams<float>& p) {
  os.write(kWeightsMagic, 4);
  put<std::uint16_t>(os, kWeightsVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(p.cfg.layer_dims.size()));
  for (int d : p.cfg.layer_dims) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  put<std::uint8_t>(os, p.cfg.use_layer_norm ? 1 : 0);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(p.cfg.final_activation));
  for (const auto* t : p.tensors()) {
    os.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!os) throw Error(ErrorKind::io, "failed writing weights checkpoint");
}

MlpParams<float> load_params(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kWeightsMagic, 4) != 0) throw Error(ErrorKind::format, "bad weights magic");
  const auto version = get<std::uint16_t>(is);
  if (version != kWeightsVersion) {
    throw Error(ErrorKind::version, "unsupported weights version " + std::to_string(version));
  }
  MlpConfig cfg;
  const auto count = get<std::uint32_t>(is);
  if (count < 2 || count > 64) throw Error(ErrorKind::format, "implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) cfg.layer_dims.push_back(static_cast<int>(get<std::uint32_t>(is)));
  cfg.use_layer_norm = get<std::uint8_t>(is) != 0;
  cfg.final_activation = static_cast<FinalActivation>(get<std::uint8_t>(is));
  auto p = mlp_init(cfg, 0);
  for (auto* t : p.tensors()) {
    is.read(reinterpret_cast<char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(float)));
    if (!is) throw Error(ErrorKind::format, "truncated weights checkpoint");
  }
  return p;
}

}  // namespace hrl::nn
