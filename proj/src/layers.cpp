#include "lfa/layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>

namespace lfa {
namespace {

template <typename T>
void draw_normal(Tensor<T>& t, std::mt19937_64& rng, double std) {
  // A fresh distribution per array keeps the stream a pure function of the
  // engine state (no cached second variate carried across calls).
  std::normal_distribution<double> dist(0.0, std);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

// Channel-major tensors: the spatial plane of (c, n) is contiguous.
std::size_t plane_count(const Shape& s) { return s.at(0) * s.at(1); }

// For each kernel tap (ky, kx) and each column (n, oy, ox), the offset of the
// source pixel within one channel block [N, Hl, Wl], or -1 for padding. The
// map is shared by all channels, so it is built once per geometry.
const std::vector<std::int32_t>& tap_offsets(const WindowGeometry& g) {
  using Key = std::array<std::size_t, 8>;
  thread_local std::map<Key, std::vector<std::int32_t>> cache;
  const Key key{g.batch, g.large_h, g.large_w, g.small_h, g.small_w, g.kernel, g.stride, g.pad};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const std::size_t k = g.kernel;
  const std::size_t row_len = g.batch * g.small_h * g.small_w;
  std::vector<std::int32_t> table(k * k * row_len);
  const auto lh = static_cast<std::ptrdiff_t>(g.large_h);
  const auto lw = static_cast<std::ptrdiff_t>(g.large_w);
  std::int32_t* out = table.data();
  for (std::size_t ky = 0; ky < k; ++ky)
    for (std::size_t kx = 0; kx < k; ++kx)
      for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.small_h; ++oy)
          for (std::size_t ox = 0; ox < g.small_w; ++ox) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && iy < lh && ix >= 0 && ix < lw;
            *out++ = inside ? static_cast<std::int32_t>((static_cast<std::ptrdiff_t>(n) * lh + iy) * lw + ix) : -1;
          }
  if (cache.size() > 64) cache.clear();
  return cache.emplace(key, std::move(table)).first->second;
}

}  // namespace

template <typename T>
void im2col(const T* large, const WindowGeometry& g, T* columns) {
  const auto& table = tap_offsets(g);
  const std::size_t taps = g.kernel * g.kernel;
  const std::size_t row_len = g.batch * g.small_h * g.small_w;
  const std::size_t block = g.batch * g.large_h * g.large_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* src = large + c * block;
    for (std::size_t t = 0; t < taps; ++t) {
      const std::int32_t* idx = table.data() + t * row_len;
      T* dst = columns + (c * taps + t) * row_len;
      for (std::size_t j = 0; j < row_len; ++j) dst[j] = idx[j] >= 0 ? src[idx[j]] : T(0);
    }
  }
}

template <typename T>
void col2im(const T* columns, const WindowGeometry& g, T* large) {
  const auto& table = tap_offsets(g);
  const std::size_t taps = g.kernel * g.kernel;
  const std::size_t row_len = g.batch * g.small_h * g.small_w;
  const std::size_t block = g.batch * g.large_h * g.large_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* dst = large + c * block;
    for (std::size_t t = 0; t < taps; ++t) {
      const std::int32_t* idx = table.data() + t * row_len;
      const T* src = columns + (c * taps + t) * row_len;
      for (std::size_t j = 0; j < row_len; ++j)
        if (idx[j] >= 0) dst[idx[j]] += src[j];
    }
  }
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t stride, std::size_t pad)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {}

template <typename T>
void Conv2d<T>::declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const {
  Tensor<T> w({out_, in_, kernel_, kernel_});
  draw_normal(w, rng, weight_std);
  params.add(name_ + ".weight", std::move(w));
  params.add(name_ + ".bias", Tensor<T>({out_}));
}

template <typename T>
WindowGeometry Conv2d<T>::geometry(const Shape& s) const {
  if (s.size() != 4 || s[0] != in_)
    throw ShapeError(name_ + ": expected [" + std::to_string(in_) + ", N, H, W] input, got " +
                     shape_string(s));
  const std::size_t oh = (s[2] + 2 * pad_ - kernel_) / stride_ + 1;
  const std::size_t ow = (s[3] + 2 * pad_ - kernel_) / stride_ + 1;
  return {in_, s[1], s[2], s[3], oh, ow, kernel_, stride_, pad_};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const ParameterSet<T>& params, const Tensor<T>& x,
                             const ForwardContext&, LayerCache<T>* cache) const {
  const auto g = geometry(x.shape());
  const std::size_t kk = in_ * kernel_ * kernel_;
  const std::size_t m = g.batch * g.small_h * g.small_w;
  auto cols = Tensor<T>::uninitialized({kk, m});
  im2col(x.data(), g, cols.data());

  auto y = Tensor<T>::uninitialized({out_, g.batch, g.small_h, g.small_w});
  auto ym = as_matrix(y, out_);
  ym.noalias() = as_matrix(params.at(name_ + ".weight"), out_) * as_matrix(cols, kk);
  const auto& b = params.at(name_ + ".bias");
  for (std::size_t o = 0; o < out_; ++o) ym.row(o).array() += b[o];

  if (cache) {
    cache->input_shape = x.shape();
    cache->columns = std::move(cols);
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const ParameterSet<T>& params, const LayerCache<T>& cache,
                              const Tensor<T>& dy, ParameterSet<T>* grads, bool need_dx) const {
  const auto g = geometry(cache.input_shape);
  const std::size_t kk = in_ * kernel_ * kernel_;
  const auto dym = as_matrix(dy, out_);
  if (grads) {
    const auto& w = params.at(name_ + ".weight");
    auto& dw = grads->accumulator(name_ + ".weight", w.shape());
    as_matrix(dw, out_).noalias() += dym * as_matrix(cache.columns, kk).transpose();
    auto& db = grads->accumulator(name_ + ".bias", {out_});
    for (std::size_t o = 0; o < out_; ++o) db[o] += dym.row(o).sum();
  }
  if (!need_dx) return {};
  auto dcols = Tensor<T>::uninitialized({kk, dy.size() / out_});
  as_matrix(dcols, kk).noalias() =
      as_matrix(params.at(name_ + ".weight"), out_).transpose() * dym;
  Tensor<T> dx(cache.input_shape);
  col2im(dcols.data(), g, dx.data());
  return dx;
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, std::size_t in_channels,
                                    std::size_t out_channels, std::size_t kernel,
                                    std::size_t stride, std::size_t pad)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {
  const auto out_pad = static_cast<std::ptrdiff_t>(stride + 2 * pad) - static_cast<std::ptrdiff_t>(kernel);
  if (out_pad < 0 || out_pad >= static_cast<std::ptrdiff_t>(stride))
    throw ConfigError(name_ + ": kernel/stride/pad do not give an exact stride-x upsampling");
}

template <typename T>
void ConvTranspose2d<T>::declare(ParameterSet<T>& params, std::mt19937_64& rng,
                                 double weight_std) const {
  Tensor<T> w({in_, out_, kernel_, kernel_});
  draw_normal(w, rng, weight_std);
  params.add(name_ + ".weight", std::move(w));
  params.add(name_ + ".bias", Tensor<T>({out_}));
}

template <typename T>
WindowGeometry ConvTranspose2d<T>::geometry(const Shape& s) const {
  if (s.size() != 4 || s[0] != in_)
    throw ShapeError(name_ + ": expected [" + std::to_string(in_) + ", N, H, W] input, got " +
                     shape_string(s));
  return {out_, s[1], s[2] * stride_, s[3] * stride_, s[2], s[3], kernel_, stride_, pad_};
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const ParameterSet<T>& params, const Tensor<T>& x,
                                      const ForwardContext&, LayerCache<T>* cache) const {
  const auto g = geometry(x.shape());
  const std::size_t kk = out_ * kernel_ * kernel_;
  auto cols = Tensor<T>::uninitialized({kk, x.size() / in_});
  as_matrix(cols, kk).noalias() =
      as_matrix(params.at(name_ + ".weight"), in_).transpose() * as_matrix(x, in_);
  Tensor<T> y({out_, g.batch, g.large_h, g.large_w});
  col2im(cols.data(), g, y.data());
  const auto& b = params.at(name_ + ".bias");
  auto ym = as_matrix(y, out_);
  for (std::size_t o = 0; o < out_; ++o) ym.row(o).array() += b[o];
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const ParameterSet<T>& params, const LayerCache<T>& cache,
                                       const Tensor<T>& dy, ParameterSet<T>* grads,
                                       bool need_dx) const {
  const auto g = geometry(cache.input.shape());
  const std::size_t kk = out_ * kernel_ * kernel_;
  const std::size_t m = cache.input.size() / in_;
  auto dcols = Tensor<T>::uninitialized({kk, m});
  im2col(dy.data(), g, dcols.data());
  const auto& w = params.at(name_ + ".weight");
  if (grads) {
    auto& dw = grads->accumulator(name_ + ".weight", w.shape());
    as_matrix(dw, in_).noalias() += as_matrix(cache.input, in_) * as_matrix(dcols, kk).transpose();
    auto& db = grads->accumulator(name_ + ".bias", {out_});
    const auto dym = as_matrix(dy, out_);
    for (std::size_t o = 0; o < out_; ++o) db[o] += dym.row(o).sum();
  }
  if (!need_dx) return {};
  auto dx = Tensor<T>::uninitialized(cache.input.shape());
  as_matrix(dx, in_).noalias() = as_matrix(w, in_) * as_matrix(dcols, kk);
  return dx;
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, std::size_t channels, double eps)
    : name_(std::move(name)), channels_(channels), eps_(eps) {}

template <typename T>
void BatchNorm<T>::declare(ParameterSet<T>& params, std::mt19937_64&, double) const {
  params.add(name_ + ".gamma", Tensor<T>({channels_}, T(1)));
  params.add(name_ + ".beta", Tensor<T>({channels_}, T(0)));
  params.add(name_ + ".running_mean", Tensor<T>({channels_}, T(0)));
  params.add(name_ + ".running_var", Tensor<T>({channels_}, T(1)));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const ParameterSet<T>& params, const Tensor<T>& x,
                                const ForwardContext& ctx, LayerCache<T>* cache) const {
  if (x.rank() != 4 || x.dim(0) != channels_)
    throw ShapeError(name_ + ": expected [" + std::to_string(channels_) + ", N, H, W] input, got " +
                     shape_string(x.shape()));
  const std::size_t m = x.size() / channels_;
  const auto& gamma = params.at(name_ + ".gamma");
  const auto& beta = params.at(name_ + ".beta");
  const auto xm = as_matrix(x, channels_);
  Tensor<T> y(x.shape());
  auto ym = as_matrix(y, channels_);

  std::vector<T> mean(channels_), var(channels_), inv_std(channels_);
  if (ctx.mode == Mode::Train) {
    for (std::size_t c = 0; c < channels_; ++c) {
      const T mu = xm.row(c).sum() / static_cast<T>(m);
      const T v = (xm.row(c).array() - mu).square().sum() / static_cast<T>(m);
      mean[c] = mu;
      var[c] = v;
    }
  } else {
    const auto& rm = params.at(name_ + ".running_mean");
    const auto& rv = params.at(name_ + ".running_var");
    for (std::size_t c = 0; c < channels_; ++c) {
      mean[c] = rm[c];
      var[c] = rv[c];
    }
  }
  for (std::size_t c = 0; c < channels_; ++c) {
    inv_std[c] = T(1) / std::sqrt(var[c] + static_cast<T>(eps_));
    ym.row(c) = ((xm.row(c).array() - mean[c]) * (inv_std[c] * gamma[c]) + beta[c]).matrix();
  }
  if (cache) {
    Tensor<T> xhat(x.shape());
    auto xh = as_matrix(xhat, channels_);
    for (std::size_t c = 0; c < channels_; ++c)
      xh.row(c) = ((xm.row(c).array() - mean[c]) * inv_std[c]).matrix();
    cache->columns = std::move(xhat);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
    cache->input = Tensor<T>();
  }
  return y;
}

// Backward assumes the cached forward ran in Train mode (batch statistics).
template <typename T>
Tensor<T> BatchNorm<T>::backward(const ParameterSet<T>& params, const LayerCache<T>& cache,
                                 const Tensor<T>& dy, ParameterSet<T>* grads, bool need_dx) const {
  const std::size_t m = dy.size() / channels_;
  const auto dym = as_matrix(dy, channels_);
  const auto xh = as_matrix(cache.columns, channels_);
  const auto& gamma = params.at(name_ + ".gamma");
  std::vector<T> sum_dy(channels_), sum_dy_xh(channels_);
  for (std::size_t c = 0; c < channels_; ++c) {
    sum_dy[c] = dym.row(c).sum();
    sum_dy_xh[c] = (dym.row(c).array() * xh.row(c).array()).sum();
  }
  if (grads) {
    auto& dg = grads->accumulator(name_ + ".gamma", {channels_});
    auto& dbeta = grads->accumulator(name_ + ".beta", {channels_});
    for (std::size_t c = 0; c < channels_; ++c) {
      dg[c] += sum_dy_xh[c];
      dbeta[c] += sum_dy[c];
    }
  }
  if (!need_dx) return {};
  Tensor<T> dx(dy.shape());
  auto dxm = as_matrix(dx, channels_);
  const T inv_m = T(1) / static_cast<T>(m);
  for (std::size_t c = 0; c < channels_; ++c) {
    const T scale = gamma[c] * cache.inv_std[c];
    dxm.row(c) = (scale * (dym.row(c).array() - sum_dy[c] * inv_m -
                           xh.row(c).array() * (sum_dy_xh[c] * inv_m)))
                     .matrix();
  }
  return dx;
}

template <typename T>
void BatchNorm<T>::update_running_stats(ParameterSet<T>& params, const LayerCache<T>& cache,
                                        double momentum) const {
  if (cache.mean.size() != channels_) return;
  auto& rm = params.at(name_ + ".running_mean");
  auto& rv = params.at(name_ + ".running_var");
  const std::size_t m = cache.columns.size() / channels_;
  const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
  for (std::size_t c = 0; c < channels_; ++c) {
    rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * cache.mean[c]);
    rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbias * cache.var[c]);
  }
}

// ------------------------------------------------------------- LeakyRelu

template <typename T>
Tensor<T> LeakyRelu<T>::forward(const ParameterSet<T>&, const Tensor<T>& x,
                                const ForwardContext& ctx, LayerCache<T>* cache) const {
  Tensor<T> y(x.shape());
  const T* in = x.data();
  T* out = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = in[i] > T(0) ? in[i] : slope_ * in[i];
  if (ctx.kinks)
    for (std::size_t i = 0; i < x.size(); ++i) ctx.kinks->push_back(in[i] > T(0));
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> LeakyRelu<T>::backward(const ParameterSet<T>&, const LayerCache<T>& cache,
                                 const Tensor<T>& dy, ParameterSet<T>*, bool need_dx) const {
  if (!need_dx) return {};
  Tensor<T> dx(dy.shape());
  const T* in = cache.input.data();
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = in[i] > T(0) ? dy[i] : slope_ * dy[i];
  return dx;
}

// --------------------------------------------------------------- Sigmoid

template <typename T>
Tensor<T> Sigmoid<T>::forward(const ParameterSet<T>&, const Tensor<T>& x, const ForwardContext& ctx,
                              LayerCache<T>* cache) const {
  Tensor<T> y(x.shape());
  const T lo = static_cast<T>(floor_);
  const T hi = static_cast<T>(1.0 - floor_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    T p = T(1) / (T(1) + std::exp(-x[i]));
    std::uint8_t side = 1;
    if (floor_ > 0.0) {
      if (p < lo) {
        p = lo;
        side = 0;
      } else if (p > hi) {
        p = hi;
        side = 2;
      }
    }
    y[i] = p;
    if (ctx.kinks && floor_ > 0.0) ctx.kinks->push_back(side);
  }
  if (cache) {
    cache->output = y;
    cache->input = x;
  }
  return y;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const ParameterSet<T>&, const LayerCache<T>& cache,
                               const Tensor<T>& dy, ParameterSet<T>*, bool need_dx) const {
  if (!need_dx) return {};
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const T p = cache.output[i];
    bool clamped = false;
    if (floor_ > 0.0) {
      const T raw = T(1) / (T(1) + std::exp(-cache.input[i]));
      clamped = raw < static_cast<T>(floor_) || raw > static_cast<T>(1.0 - floor_);
    }
    dx[i] = clamped ? T(0) : dy[i] * p * (T(1) - p);
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : name_(std::move(name)), in_(in_features), out_(out_features) {}

template <typename T>
void Linear<T>::declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const {
  Tensor<T> w({out_, in_});
  draw_normal(w, rng, weight_std);
  params.add(name_ + ".weight", std::move(w));
  params.add(name_ + ".bias", Tensor<T>({out_}));
}

template <typename T>
Tensor<T> Linear<T>::forward(const ParameterSet<T>& params, const Tensor<T>& x,
                             const ForwardContext&, LayerCache<T>* cache) const {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeError(name_ + ": expected [N, " + std::to_string(in_) + "] input, got " +
                     shape_string(x.shape()));
  const std::size_t n = x.dim(0);
  Tensor<T> y({n, out_});
  auto ym = as_matrix(y, n);
  ym.noalias() = as_matrix(x, n) * as_matrix(params.at(name_ + ".weight"), out_).transpose();
  const auto& b = params.at(name_ + ".bias");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out_; ++o) ym(i, o) += b[o];
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const ParameterSet<T>& params, const LayerCache<T>& cache,
                              const Tensor<T>& dy, ParameterSet<T>* grads, bool need_dx) const {
  const std::size_t n = dy.dim(0);
  const auto dym = as_matrix(dy, n);
  const auto& w = params.at(name_ + ".weight");
  if (grads) {
    auto& dw = grads->accumulator(name_ + ".weight", w.shape());
    as_matrix(dw, out_).noalias() += dym.transpose() * as_matrix(cache.input, n);
    auto& db = grads->accumulator(name_ + ".bias", {out_});
    for (std::size_t o = 0; o < out_; ++o) db[o] += dym.col(o).sum();
  }
  if (!need_dx) return {};
  Tensor<T> dx({n, in_});
  as_matrix(dx, n).noalias() = dym * as_matrix(w, out_);
  return dx;
}

// ------------------------------------------------------- reshape stages

template <typename T>
Tensor<T> Flatten<T>::forward(const ParameterSet<T>&, const Tensor<T>& x, const ForwardContext&,
                              LayerCache<T>* cache) const {
  if (x.rank() != 4) throw ShapeError("flatten: expected [C, N, H, W], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(0), n = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c * hw});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ni = 0; ni < n; ++ni)
      std::copy_n(x.data() + (ci * n + ni) * hw, hw, y.data() + ni * c * hw + ci * hw);
  if (cache) cache->input_shape = x.shape();
  return y;
}

template <typename T>
Tensor<T> Flatten<T>::backward(const ParameterSet<T>&, const LayerCache<T>& cache,
                               const Tensor<T>& dy, ParameterSet<T>*, bool need_dx) const {
  if (!need_dx) return {};
  const auto& s = cache.input_shape;
  const std::size_t c = s[0], n = s[1], hw = s[2] * s[3];
  Tensor<T> dx(s);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ni = 0; ni < n; ++ni)
      std::copy_n(dy.data() + ni * c * hw + ci * hw, hw, dx.data() + (ci * n + ni) * hw);
  return dx;
}

template <typename T>
Tensor<T> Unflatten<T>::forward(const ParameterSet<T>&, const Tensor<T>& x, const ForwardContext&,
                                LayerCache<T>*) const {
  const std::size_t hw = h_ * w_;
  if (x.rank() != 2 || x.dim(1) != c_ * hw)
    throw ShapeError("unflatten: expected [N, " + std::to_string(c_ * hw) + "], got " +
                     shape_string(x.shape()));
  const std::size_t n = x.dim(0);
  Tensor<T> y({c_, n, h_, w_});
  for (std::size_t ci = 0; ci < c_; ++ci)
    for (std::size_t ni = 0; ni < n; ++ni)
      std::copy_n(x.data() + ni * c_ * hw + ci * hw, hw, y.data() + (ci * n + ni) * hw);
  return y;
}

template <typename T>
Tensor<T> Unflatten<T>::backward(const ParameterSet<T>&, const LayerCache<T>&, const Tensor<T>& dy,
                                 ParameterSet<T>*, bool need_dx) const {
  if (!need_dx) return {};
  const std::size_t n = dy.dim(1), hw = h_ * w_;
  Tensor<T> dx({n, c_ * hw});
  for (std::size_t ci = 0; ci < c_; ++ci)
    for (std::size_t ni = 0; ni < n; ++ni)
      std::copy_n(dy.data() + (ci * n + ni) * hw, hw, dx.data() + ni * c_ * hw + ci * hw);
  return dx;
}

template <typename T>
Tensor<T> GlobalAveragePool<T>::forward(const ParameterSet<T>&, const Tensor<T>& x,
                                        const ForwardContext&, LayerCache<T>* cache) const {
  if (x.rank() != 4) throw ShapeError("pool: expected [C, N, H, W], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(0), n = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  const auto planes = as_matrix(x, plane_count(x.shape()));
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ni = 0; ni < n; ++ni)
      y[ni * c + ci] = planes.row(ci * n + ni).sum() / static_cast<T>(hw);
  if (cache) cache->input_shape = x.shape();
  return y;
}

template <typename T>
Tensor<T> GlobalAveragePool<T>::backward(const ParameterSet<T>&, const LayerCache<T>& cache,
                                         const Tensor<T>& dy, ParameterSet<T>*, bool need_dx) const {
  if (!need_dx) return {};
  const auto& s = cache.input_shape;
  const std::size_t c = s[0], n = s[1], hw = s[2] * s[3];
  Tensor<T> dx(s);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t ni = 0; ni < n; ++ni)
      std::fill_n(dx.data() + (ci * n + ni) * hw, hw, dy[ni * c + ci] / static_cast<T>(hw));
  return dx;
}

// ------------------------------------------------------------ Sequential

template <typename T>
void Sequential<T>::declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const {
  for (const auto& layer : layers_) layer->declare(params, rng, weight_std);
}

template <typename T>
Tensor<T> Sequential<T>::forward(const ParameterSet<T>& params, Tensor<T> x,
                                 const ForwardContext& ctx, Tape<T>* tape) const {
  if (tape) {
    tape->clear();
    tape->resize(layers_.size());
  }
  for (std::size_t i = 0; i < layers_.size(); ++i)
    x = layers_[i]->forward(params, x, ctx, tape ? &(*tape)[i] : nullptr);
  return x;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const ParameterSet<T>& params, const Tape<T>& tape, Tensor<T> dy,
                                  ParameterSet<T>* grads, bool need_dx) const {
  if (tape.size() != layers_.size()) throw ShapeError("backward called without a matching forward tape");
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want_dx = need_dx || i > 0;
    dy = layers_[i]->backward(params, tape[i], dy, grads, want_dx);
  }
  return dy;
}

template <typename T>
void Sequential<T>::update_running_stats(ParameterSet<T>& params, const Tape<T>& tape,
                                         double momentum) const {
  for (std::size_t i = 0; i < layers_.size() && i < tape.size(); ++i)
    layers_[i]->update_running_stats(params, tape[i], momentum);
}

#define LFA_INSTANTIATE(T)                                                \
  template void im2col<T>(const T*, const WindowGeometry&, T*);          \
  template void col2im<T>(const T*, const WindowGeometry&, T*);          \
  template class Conv2d<T>;                                              \
  template class ConvTranspose2d<T>;                                     \
  template class BatchNorm<T>;                                           \
  template class LeakyRelu<T>;                                           \
  template class Sigmoid<T>;                                             \
  template class Linear<T>;                                              \
  template class Flatten<T>;                                             \
  template class Unflatten<T>;                                           \
  template class GlobalAveragePool<T>;                                   \
  template class Sequential<T>;

LFA_INSTANTIATE(float)
LFA_INSTANTIATE(double)

#undef LFA_INSTANTIATE

}  // namespace lfa
