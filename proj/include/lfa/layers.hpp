#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lfa/parameters.hpp"
#include "lfa/tensor.hpp"

namespace lfa {

enum class Mode { Train, Inference };

// One byte per activation recording which branch of a non-differentiable
// point (rectifier kink, probability clamp) it evaluated. Two evaluations
// with equal signatures lie on the same smooth piece.
using KinkSignature = std::vector<std::uint8_t>;

struct ForwardContext {
  Mode mode = Mode::Inference;
  KinkSignature* kinks = nullptr;
};

template <typename T>
struct LayerCache {
  Tensor<T> input;
  Shape input_shape;
  Tensor<T> output;
  Tensor<T> columns;
  std::vector<T> mean;
  std::vector<T> var;
  std::vector<T> inv_std;
};

template <typename T>
using Tape = std::vector<LayerCache<T>>;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  // Adds this layer's arrays to `params`, drawing weights from N(0, weight_std^2).
  virtual void declare(ParameterSet<T>&, std::mt19937_64&, double /*weight_std*/) const {}

  virtual Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x,
                            const ForwardContext& ctx, LayerCache<T>* cache) const = 0;

  // Accumulates parameter gradients into `grads` when non-null and returns
  // the input gradient when `need_dx`.
  virtual Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache,
                             const Tensor<T>& dy, ParameterSet<T>* grads, bool need_dx) const = 0;

  virtual void update_running_stats(ParameterSet<T>&, const LayerCache<T>&, double) const {}
};

// Geometry of a strided k x k window mapping between a "large" grid and a
// "small" grid: large = small * stride - pad + k_offset. For a convolution
// the input is large; for a transposed convolution the output is.
struct WindowGeometry {
  std::size_t channels, batch, large_h, large_w, small_h, small_w, kernel, stride, pad;
};

// [C, N, Hl, Wl] -> [C*k*k, N*Hs*Ws]
template <typename T>
void im2col(const T* large, const WindowGeometry& g, T* columns);
// Adjoint of im2col: accumulates [C*k*k, N*Hs*Ws] into a zeroed [C, N, Hl, Wl].
template <typename T>
void col2im(const T* columns, const WindowGeometry& g, T* large);

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad);
  void declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const override;
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;

 private:
  WindowGeometry geometry(const Shape& input) const;
  std::string name_;
  std::size_t in_, out_, kernel_, stride_, pad_;
};

// Output is exactly stride x the input size; the implied output padding
// stride + 2*pad - kernel must lie in [0, stride).
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t stride, std::size_t pad);
  void declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const override;
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;

 private:
  WindowGeometry geometry(const Shape& input) const;
  std::string name_;
  std::size_t in_, out_, kernel_, stride_, pad_;
};

// Per-channel normalization over [C, N, H, W]. Train mode uses batch
// statistics, inference mode the running averages.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, std::size_t channels, double eps);
  void declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const override;
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;
  void update_running_stats(ParameterSet<T>& params, const LayerCache<T>& cache,
                            double momentum) const override;

 private:
  std::string name_;
  std::size_t channels_;
  double eps_;
};

// slope 0 gives the plain rectifier.
template <typename T>
class LeakyRelu final : public Layer<T> {
 public:
  explicit LeakyRelu(double slope) : slope_(static_cast<T>(slope)) {}
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;

 private:
  T slope_;
};

// Logistic function, optionally clamped to [floor, 1 - floor] with zero
// gradient on the clamped side.
template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  explicit Sigmoid(double clamp_floor = 0.0) : floor_(clamp_floor) {}
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;

 private:
  double floor_;
};

// x [N, in] -> x W^T + b, W [out, in].
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features);
  void declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const override;
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;

 private:
  std::string name_;
  std::size_t in_, out_;
};

// [C, N, H, W] -> [N, C*H*W] with (c, h, w) feature order.
template <typename T>
class Flatten final : public Layer<T> {
 public:
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;
};

// Inverse of Flatten: [N, C*H*W] -> [C, N, H, W].
template <typename T>
class Unflatten final : public Layer<T> {
 public:
  Unflatten(std::size_t channels, std::size_t height, std::size_t width)
      : c_(channels), h_(height), w_(width) {}
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;

 private:
  std::size_t c_, h_, w_;
};

// [C, N, H, W] -> [N, C], spatial mean.
template <typename T>
class GlobalAveragePool final : public Layer<T> {
 public:
  Tensor<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx,
                    LayerCache<T>* cache) const override;
  Tensor<T> backward(const ParameterSet<T>& params, const LayerCache<T>& cache, const Tensor<T>& dy,
                     ParameterSet<T>* grads, bool need_dx) const override;
};

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  void emplace(Args&&... args) {
    layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
  }

  void declare(ParameterSet<T>& params, std::mt19937_64& rng, double weight_std) const;
  Tensor<T> forward(const ParameterSet<T>& params, Tensor<T> x, const ForwardContext& ctx,
                    Tape<T>* tape) const;
  Tensor<T> backward(const ParameterSet<T>& params, const Tape<T>& tape, Tensor<T> dy,
                     ParameterSet<T>* grads, bool need_dx) const;
  void update_running_stats(ParameterSet<T>& params, const Tape<T>& tape, double momentum) const;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace lfa
