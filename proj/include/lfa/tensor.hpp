#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>
#include <memory>
#include <new>

#include <Eigen/Core>

#include "lfa/errors.hpp"

namespace lfa {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// Cache-line aligned storage that leaves value-initialized elements
// uninitialized, so scratch buffers about to be overwritten skip the zero
// fill. The fixed alignment keeps Eigen's vector peeling, and with it the
// floating-point summation order, independent of where the heap puts a
// buffer.
template <typename T>
struct TensorAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;

  TensorAllocator() = default;
  template <typename U>
  TensorAllocator(const TensorAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kAlignment}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kAlignment}); }

  template <typename U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <typename U>
  bool operator==(const TensorAllocator<U>&) const noexcept { return true; }
};

// Dense row-major array. Convolution stacks use the channel-major layout
// [C, N, H, W]; vector stages use [N, F].
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, const std::vector<T>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  // Contents are unspecified; the caller overwrites every element.
  static Tensor uninitialized(Shape shape) {
    Tensor t;
    t.data_.resize(shape_size(shape));
    t.shape_ = std::move(shape);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    auto out = Tensor<U>::uninitialized(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T, TensorAllocator<T>> data_;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Views a tensor as a rows x (size/rows) row-major matrix.
template <typename T>
MatrixMap<T> as_matrix(Tensor<T>& t, std::size_t rows) {
  return MatrixMap<T>(t.data(), static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(rows ? t.size() / rows : 0));
}
template <typename T>
ConstMatrixMap<T> as_matrix(const Tensor<T>& t, std::size_t rows) {
  return ConstMatrixMap<T>(t.data(), static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(rows ? t.size() / rows : 0));
}

inline void require_shape(const Shape& got, const Shape& want, const std::string& what) {
  if (got != want)
    throw ShapeError(what + ": expected " + shape_string(want) + ", got " + shape_string(got));
}

}  // namespace lfa
