#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wrin {

/// Raised when operand shapes are inconsistent with an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf appears where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by file readers on malformed input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t sample() const { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Dense N x C x H x W array in row-major order.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor filled(Shape s, T v) { return Tensor(s, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[offset(n, c, h, w)]; }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  /// Pointer to the first element of sample `n`.
  T* sample(std::size_t n) { return data_.data() + n * shape_.sample(); }
  const T* sample(std::size_t n) const { return data_.data() + n * shape_.sample(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Concatenates along the channel axis in input order.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = inputs[0]->shape();
  std::size_t channels = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Shape& s = inputs[i]->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: input " + std::to_string(i) + " has shape " + s.str() +
                       ", expected N,H,W of " + first.str());
    }
    channels += s.c;
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  T* dst = out.data();
  for (std::size_t n = 0; n < first.n; ++n) {
    for (const Tensor<T>* in : inputs) {
      const std::size_t len = in->shape().sample();
      std::copy_n(in->sample(n), len, dst);
      dst += len;
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs) {
  std::vector<const Tensor<T>*> ptrs;
  ptrs.reserve(inputs.size());
  for (const auto& t : inputs) ptrs.push_back(&t);
  return concat_channels<T>(std::span<const Tensor<T>* const>(ptrs));
}

/// Copies channels [begin, begin + count) into a new tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s.c) throw ShapeError("slice_channels: range exceeds channel count");
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(x.sample(n) + begin * plane, count * plane, out.sample(n));
  }
  return out;
}

template <typename T>
Tensor<T> add_elementwise(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add_elementwise: shape " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

}  // namespace wrin
