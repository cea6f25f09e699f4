#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "wrin/tensor.hpp"

namespace wrin {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Square-kernel, symmetric zero-padded cross-correlation.
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t weight_count() const { return out_channels * patch(); }

  /// floor((in + 2 pad - k) / stride) + 1; throws when below 1.
  std::size_t out_extent(std::size_t in) const {
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    if (in + 2 * padding < kernel) {
      throw ShapeError("conv2d: input extent " + std::to_string(in) + " too small for kernel " +
                       std::to_string(kernel));
    }
    return (in + 2 * padding - kernel) / stride + 1;
  }

  bool is_pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

namespace detail {

template <typename T>
void im2col(const T* x, std::size_t height, std::size_t width, const ConvGeometry& g,
            std::size_t out_h, std::size_t out_w, T* col) {
  const std::size_t k = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto H = static_cast<std::ptrdiff_t>(height);
  const auto W = static_cast<std::ptrdiff_t>(width);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = x + c * height * width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(ky);
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= H) {
            std::fill_n(dst, out_w, T(0));
            continue;
          }
          const T* src = plane + iy * W;
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(kx) - pad;
          if (stride == 1) {
            for (std::size_t ox = 0; ox < out_w; ++ox, ++ix) dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          } else {
            for (std::size_t ox = 0; ox < out_w; ++ox, ix += stride) {
              dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t height, std::size_t width, const ConvGeometry& g,
                std::size_t out_h, std::size_t out_w, T* dx) {
  const std::size_t k = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto H = static_cast<std::ptrdiff_t>(height);
  const auto W = static_cast<std::ptrdiff_t>(width);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = dx + c * height * width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= H) continue;
          const T* src = row + oy * out_w;
          T* dst = plane + iy * W;
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(kx) - pad;
          for (std::size_t ox = 0; ox < out_w; ++ox, ix += stride) {
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Forward convolution. `bias` may be empty.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, std::span<const T> weights, std::span<const T> bias,
                         const ConvGeometry& g) {
  const Shape& s = x.shape();
  if (s.c != g.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(s.c) + " channels, filter expects " +
                     std::to_string(g.in_channels));
  }
  if (weights.size() != g.weight_count()) throw ShapeError("conv2d: weight count mismatch");
  if (!bias.empty() && bias.size() != g.out_channels) throw ShapeError("conv2d: bias length mismatch");
  const std::size_t out_h = g.out_extent(s.h);
  const std::size_t out_w = g.out_extent(s.w);
  const std::size_t spatial = out_h * out_w;
  Tensor<T> y(Shape{s.n, g.out_channels, out_h, out_w});

  ConstMatrixMap<T> wmat(weights.data(), static_cast<Eigen::Index>(g.out_channels),
                         static_cast<Eigen::Index>(g.patch()));
  std::vector<T> col(g.is_pointwise() ? 0 : g.patch() * spatial);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = x.sample(n);
    if (!g.is_pointwise()) {
      detail::im2col(src, s.h, s.w, g, out_h, out_w, col.data());
      src = col.data();
    }
    ConstMatrixMap<T> cmat(src, static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(spatial));
    MatrixMap<T> ymat(y.sample(n), static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(spatial));
    ymat.noalias() = wmat * cmat;
    if (!bias.empty()) {
      for (std::size_t o = 0; o < g.out_channels; ++o) ymat.row(static_cast<Eigen::Index>(o)).array() += bias[o];
    }
  }
  return y;
}

/// Backward convolution. Accumulates into `grad_weights` / `grad_bias` (empty to skip)
/// and returns the input gradient (empty tensor when `need_input_grad` is false).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, std::span<const T> weights, const ConvGeometry& g,
                          const Tensor<T>& grad_out, std::span<T> grad_weights, std::span<T> grad_bias,
                          bool need_input_grad = true) {
  const Shape& s = x.shape();
  const std::size_t out_h = g.out_extent(s.h);
  const std::size_t out_w = g.out_extent(s.w);
  const std::size_t spatial = out_h * out_w;
  if (grad_out.shape() != Shape{s.n, g.out_channels, out_h, out_w}) {
    throw ShapeError("conv2d backward: upstream gradient shape " + grad_out.shape().str());
  }
  const auto rows = static_cast<Eigen::Index>(g.out_channels);
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto cols = static_cast<Eigen::Index>(spatial);
  ConstMatrixMap<T> wmat(weights.data(), rows, patch);

  Tensor<T> dx;
  if (need_input_grad) dx = Tensor<T>(s);
  std::vector<T> col(g.is_pointwise() ? 0 : g.patch() * spatial);
  std::vector<T> dcol(g.is_pointwise() || !need_input_grad ? 0 : g.patch() * spatial);
  for (std::size_t n = 0; n < s.n; ++n) {
    ConstMatrixMap<T> dy(grad_out.sample(n), rows, cols);
    if (!grad_bias.empty()) {
      for (std::size_t o = 0; o < g.out_channels; ++o) grad_bias[o] += dy.row(static_cast<Eigen::Index>(o)).sum();
    }
    const T* src = x.sample(n);
    if (!grad_weights.empty()) {
      if (!g.is_pointwise()) {
        detail::im2col(src, s.h, s.w, g, out_h, out_w, col.data());
        src = col.data();
      }
      ConstMatrixMap<T> cmat(src, patch, cols);
      MatrixMap<T> dw(grad_weights.data(), rows, patch);
      dw.noalias() += dy * cmat.transpose();
    }
    if (need_input_grad) {
      if (g.is_pointwise()) {
        MatrixMap<T> dxm(dx.sample(n), patch, cols);
        dxm.noalias() = wmat.transpose() * dy;
      } else {
        MatrixMap<T> dcm(dcol.data(), patch, cols);
        dcm.noalias() = wmat.transpose() * dy;
        detail::col2im_add(dcol.data(), s.h, s.w, g, out_h, out_w, dx.sample(n));
      }
    }
  }
  return dx;
}

template <typename T>
struct ConvParams {
  Tensor<T> weights;  // (C_out, C_in, k, k)
  std::vector<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static ConvParams make(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                         std::size_t stride, std::size_t padding, bool with_bias = false) {
    ConvParams p;
    p.weights = Tensor<T>(Shape{out_channels, in_channels, kernel, kernel});
    if (with_bias) p.bias.assign(out_channels, T(0));
    p.stride = stride;
    p.padding = padding;
    return p;
  }

  ConvGeometry geometry() const {
    if (weights.shape().h != weights.shape().w) throw ShapeError("conv2d: only square kernels are supported");
    return {weights.shape().c, weights.shape().n, weights.shape().h, stride, padding};
  }
};

template <typename T>
struct ConvGradients {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  return conv2d_forward<T>(x, p.weights.span(), p.bias, p.geometry());
}

template <typename T>
ConvGradients<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& grad_out) {
  ConvGradients<T> g;
  g.weights = Tensor<T>(p.weights.shape());
  g.bias.assign(p.bias.size(), T(0));
  g.input = conv2d_backward<T>(x, p.weights.span(), p.geometry(), grad_out, g.weights.span(), g.bias);
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.9);

  static BatchNormParams identity(std::size_t channels) {
    return {std::vector<T>(channels, T(1)), std::vector<T>(channels, T(0)), std::vector<T>(channels, T(0)),
            std::vector<T>(channels, T(1))};
  }
};

/// Per-channel statistics saved by the training-mode forward pass.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean;
  std::vector<T> variance;  // biased
  std::vector<T> inv_std;
};

/// Training-mode normalization with biased batch variance. Updates the running
/// statistics as r <- momentum * r + (1 - momentum) * batch.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                           std::span<T> running_mean, std::span<T> running_var, T epsilon, T momentum,
                           BatchNormCache<T>* cache) {
  const Shape& s = x.shape();
  if (gamma.size() != s.c || beta.size() != s.c) throw ShapeError("batch_norm: channel count mismatch");
  const std::size_t plane = s.plane();
  const std::size_t count = s.n * plane;
  if (count < 2) throw ShapeError("batch_norm: training mode needs at least 2 values per channel");
  Tensor<T> y(s);
  BatchNormCache<T> local;
  BatchNormCache<T>& c = cache ? *cache : local;
  c.mean.assign(s.c, T(0));
  c.variance.assign(s.c, T(0));
  c.inv_std.assign(s.c, T(0));
  for (std::size_t ch = 0; ch < s.c; ++ch) {
    double sum = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.sample(n) + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.sample(n) + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
    c.mean[ch] = static_cast<T>(mean);
    c.variance[ch] = static_cast<T>(var);
    c.inv_std[ch] = inv_std;
    const T scale = gamma[ch] * inv_std;
    const T shift = beta[ch] - static_cast<T>(mean) * scale;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.sample(n) + ch * plane;
      T* q = y.sample(n) + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * scale + shift;
    }
    if (!running_mean.empty()) {
      running_mean[ch] = momentum * running_mean[ch] + (T(1) - momentum) * static_cast<T>(mean);
      running_var[ch] = momentum * running_var[ch] + (T(1) - momentum) * static_cast<T>(var);
    }
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                           std::span<const T> running_mean, std::span<const T> running_var, T epsilon) {
  const Shape& s = x.shape();
  if (gamma.size() != s.c || running_mean.size() != s.c) throw ShapeError("batch_norm: channel count mismatch");
  const std::size_t plane = s.plane();
  Tensor<T> y(s);
  for (std::size_t ch = 0; ch < s.c; ++ch) {
    const T scale = gamma[ch] / std::sqrt(running_var[ch] + epsilon);
    const T shift = beta[ch] - running_mean[ch] * scale;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.sample(n) + ch * plane;
      T* q = y.sample(n) + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * scale + shift;
    }
  }
  return y;
}

/// Gradient of the training-mode transform, including the terms through the
/// batch mean and variance. Accumulates into `grad_gamma` / `grad_beta`.
template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& x, std::span<const T> gamma, const BatchNormCache<T>& cache,
                              const Tensor<T>& grad_out, std::span<T> grad_gamma, std::span<T> grad_beta) {
  const Shape& s = x.shape();
  if (grad_out.shape() != s) throw ShapeError("batch_norm backward: gradient shape mismatch");
  const std::size_t plane = s.plane();
  const T count = static_cast<T>(s.n * plane);
  Tensor<T> dx(s);
  for (std::size_t ch = 0; ch < s.c; ++ch) {
    const T mean = cache.mean[ch];
    const T inv_std = cache.inv_std[ch];
    T sum_dy = 0;
    T sum_dy_xhat = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.sample(n) + ch * plane;
      const T* g = grad_out.sample(n) + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * (p[i] - mean) * inv_std;
      }
    }
    if (!grad_gamma.empty()) grad_gamma[ch] += sum_dy_xhat;
    if (!grad_beta.empty()) grad_beta[ch] += sum_dy;
    const T k = gamma[ch] * inv_std / count;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.sample(n) + ch * plane;
      const T* g = grad_out.sample(n) + ch * plane;
      T* q = dx.sample(n) + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xhat = (p[i] - mean) * inv_std;
        q[i] = k * (count * g[i] - sum_dy - xhat * sum_dy_xhat);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNormParams<T>& p, Mode mode, BatchNormCache<T>* cache = nullptr) {
  if (mode == Mode::train) {
    return batch_norm_train<T>(x, p.gamma, p.beta, p.running_mean, p.running_var, p.epsilon, p.momentum, cache);
  }
  return batch_norm_infer<T>(x, p.gamma, p.beta, p.running_mean, p.running_var, p.epsilon);
}

// ---------------------------------------------------------------------------
// ReLU, pooling, fully connected
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* p = x.data();
  T* q = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) q[i] = p[i] > T(0) ? p[i] : T(0);
  return y;
}

/// Passes the gradient where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (x.shape() != grad_out.shape()) throw ShapeError("relu backward: gradient shape mismatch");
  Tensor<T> dx(x.shape());
  const T* p = x.data();
  const T* g = grad_out.data();
  T* q = dx.data();
  for (std::size_t i = 0; i < x.size(); ++i) q[i] = p[i] > T(0) ? g[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor<T> y(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* p = x.sample(n) + c * plane;
      T sum = 0;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      y.at(n, c, 0, 0) = sum / static_cast<T>(plane);
    }
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  Tensor<T> dx(input_shape);
  const std::size_t plane = input_shape.plane();
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t c = 0; c < input_shape.c; ++c) {
      const T v = grad_out.at(n, c, 0, 0) / static_cast<T>(plane);
      std::fill_n(dx.sample(n) + c * plane, plane, v);
    }
  }
  return dx;
}

template <typename T>
struct FCParams {
  Tensor<T> weights;  // (D_out, D_in, 1, 1)
  std::vector<T> bias;

  static FCParams make(std::size_t in_features, std::size_t out_features) {
    return {Tensor<T>(Shape{out_features, in_features, 1, 1}), std::vector<T>(out_features, T(0))};
  }
  std::size_t in_features() const { return weights.shape().c; }
  std::size_t out_features() const { return weights.shape().n; }
};

/// y = W x + b over the flattened per-sample input. Output shape (N, D_out, 1, 1).
template <typename T>
Tensor<T> fully_connected_forward(const Tensor<T>& x, std::span<const T> weights, std::span<const T> bias,
                                  std::size_t out_features) {
  const std::size_t in_features = x.shape().sample();
  if (weights.size() != in_features * out_features) {
    throw ShapeError("fully_connected: input length " + std::to_string(in_features) +
                     " does not match weight matrix");
  }
  if (bias.size() != out_features) throw ShapeError("fully_connected: bias length mismatch");
  const auto n = static_cast<Eigen::Index>(x.shape().n);
  Tensor<T> y(Shape{x.shape().n, out_features, 1, 1});
  ConstMatrixMap<T> xm(x.data(), n, static_cast<Eigen::Index>(in_features));
  ConstMatrixMap<T> wm(weights.data(), static_cast<Eigen::Index>(out_features), static_cast<Eigen::Index>(in_features));
  MatrixMap<T> ym(y.data(), n, static_cast<Eigen::Index>(out_features));
  ym.noalias() = xm * wm.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bm(bias.data(), static_cast<Eigen::Index>(out_features));
  ym.rowwise() += bm;
  return y;
}

template <typename T>
Tensor<T> fully_connected_backward(const Tensor<T>& x, std::span<const T> weights, const Tensor<T>& grad_out,
                                   std::span<T> grad_weights, std::span<T> grad_bias) {
  const std::size_t in_features = x.shape().sample();
  const std::size_t out_features = grad_out.shape().sample();
  if (grad_out.shape().n != x.shape().n || weights.size() != in_features * out_features) {
    throw ShapeError("fully_connected backward: shape mismatch");
  }
  const auto n = static_cast<Eigen::Index>(x.shape().n);
  const auto din = static_cast<Eigen::Index>(in_features);
  const auto dout = static_cast<Eigen::Index>(out_features);
  ConstMatrixMap<T> xm(x.data(), n, din);
  ConstMatrixMap<T> wm(weights.data(), dout, din);
  ConstMatrixMap<T> gm(grad_out.data(), n, dout);
  if (!grad_weights.empty()) {
    MatrixMap<T> dw(grad_weights.data(), dout, din);
    dw.noalias() += gm.transpose() * xm;
  }
  if (!grad_bias.empty()) {
    for (Eigen::Index j = 0; j < dout; ++j) grad_bias[static_cast<std::size_t>(j)] += gm.col(j).sum();
  }
  Tensor<T> dx(x.shape());
  MatrixMap<T> dxm(dx.data(), n, din);
  dxm.noalias() = gm * wm;
  return dx;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const FCParams<T>& p) {
  return fully_connected_forward<T>(x, p.weights.span(), p.bias, p.out_features());
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxCrossEntropy {
  T loss = 0;
  Tensor<T> grad;           // same shape as the logits
  Tensor<T> probabilities;  // same shape as the logits
  std::size_t correct = 0;  // argmax hits
};

/// Mean over the batch of -log softmax(logits)[label]; logits are (N, K, 1, 1)
/// or any tensor whose per-sample length is K.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t batch = logits.shape().n;
  const std::size_t classes = logits.shape().sample();
  if (labels.size() != batch) throw ShapeError("softmax_cross_entropy: label count mismatch");
  SoftmaxCrossEntropy<T> r;
  r.grad = Tensor<T>(logits.shape());
  r.probabilities = Tensor<T>(logits.shape());
  double total = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    const T* z = logits.sample(n);
    const T* zmax = std::max_element(z, z + classes);
    const T peak = *zmax;
    double denom = 0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(static_cast<double>(z[k] - peak));
    const double log_denom = std::log(denom);
    total += log_denom - static_cast<double>(z[label] - peak);
    if (static_cast<std::size_t>(zmax - z) == static_cast<std::size_t>(label)) ++r.correct;
    T* prob = r.probabilities.sample(n);
    T* g = r.grad.sample(n);
    for (std::size_t k = 0; k < classes; ++k) {
      prob[k] = static_cast<T>(std::exp(static_cast<double>(z[k] - peak) - log_denom));
      g[k] = (prob[k] - (static_cast<std::size_t>(label) == k ? T(1) : T(0))) / static_cast<T>(batch);
    }
  }
  r.loss = static_cast<T>(total / static_cast<double>(batch));
  return r;
}

// ---------------------------------------------------------------------------
// MSR initialization
// ---------------------------------------------------------------------------

/// Fills `weights` with N(0, 2 / fan_in) draws from `rng`.
template <typename T, typename Rng>
void msr_fill(std::span<T> weights, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (T& w : weights) w = static_cast<T>(dist(rng));
}

template <typename T>
void msr_initialize(ConvParams<T>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  msr_fill<T>(p.weights.span(), p.geometry().patch(), rng);
  std::fill(p.bias.begin(), p.bias.end(), T(0));
}

template <typename T>
void msr_initialize(FCParams<T>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  msr_fill<T>(p.weights.span(), p.in_features(), rng);
  std::fill(p.bias.begin(), p.bias.end(), T(0));
}

template <typename T>
void msr_initialize(BatchNormParams<T>& p, std::uint64_t /*seed*/) {
  std::fill(p.gamma.begin(), p.gamma.end(), T(1));
  std::fill(p.beta.begin(), p.beta.end(), T(0));
}

}  // namespace wrin
