#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "wrin/layers.hpp"
#include "wrin/tensor.hpp"

namespace wrin {

/// Per-sample feature map shape.
struct Shape3 {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
  Shape batch(std::size_t n) const { return {n, c, h, w}; }
  std::string str() const {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

enum class LayerKind { input, conv, batch_norm, relu, add, concat, global_avg_pool, fully_connected };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::add: return "add";
    case LayerKind::concat: return "concat";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::fully_connected: return "fully_connected";
  }
  return "?";
}

struct Node {
  std::string name;
  LayerKind kind = LayerKind::input;
  std::vector<std::size_t> inputs;
  ConvGeometry conv;              // conv only
  std::size_t out_features = 0;   // fully_connected only
  std::vector<std::size_t> params;  // conv: weight[, bias]; bn: gamma, beta, mean, var; fc: weight, bias
  Shape3 out_shape;               // at the network's configured input shape
};

template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<T> value;
  std::vector<T> grad;
  bool learnable = true;  // false for batch-norm running statistics

  std::size_t size() const { return value.size(); }
};

/// Cached forward state needed by the backward pass.
template <typename T>
struct Trace {
  Mode mode = Mode::infer;
  std::vector<Tensor<T>> outputs;                // per node; empty once released
  std::map<std::size_t, BatchNormCache<T>> batch_norm;  // per batch-norm node (train mode)
};

/// A directed acyclic graph of layers stored in topological (insertion) order
/// with a named parameter registry.
template <typename T>
class Network {
 public:
  static constexpr T kBatchNormEpsilon = T(1e-5);
  static constexpr T kBatchNormMomentum = T(0.9);

  explicit Network(Shape3 input_shape) {
    Node in;
    in.name = "input";
    in.kind = LayerKind::input;
    in.out_shape = input_shape;
    nodes_.push_back(std::move(in));
  }

  Shape3 input_shape() const { return nodes_.front().out_shape; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  std::size_t output() const { return output_.value_or(nodes_.size() - 1); }
  void set_output(std::size_t node) { output_ = node; }

  std::optional<std::size_t> find_node(const std::string& name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].name == name) return i;
    }
    return std::nullopt;
  }
  std::optional<std::size_t> find_param(const std::string& name) const {
    auto it = param_index_.find(name);
    if (it == param_index_.end()) return std::nullopt;
    return it->second;
  }
  Parameter<T>& param(const std::string& name) {
    auto i = find_param(name);
    if (!i) throw std::out_of_range("unknown parameter '" + name + "'");
    return params_[*i];
  }

  // -- construction --------------------------------------------------------

  std::size_t add_conv(const std::string& name, std::size_t from, std::size_t out_channels, std::size_t kernel,
                       std::size_t stride, std::size_t padding, bool bias = false) {
    const Shape3 in = shape_of(from);
    Node n = make_node(name, LayerKind::conv, {from});
    n.conv = ConvGeometry{in.c, out_channels, kernel, stride, padding};
    n.out_shape = {out_channels, n.conv.out_extent(in.h), n.conv.out_extent(in.w)};
    n.params.push_back(add_param(name + "/weight", {out_channels, in.c, kernel, kernel}, T(0), true));
    if (bias) n.params.push_back(add_param(name + "/bias", {out_channels}, T(0), true));
    return push(std::move(n));
  }

  std::size_t add_batch_norm(const std::string& name, std::size_t from) {
    const Shape3 in = shape_of(from);
    Node n = make_node(name, LayerKind::batch_norm, {from});
    n.out_shape = in;
    n.params.push_back(add_param(name + "/gamma", {in.c}, T(1), true));
    n.params.push_back(add_param(name + "/beta", {in.c}, T(0), true));
    n.params.push_back(add_param(name + "/running_mean", {in.c}, T(0), false));
    n.params.push_back(add_param(name + "/running_var", {in.c}, T(1), false));
    return push(std::move(n));
  }

  std::size_t add_relu(const std::string& name, std::size_t from) {
    Node n = make_node(name, LayerKind::relu, {from});
    n.out_shape = shape_of(from);
    return push(std::move(n));
  }

  std::size_t add_add(const std::string& name, std::size_t a, std::size_t b) {
    if (shape_of(a) != shape_of(b)) {
      throw ShapeError("add '" + name + "': " + shape_of(a).str() + " vs " + shape_of(b).str());
    }
    Node n = make_node(name, LayerKind::add, {a, b});
    n.out_shape = shape_of(a);
    return push(std::move(n));
  }

  std::size_t add_concat(const std::string& name, const std::vector<std::size_t>& from) {
    if (from.empty()) throw ShapeError("concat '" + name + "': no inputs");
    Node n = make_node(name, LayerKind::concat, from);
    Shape3 out = shape_of(from.front());
    out.c = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
      const Shape3 s = shape_of(from[i]);
      if (s.h != out.h || s.w != out.w) {
        throw ShapeError("concat '" + name + "': input " + std::to_string(i) + " has spatial shape " + s.str());
      }
      out.c += s.c;
    }
    n.out_shape = out;
    return push(std::move(n));
  }

  std::size_t add_global_avg_pool(const std::string& name, std::size_t from) {
    Node n = make_node(name, LayerKind::global_avg_pool, {from});
    n.out_shape = {shape_of(from).c, 1, 1};
    return push(std::move(n));
  }

  std::size_t add_fully_connected(const std::string& name, std::size_t from, std::size_t out_features) {
    const Shape3 in = shape_of(from);
    const std::size_t in_features = in.c * in.h * in.w;
    Node n = make_node(name, LayerKind::fully_connected, {from});
    n.out_features = out_features;
    n.out_shape = {out_features, 1, 1};
    n.params.push_back(add_param(name + "/weight", {out_features, in_features}, T(0), true));
    n.params.push_back(add_param(name + "/bias", {out_features}, T(0), true));
    return push(std::move(n));
  }

  // -- parameters ------------------------------------------------------------

  /// MSR-initializes conv and fully connected weights in registration order from a
  /// single seeded stream; resets biases, batch-norm affine terms and statistics.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const Node& n : nodes_) {
      switch (n.kind) {
        case LayerKind::conv:
          msr_fill<T>(std::span<T>(params_[n.params[0]].value), n.conv.patch(), rng);
          if (n.params.size() > 1) std::ranges::fill(params_[n.params[1]].value, T(0));
          break;
        case LayerKind::fully_connected: {
          auto& w = params_[n.params[0]];
          msr_fill<T>(std::span<T>(w.value), w.dims[1], rng);
          std::ranges::fill(params_[n.params[1]].value, T(0));
          break;
        }
        case LayerKind::batch_norm:
          std::ranges::fill(params_[n.params[0]].value, T(1));
          std::ranges::fill(params_[n.params[1]].value, T(0));
          std::ranges::fill(params_[n.params[2]].value, T(0));
          std::ranges::fill(params_[n.params[3]].value, T(1));
          break;
        default:
          break;
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) std::ranges::fill(p.grad, T(0));
  }

  template <typename U>
  void copy_values_from(const Network<U>& other) {
    if (other.params().size() != params_.size()) throw ShapeError("copy_values_from: parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = other.params()[i];
      if (src.name != params_[i].name || src.dims != params_[i].dims) {
        throw ShapeError("copy_values_from: parameter '" + src.name + "' does not match");
      }
      std::ranges::transform(src.value, params_[i].value.begin(), [](U v) { return static_cast<T>(v); });
    }
  }

  // -- shape analysis --------------------------------------------------------

  /// Propagates a per-sample input shape through every node.
  std::vector<Shape3> infer_shapes(Shape3 input) const {
    std::vector<Shape3> shapes(nodes_.size());
    shapes[0] = input;
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      const Shape3 in = shapes[n.inputs[0]];
      switch (n.kind) {
        case LayerKind::conv:
          if (in.c != n.conv.in_channels) throw ShapeError("node '" + n.name + "': channel mismatch");
          shapes[i] = {n.conv.out_channels, n.conv.out_extent(in.h), n.conv.out_extent(in.w)};
          break;
        case LayerKind::concat: {
          Shape3 s = in;
          s.c = 0;
          for (std::size_t j : n.inputs) {
            if (shapes[j].h != in.h || shapes[j].w != in.w) throw ShapeError("node '" + n.name + "': spatial mismatch");
            s.c += shapes[j].c;
          }
          shapes[i] = s;
          break;
        }
        case LayerKind::add:
          if (shapes[n.inputs[1]] != in) throw ShapeError("node '" + n.name + "': operand shape mismatch");
          shapes[i] = in;
          break;
        case LayerKind::global_avg_pool:
          shapes[i] = {in.c, 1, 1};
          break;
        case LayerKind::fully_connected:
          if (in.c * in.h * in.w != params_[n.params[0]].dims[1]) {
            throw ShapeError("node '" + n.name + "': flattened input length mismatch");
          }
          shapes[i] = {n.out_features, 1, 1};
          break;
        default:
          shapes[i] = in;
      }
    }
    return shapes;
  }

  // -- execution ---------------------------------------------------------------

  /// Evaluates every node. Train mode normalizes with batch statistics and records
  /// them in the trace; running statistics are left untouched (see `forward`).
  /// With `keep_all` false, intermediate outputs are released after their last use.
  Trace<T> run(const Tensor<T>& x, Mode mode, bool keep_all = true) const {
    const Shape3 in = input_shape();
    if (x.shape().c != in.c || x.shape().h != in.h || x.shape().w != in.w) {
      throw ShapeError("network input " + x.shape().str() + " does not match configured " + in.str());
    }
    Trace<T> trace;
    trace.mode = mode;
    trace.outputs.resize(nodes_.size());
    trace.outputs[0] = x;
    std::vector<std::size_t> last_use;
    if (!keep_all) last_use = last_uses();
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      const Tensor<T>& a = trace.outputs[n.inputs[0]];
      Tensor<T> y;
      switch (n.kind) {
        case LayerKind::conv:
          y = conv2d_forward<T>(a, value(n.params[0]), n.params.size() > 1 ? value(n.params[1]) : std::span<const T>{},
                                n.conv);
          break;
        case LayerKind::batch_norm:
          if (mode == Mode::train) {
            y = batch_norm_train<T>(a, value(n.params[0]), value(n.params[1]), {}, {}, kBatchNormEpsilon, kBatchNormMomentum,
                                    &trace.batch_norm[i]);
          } else {
            y = batch_norm_infer<T>(a, value(n.params[0]), value(n.params[1]), value(n.params[2]),
                                    value(n.params[3]), kBatchNormEpsilon);
          }
          break;
        case LayerKind::relu:
          y = relu_forward(a);
          break;
        case LayerKind::add:
          y = add_elementwise(a, trace.outputs[n.inputs[1]]);
          break;
        case LayerKind::concat: {
          std::vector<const Tensor<T>*> parts;
          for (std::size_t j : n.inputs) parts.push_back(&trace.outputs[j]);
          y = concat_channels<T>(std::span<const Tensor<T>* const>(parts));
          break;
        }
        case LayerKind::global_avg_pool:
          y = global_avg_pool_forward(a);
          break;
        case LayerKind::fully_connected:
          y = fully_connected_forward<T>(a, value(n.params[0]), value(n.params[1]), n.out_features);
          break;
        case LayerKind::input:
          break;
      }
      if (!y.all_finite()) throw NumericError("non-finite value produced by node '" + n.name + "'");
      trace.outputs[i] = std::move(y);
      if (!keep_all) {
        for (std::size_t j : n.inputs) {
          if (last_use[j] == i && j != output()) trace.outputs[j] = Tensor<T>();
        }
      }
    }
    return trace;
  }

  /// Forward pass; in train mode also folds the batch statistics into the running ones.
  Trace<T> forward(const Tensor<T>& x, Mode mode) {
    Trace<T> trace = run(x, mode, true);
    if (mode == Mode::train) {
      for (const auto& [idx, cache] : trace.batch_norm) {
        const Node& n = nodes_[idx];
        auto& mean = params_[n.params[2]].value;
        auto& var = params_[n.params[3]].value;
        for (std::size_t c = 0; c < mean.size(); ++c) {
          mean[c] = kBatchNormMomentum * mean[c] + (T(1) - kBatchNormMomentum) * cache.mean[c];
          var[c] = kBatchNormMomentum * var[c] + (T(1) - kBatchNormMomentum) * cache.variance[c];
        }
      }
    }
    return trace;
  }

  /// Inference-mode output of the designated output node.
  Tensor<T> infer(const Tensor<T>& x) const {
    Trace<T> t = run(x, Mode::infer, false);
    return std::move(t.outputs[output()]);
  }

  /// Back-propagates the seed gradients (node index, dL/d output) through the
  /// trace, accumulating into parameter gradients. Returns dL/d input.
  Tensor<T> backward(Trace<T>& trace, std::vector<std::pair<std::size_t, Tensor<T>>> seeds,
                     bool need_input_grad = false) {
    std::vector<Tensor<T>> grads(nodes_.size());
    for (auto& [idx, g] : seeds) accumulate(grads[idx], std::move(g));
    for (std::size_t i = nodes_.size(); i-- > 1;) {
      if (grads[i].empty()) continue;
      const Node& n = nodes_[i];
      const Tensor<T>& a = trace.outputs[n.inputs[0]];
      const Tensor<T>& g = grads[i];
      const bool want_dx = n.inputs[0] != 0 || need_input_grad;
      switch (n.kind) {
        case LayerKind::conv: {
          std::span<T> db = n.params.size() > 1 ? std::span<T>(params_[n.params[1]].grad) : std::span<T>{};
          Tensor<T> dx = conv2d_backward<T>(a, value(n.params[0]), n.conv, g, params_[n.params[0]].grad, db, want_dx);
          if (want_dx) accumulate(grads[n.inputs[0]], std::move(dx));
          break;
        }
        case LayerKind::batch_norm: {
          if (trace.mode != Mode::train) throw std::logic_error("backward through batch_norm requires a train-mode trace");
          Tensor<T> dx = batch_norm_backward<T>(a, value(n.params[0]), trace.batch_norm.at(i), g,
                                                params_[n.params[0]].grad, params_[n.params[1]].grad);
          accumulate(grads[n.inputs[0]], std::move(dx));
          break;
        }
        case LayerKind::relu:
          accumulate(grads[n.inputs[0]], relu_backward(a, g));
          break;
        case LayerKind::add:
          accumulate(grads[n.inputs[1]], Tensor<T>(g));
          accumulate(grads[n.inputs[0]], std::move(grads[i]));
          break;
        case LayerKind::concat: {
          std::size_t offset = 0;
          for (std::size_t j : n.inputs) {
            const std::size_t c = trace.outputs[j].shape().c;
            accumulate(grads[j], slice_channels(g, offset, c));
            offset += c;
          }
          break;
        }
        case LayerKind::global_avg_pool:
          accumulate(grads[n.inputs[0]], global_avg_pool_backward(a.shape(), g));
          break;
        case LayerKind::fully_connected: {
          Tensor<T> dx = fully_connected_backward<T>(a, value(n.params[0]), g, params_[n.params[0]].grad,
                                                     params_[n.params[1]].grad);
          accumulate(grads[n.inputs[0]], std::move(dx));
          break;
        }
        case LayerKind::input:
          break;
      }
      grads[i] = Tensor<T>();
    }
    return std::move(grads[0]);
  }

 private:
  Shape3 shape_of(std::size_t idx) const {
    if (idx >= nodes_.size()) throw std::out_of_range("node index " + std::to_string(idx) + " out of range");
    return nodes_[idx].out_shape;
  }

  Node make_node(const std::string& name, LayerKind kind, std::vector<std::size_t> inputs) const {
    if (find_node(name)) throw std::invalid_argument("duplicate node name '" + name + "'");
    for (std::size_t i : inputs) shape_of(i);
    Node n;
    n.name = name;
    n.kind = kind;
    n.inputs = std::move(inputs);
    return n;
  }

  std::size_t push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::size_t add_param(const std::string& name, std::vector<std::size_t> dims, T fill, bool learnable) {
    if (param_index_.contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    std::size_t count = 1;
    for (std::size_t d : dims) count *= d;
    Parameter<T> p{name, std::move(dims), std::vector<T>(count, fill), std::vector<T>(learnable ? count : 0, T(0)),
                   learnable};
    params_.push_back(std::move(p));
    param_index_[name] = params_.size() - 1;
    return params_.size() - 1;
  }

  std::span<const T> value(std::size_t p) const { return params_[p].value; }

  std::vector<std::size_t> last_uses() const {
    std::vector<std::size_t> last(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      for (std::size_t j : nodes_[i].inputs) last[j] = i;
    }
    return last;
  }

  static void accumulate(Tensor<T>& dst, Tensor<T>&& src) {
    if (dst.empty()) {
      dst = std::move(src);
      return;
    }
    T* d = dst.data();
    const T* s = src.data();
    for (std::size_t k = 0; k < dst.size(); ++k) d[k] += s[k];
  }

  std::vector<Node> nodes_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> param_index_;
  std::optional<std::size_t> output_;
};

}  // namespace wrin
