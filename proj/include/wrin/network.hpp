#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrin/blocks.hpp"
#include "wrin/graph.hpp"

namespace wrin {

/// Raised by config validation; `stage` is the first inconsistent stage index
/// (-1 for the stem or global fields).
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, int stage) : std::invalid_argument(what), stage_(stage) {}
  int stage() const { return stage_; }

 private:
  int stage_;
};

struct StageConfig {
  std::string name;
  std::vector<UnitSpec> units;
  std::size_t stage_stride = 1;
};

struct NetworkConfig {
  std::string name;
  Shape3 input_shape{3, 32, 32};
  std::size_t conv1_kernel = 3;
  std::size_t conv1_out = 16;
  std::vector<StageConfig> stages;
  std::size_t num_classes = 10;

  std::size_t feature_channels() const {
    return stages.empty() ? conv1_out : stages.back().units.back().out_channels;
  }

  void validate() const {
    if (num_classes == 0) throw ConfigError("num_classes must be positive", -1);
    if (conv1_kernel == 0 || conv1_kernel % 2 == 0) throw ConfigError("conv1 kernel must be odd", -1);
    if (input_shape.c == 0 || input_shape.h == 0 || input_shape.w == 0) throw ConfigError("empty input shape", -1);
    std::size_t channels = conv1_out;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& st = stages[s];
      const int idx = static_cast<int>(s);
      if (st.units.empty()) throw ConfigError("stage " + std::to_string(s) + " has no units", idx);
      if (st.stage_stride != 1 && st.stage_stride != 2) throw ConfigError("stage stride must be 1 or 2", idx);
      for (std::size_t u = 0; u < st.units.size(); ++u) {
        const UnitSpec& spec = st.units[u];
        try {
          spec.validate();
        } catch (const std::invalid_argument& e) {
          throw ConfigError("stage " + std::to_string(s) + " unit " + std::to_string(u) + ": " + e.what(), idx);
        }
        if (spec.in_channels != channels) {
          throw ConfigError("stage " + std::to_string(s) + " unit " + std::to_string(u) + " expects " +
                                std::to_string(spec.in_channels) + " input channels but receives " +
                                std::to_string(channels),
                            idx);
        }
        const std::size_t want = u == 0 ? st.stage_stride : 1;
        if (spec.stride != want) {
          throw ConfigError("stage " + std::to_string(s) + " unit " + std::to_string(u) + " has stride " +
                                std::to_string(spec.stride) + ", expected " + std::to_string(want),
                            idx);
        }
        channels = spec.out_channels;
      }
    }
  }
};

namespace detail {

inline StageConfig basic_stage(const std::string& name, std::size_t in, std::size_t width, std::size_t units,
                               std::size_t stride) {
  StageConfig st{name, {}, stride};
  for (std::size_t u = 0; u < units; ++u) {
    st.units.push_back(UnitSpec::basic(u == 0 ? in : width, width, u == 0 ? stride : 1));
  }
  return st;
}

inline StageConfig bottleneck_stage(const std::string& name, std::size_t in, std::size_t width, std::size_t units,
                                    std::size_t stride) {
  StageConfig st{name, {}, stride};
  for (std::size_t u = 0; u < units; ++u) {
    st.units.push_back(UnitSpec::bottleneck(u == 0 ? in : width, width, u == 0 ? stride : 1));
  }
  return st;
}

}  // namespace detail

inline const std::vector<std::string>& builtin_config_names() {
  static const std::vector<std::string> names = {"wrn-16-4", "wr-inception", "wr-inception-l2", "preact-resnet-164",
                                                 "mini"};
  return names;
}

/// Canonical network definitions. "mini" is a small network containing every
/// unit variant, sized for gradient checking on 8x8 inputs.
inline NetworkConfig builtin_config(const std::string& name, std::size_t num_classes = 10,
                                    Shape3 input_shape = {3, 32, 32}) {
  NetworkConfig c;
  c.name = name;
  c.num_classes = num_classes;
  c.input_shape = input_shape;
  if (name == "wrn-16-4") {
    c.conv1_out = 16;
    c.stages = {detail::basic_stage("conv2", 16, 64, 2, 1), detail::basic_stage("conv3", 64, 128, 2, 2),
                detail::basic_stage("conv4", 128, 256, 2, 2)};
  } else if (name == "wr-inception") {
    c = builtin_config("wrn-16-4", num_classes, input_shape);
    c.name = name;
    c.stages[1].units[1] = UnitSpec::inception(128, {128, 64, 64, 128}, 128);
  } else if (name == "wr-inception-l2") {
    c.conv1_out = 64;
    StageConfig conv3{"conv3", {UnitSpec::basic(64, 256, 2), UnitSpec::inception(256, {256, 256, 128, 256}, 256)}, 2};
    c.stages = {detail::basic_stage("conv2", 64, 64, 2, 1), conv3, detail::basic_stage("conv4", 256, 256, 2, 2)};
  } else if (name == "preact-resnet-164") {
    c.conv1_out = 16;
    c.stages = {detail::bottleneck_stage("conv2", 16, 64, 18, 1), detail::bottleneck_stage("conv3", 64, 128, 18, 2),
                detail::bottleneck_stage("conv4", 128, 256, 18, 2)};
  } else if (name == "mini") {
    c.conv1_out = 4;
    c.stages = {
        StageConfig{"conv2", {UnitSpec::basic(4, 6, 1), UnitSpec{UnitVariant::bottleneck, 6, {2, 3, 6}, 1, 6}}, 1},
        StageConfig{"conv3", {UnitSpec::basic(6, 8, 2), UnitSpec::inception(8, {4, 3, 2, 3}, 8)}, 2},
        StageConfig{"conv4", {UnitSpec::inception(8, {4, 2, 2, 2}, 10, 2)}, 2},
    };
  } else {
    throw std::invalid_argument("unknown network '" + name + "'");
  }
  return c;
}

// -- JSON ---------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const UnitSpec& u) {
  j = {{"variant", to_string(u.variant)},
       {"in_channels", u.in_channels},
       {"widths", u.widths},
       {"stride", u.stride},
       {"out_channels", u.out_channels}};
}

inline void from_json(const nlohmann::json& j, UnitSpec& u) {
  u.variant = parse_unit_variant(j.at("variant").get<std::string>());
  u.in_channels = j.at("in_channels").get<std::size_t>();
  u.widths = j.at("widths").get<std::vector<std::size_t>>();
  u.stride = j.value("stride", std::size_t{1});
  u.out_channels = j.contains("out_channels") ? j.at("out_channels").get<std::size_t>() : u.widths.back();
}

inline void to_json(nlohmann::json& j, const StageConfig& s) {
  j = {{"name", s.name}, {"stage_stride", s.stage_stride}, {"units", s.units}};
}

inline void from_json(const nlohmann::json& j, StageConfig& s) {
  s.name = j.value("name", std::string());
  s.stage_stride = j.value("stage_stride", std::size_t{1});
  s.units = j.at("units").get<std::vector<UnitSpec>>();
}

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"name", c.name},
       {"input_shape", {c.input_shape.c, c.input_shape.h, c.input_shape.w}},
       {"conv1", {{"kernel", c.conv1_kernel}, {"out_channels", c.conv1_out}}},
       {"stages", c.stages},
       {"num_classes", c.num_classes}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  c.name = j.value("name", std::string("custom"));
  if (j.contains("input_shape")) {
    const auto s = j.at("input_shape").get<std::vector<std::size_t>>();
    if (s.size() != 3) throw ConfigError("input_shape must have 3 entries (C,H,W)", -1);
    c.input_shape = {s[0], s[1], s[2]};
  }
  c.conv1_kernel = j.at("conv1").value("kernel", std::size_t{3});
  c.conv1_out = j.at("conv1").at("out_channels").get<std::size_t>();
  c.stages = j.at("stages").get<std::vector<StageConfig>>();
  c.num_classes = j.value("num_classes", std::size_t{10});
  for (std::size_t s = 0; s < c.stages.size(); ++s) {
    if (c.stages[s].name.empty()) c.stages[s].name = "stage" + std::to_string(s + 1);
  }
}

inline NetworkConfig load_network_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open network config '" + path + "'");
  NetworkConfig c = nlohmann::json::parse(in).get<NetworkConfig>();
  c.validate();
  return c;
}

/// Resolves a built-in name, or else reads a JSON config file.
inline NetworkConfig resolve_network_config(const std::string& name_or_path, std::size_t num_classes = 10,
                                            std::optional<Shape3> input_shape = std::nullopt) {
  for (const auto& n : builtin_config_names()) {
    if (n == name_or_path) return builtin_config(n, num_classes, input_shape.value_or(Shape3{3, 32, 32}));
  }
  std::ifstream probe(name_or_path);
  if (!probe) throw std::invalid_argument("unknown network '" + name_or_path + "'");
  NetworkConfig c = load_network_config(name_or_path);
  if (input_shape) c.input_shape = *input_shape;
  return c;
}

// -- building -----------------------------------------------------------------

/// Node indices recorded while building a classifier network.
struct NetworkLayout {
  std::size_t conv1 = 0;
  std::vector<std::size_t> stage_outputs;
  std::vector<std::vector<UnitHandles>> units;
  std::size_t features = 0;  // final pre-activation output, before pooling
  std::size_t logits = 0;
};

/// Appends the stem and all stages; returns the layout without a head.
template <typename T>
NetworkLayout build_backbone(Network<T>& net, const NetworkConfig& config) {
  NetworkLayout layout;
  layout.conv1 = net.add_conv("conv1", 0, config.conv1_out, config.conv1_kernel, 1, config.conv1_kernel / 2);
  std::size_t x = layout.conv1;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& st = config.stages[s];
    const std::string stage_name = st.name.empty() ? "stage" + std::to_string(s + 1) : st.name;
    layout.units.emplace_back();
    for (std::size_t u = 0; u < st.units.size(); ++u) {
      UnitHandles h = make_unit(net, x, st.units[u], stage_name + "/unit" + std::to_string(u + 1));
      layout.units.back().push_back(h);
      x = h.output;
    }
    layout.stage_outputs.push_back(x);
  }
  layout.features = x;
  return layout;
}

template <typename T>
struct BuiltNetwork {
  Network<T> graph;
  NetworkLayout layout;
};

/// Builds the classifier (stem, stages, BN -> ReLU -> global pool -> FC) with
/// MSR-initialized parameters.
template <typename T = float>
BuiltNetwork<T> build_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  BuiltNetwork<T> b{Network<T>(config.input_shape), {}};
  Network<T>& net = b.graph;
  b.layout = build_backbone(net, config);
  const std::size_t bn = net.add_batch_norm("final/bn", b.layout.features);
  const std::size_t relu = net.add_relu("final/relu", bn);
  const std::size_t pool = net.add_global_avg_pool("pool", relu);
  b.layout.logits = net.add_fully_connected("fc", pool, config.num_classes);
  net.set_output(b.layout.logits);
  net.initialize(seed);
  return b;
}

template <typename T>
struct ExecuteResult {
  Tensor<T> logits;            // (N, num_classes, 1, 1)
  std::optional<T> loss;
  std::size_t correct = 0;
  Tensor<T> input_grad;        // only when requested
};

/// Runs the classifier. Train mode requires labels and leaves dL/dparam in
/// every parameter's `grad`.
template <typename T>
ExecuteResult<T> execute(Network<T>& net, const Tensor<T>& input, Mode mode,
                         std::optional<std::span<const int>> labels = std::nullopt, bool need_input_grad = false) {
  ExecuteResult<T> r;
  if (mode == Mode::infer) {
    r.logits = net.infer(input);
    if (labels) {
      auto ce = softmax_cross_entropy<T>(r.logits, *labels);
      r.loss = ce.loss;
      r.correct = ce.correct;
    }
    return r;
  }
  if (!labels) throw std::invalid_argument("execute: train mode requires labels");
  Trace<T> trace = net.forward(input, Mode::train);
  r.logits = trace.outputs[net.output()];
  auto ce = softmax_cross_entropy<T>(r.logits, *labels);
  if (!std::isfinite(ce.loss)) throw NumericError("non-finite loss");
  r.loss = ce.loss;
  r.correct = ce.correct;
  net.zero_grad();
  std::vector<std::pair<std::size_t, Tensor<T>>> seeds;
  seeds.emplace_back(net.output(), std::move(ce.grad));
  r.input_grad = net.backward(trace, std::move(seeds), need_input_grad);
  return r;
}

}  // namespace wrin
