#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "wrin/graph.hpp"
#include "wrin/receptive_field.hpp"

namespace wrin {

enum class UnitVariant { basic, bottleneck, inception };

inline const char* to_string(UnitVariant v) {
  switch (v) {
    case UnitVariant::basic: return "basic";
    case UnitVariant::bottleneck: return "bottleneck";
    case UnitVariant::inception: return "inception";
  }
  return "?";
}

inline UnitVariant parse_unit_variant(const std::string& s) {
  if (s == "basic") return UnitVariant::basic;
  if (s == "bottleneck") return UnitVariant::bottleneck;
  if (s == "inception") return UnitVariant::inception;
  throw std::invalid_argument("unknown unit variant '" + s + "'");
}

/// One residual unit.
///
/// `widths` per variant:
///   basic       [w1, w2]                     two 3x3 convolutions
///   bottleneck  [reduce, mid, restore]       1x1, 3x3, 1x1
///   inception   [shared, b, c1, c2]          shared 1x1; branches A (shared), B (3x3),
///                                            C (3x3 -> 3x3); concat width shared + b + c2
struct UnitSpec {
  UnitVariant variant = UnitVariant::basic;
  std::size_t in_channels = 0;
  std::vector<std::size_t> widths;
  std::size_t stride = 1;
  std::size_t out_channels = 0;

  static UnitSpec basic(std::size_t in, std::size_t width, std::size_t stride = 1) {
    return {UnitVariant::basic, in, {width, width}, stride, width};
  }
  static UnitSpec bottleneck(std::size_t in, std::size_t width, std::size_t stride = 1) {
    return {UnitVariant::bottleneck, in, {width / 4, width / 4, width}, stride, width};
  }
  static UnitSpec inception(std::size_t in, std::vector<std::size_t> widths, std::size_t out, std::size_t stride = 1) {
    return {UnitVariant::inception, in, std::move(widths), stride, out};
  }

  std::size_t concat_width() const {
    return variant == UnitVariant::inception ? widths.at(0) + widths.at(1) + widths.at(3) : 0;
  }
  bool has_projection_shortcut() const { return stride != 1 || in_channels != out_channels; }

  void validate() const {
    if (stride != 1 && stride != 2) throw std::invalid_argument("unit stride must be 1 or 2");
    if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("unit channel counts must be positive");
    const std::size_t expected = variant == UnitVariant::basic ? 2 : variant == UnitVariant::bottleneck ? 3 : 4;
    if (widths.size() != expected) {
      throw std::invalid_argument(std::string(to_string(variant)) + " unit needs " + std::to_string(expected) +
                                  " widths, got " + std::to_string(widths.size()));
    }
    for (std::size_t w : widths) {
      if (w == 0) throw std::invalid_argument("unit widths must be positive");
    }
    if (variant != UnitVariant::inception && widths.back() != out_channels) {
      throw std::invalid_argument("last width must equal out_channels for basic and bottleneck units");
    }
  }
};

/// Node indices of interest inside a built unit.
struct UnitHandles {
  std::size_t output = 0;      // the residual addition
  std::size_t shortcut = 0;    // identity input or projection conv
  std::size_t branch_end = 0;  // residual branch output before the addition (concat for inception)
  std::vector<std::size_t> convs;
};

namespace detail {

/// BN -> ReLU -> conv; returns {relu, conv}.
template <typename T>
std::pair<std::size_t, std::size_t> preact_conv(Network<T>& net, std::size_t from, const std::string& p,
                                                const std::string& tag, std::size_t out, std::size_t k,
                                                std::size_t stride) {
  const std::size_t bn = net.add_batch_norm(p + "/bn_" + tag, from);
  const std::size_t relu = net.add_relu(p + "/relu_" + tag, bn);
  const std::size_t conv = net.add_conv(p + "/conv_" + tag, relu, out, k, stride, k / 2);
  return {relu, conv};
}

/// Identity, or a strided 1x1 projection fed from the pre-activated input.
template <typename T>
std::size_t shortcut(Network<T>& net, std::size_t unit_input, std::size_t preactivated, const UnitSpec& spec,
                     const std::string& p) {
  if (!spec.has_projection_shortcut()) return unit_input;
  return net.add_conv(p + "/shortcut", preactivated, spec.out_channels, 1, spec.stride, 0);
}

template <typename T>
void check_input(const Network<T>& net, std::size_t from, const UnitSpec& spec) {
  spec.validate();
  if (net.node(from).out_shape.c != spec.in_channels) {
    throw ShapeError("unit expects " + std::to_string(spec.in_channels) + " input channels, got " +
                     std::to_string(net.node(from).out_shape.c));
  }
}

}  // namespace detail

template <typename T>
UnitHandles make_basic_unit(Network<T>& net, std::size_t from, const UnitSpec& spec, const std::string& prefix) {
  if (spec.variant != UnitVariant::basic) throw std::invalid_argument("make_basic_unit: variant must be basic");
  detail::check_input(net, from, spec);
  UnitHandles h;
  auto [relu1, conv1] = detail::preact_conv(net, from, prefix, "1", spec.widths[0], 3, spec.stride);
  auto [relu2, conv2] = detail::preact_conv(net, conv1, prefix, "2", spec.widths[1], 3, 1);
  (void)relu2;
  h.convs = {conv1, conv2};
  h.branch_end = conv2;
  h.shortcut = detail::shortcut(net, from, relu1, spec, prefix);
  if (h.shortcut != from) h.convs.push_back(h.shortcut);
  h.output = net.add_add(prefix + "/add", conv2, h.shortcut);
  return h;
}

template <typename T>
UnitHandles make_bottleneck_unit(Network<T>& net, std::size_t from, const UnitSpec& spec, const std::string& prefix) {
  if (spec.variant != UnitVariant::bottleneck) throw std::invalid_argument("make_bottleneck_unit: variant must be bottleneck");
  detail::check_input(net, from, spec);
  UnitHandles h;
  auto [relu1, conv1] = detail::preact_conv(net, from, prefix, "1", spec.widths[0], 1, 1);
  auto [relu2, conv2] = detail::preact_conv(net, conv1, prefix, "2", spec.widths[1], 3, spec.stride);
  auto [relu3, conv3] = detail::preact_conv(net, conv2, prefix, "3", spec.widths[2], 1, 1);
  (void)relu2;
  (void)relu3;
  h.convs = {conv1, conv2, conv3};
  h.branch_end = conv3;
  h.shortcut = detail::shortcut(net, from, relu1, spec, prefix);
  if (h.shortcut != from) h.convs.push_back(h.shortcut);
  h.output = net.add_add(prefix + "/add", conv3, h.shortcut);
  return h;
}

/// Shared 1x1 feeding three branches of receptive field 1, 3 and 5, concatenated
/// in (A, B, C) order, projected by a 1x1 conv and added to the shortcut.
template <typename T>
UnitHandles make_residual_inception_unit(Network<T>& net, std::size_t from, const UnitSpec& spec,
                                         const std::string& prefix) {
  if (spec.variant != UnitVariant::inception) {
    throw std::invalid_argument("make_residual_inception_unit: variant must be inception");
  }
  detail::check_input(net, from, spec);
  const std::size_t shared_w = spec.widths[0];
  UnitHandles h;
  auto [relu_in, shared] = detail::preact_conv(net, from, prefix, "shared", shared_w, 1, spec.stride);
  auto [relu_b, conv_b] = detail::preact_conv(net, shared, prefix, "b", spec.widths[1], 3, 1);
  auto [relu_c1, conv_c1] = detail::preact_conv(net, shared, prefix, "c1", spec.widths[2], 3, 1);
  auto [relu_c2, conv_c2] = detail::preact_conv(net, conv_c1, prefix, "c2", spec.widths[3], 3, 1);
  (void)relu_b;
  (void)relu_c1;
  (void)relu_c2;
  const std::size_t concat = net.add_concat(prefix + "/concat", {shared, conv_b, conv_c2});
  const std::size_t proj = net.add_conv(prefix + "/conv_proj", concat, spec.out_channels, 1, 1, 0);
  h.convs = {shared, conv_b, conv_c1, conv_c2, proj};
  h.branch_end = concat;
  h.shortcut = detail::shortcut(net, from, relu_in, spec, prefix);
  if (h.shortcut != from) h.convs.push_back(h.shortcut);
  h.output = net.add_add(prefix + "/add", proj, h.shortcut);
  return h;
}

template <typename T>
UnitHandles make_unit(Network<T>& net, std::size_t from, const UnitSpec& spec, const std::string& prefix) {
  switch (spec.variant) {
    case UnitVariant::basic: return make_basic_unit(net, from, spec, prefix);
    case UnitVariant::bottleneck: return make_bottleneck_unit(net, from, spec, prefix);
    case UnitVariant::inception: return make_residual_inception_unit(net, from, spec, prefix);
  }
  throw std::invalid_argument("unknown unit variant");
}

/// Builds `spec` alone on an input of the given spatial size; handy for analysis.
template <typename T = float>
std::pair<Network<T>, UnitHandles> standalone_unit(const UnitSpec& spec, std::size_t spatial = 8) {
  Network<T> net(Shape3{spec.in_channels, spatial, spatial});
  UnitHandles h = make_unit(net, 0, spec, "unit");
  net.set_output(h.output);
  return {std::move(net), h};
}

/// Receptive-field extents of each residual-branch path at the point where the
/// branches merge (the concat for inception units), relative to the unit input
/// and measured on the branch grid (stride taken as 1).
inline std::set<std::size_t> effective_receptive_paths(UnitSpec spec) {
  spec.stride = 1;
  const std::size_t spatial = 16;
  auto [net, h] = standalone_unit<float>(spec, spatial);
  return receptive_fields(net)[h.branch_end].paths;
}

}  // namespace wrin
