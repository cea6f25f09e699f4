#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrin/blocks.hpp"
#include "wrin/graph.hpp"
#include "wrin/network.hpp"
#include "wrin/receptive_field.hpp"

namespace wrin {

/// Costs are per sample. MACs count convolutions and fully connected layers only;
/// normalization, activation, addition and pooling are reported as elementwise ops.
struct NodeCost {
  std::string name;
  LayerKind kind = LayerKind::input;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t elementwise_ops = 0;
  Shape3 output_shape;
  std::size_t receptive_field = 1;
  std::size_t stride_product = 1;
};

struct UnitComparison {
  std::string unit;       // node prefix of the unit under comparison
  std::string reference;  // description of the reference unit
  std::uint64_t unit_macs = 0;
  std::uint64_t reference_macs = 0;
  double ratio = 0;
};

struct CostReport {
  std::string network;
  Shape3 input_shape;
  std::vector<NodeCost> per_node;
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
  std::uint64_t total_elementwise_ops = 0;
  std::vector<UnitComparison> comparisons;
};

/// Learnable scalars of one node (BN running statistics excluded).
template <typename T>
std::uint64_t node_parameter_count(const Network<T>& net, const Node& n) {
  std::uint64_t count = 0;
  for (std::size_t p : n.params) {
    if (net.params()[p].learnable) count += net.params()[p].size();
  }
  return count;
}

template <typename T>
std::uint64_t count_parameters(const Network<T>& net) {
  std::uint64_t total = 0;
  for (const Node& n : net.nodes()) total += node_parameter_count(net, n);
  return total;
}

template <typename T>
std::vector<NodeCost> node_costs(const Network<T>& net, Shape3 input) {
  const auto shapes = net.infer_shapes(input);
  const auto rfs = receptive_fields(net);
  std::vector<NodeCost> costs;
  const auto& nodes = net.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    NodeCost c;
    c.name = n.name;
    c.kind = n.kind;
    c.params = node_parameter_count(net, n);
    c.output_shape = shapes[i];
    c.receptive_field = rfs[i].rf;
    c.stride_product = rfs[i].stride_product;
    const std::uint64_t out_elems = shapes[i].c * shapes[i].h * shapes[i].w;
    switch (n.kind) {
      case LayerKind::conv:
        c.macs = static_cast<std::uint64_t>(n.conv.patch()) * n.conv.out_channels * shapes[i].h * shapes[i].w;
        break;
      case LayerKind::fully_connected:
        c.macs = net.params()[n.params[0]].size();
        break;
      case LayerKind::batch_norm:
      case LayerKind::relu:
      case LayerKind::add:
        c.elementwise_ops = out_elems;
        break;
      case LayerKind::global_avg_pool: {
        const Shape3 in = shapes[n.inputs[0]];
        c.elementwise_ops = static_cast<std::uint64_t>(in.c) * in.h * in.w;
        break;
      }
      default:
        break;
    }
    costs.push_back(std::move(c));
  }
  return costs;
}

template <typename T>
std::uint64_t count_macs(const Network<T>& net, Shape3 input) {
  std::uint64_t total = 0;
  for (const auto& c : node_costs(net, input)) total += c.macs;
  return total;
}

template <typename T>
CostReport analyze(const Network<T>& net, std::optional<Shape3> input = std::nullopt, std::string name = {}) {
  CostReport r;
  r.network = std::move(name);
  r.input_shape = input.value_or(net.input_shape());
  r.per_node = node_costs(net, r.input_shape);
  for (const auto& c : r.per_node) {
    r.total_params += c.params;
    r.total_macs += c.macs;
    r.total_elementwise_ops += c.elementwise_ops;
  }
  return r;
}

/// Receptive field of a named node: the maximum over merge branches plus the
/// per-branch values.
template <typename T>
ReceptiveField receptive_field(const Network<T>& net, const std::string& node) {
  auto idx = net.find_node(node);
  if (!idx) throw std::out_of_range("unknown node '" + node + "'");
  return receptive_fields(net)[*idx];
}

/// Conv MACs of one unit at one output position with stride 1, split by role.
struct UnitCost {
  std::uint64_t branch = 0;      // residual-branch convs before any concat projection
  std::uint64_t projection = 0;  // 1x1 concat projection (inception only)
  std::uint64_t shortcut = 0;    // 1x1 shortcut projection, if any
  std::uint64_t total() const { return branch + projection + shortcut; }
};

inline UnitCost unit_cost_per_position(UnitSpec spec) {
  spec.stride = 1;
  auto [net, h] = standalone_unit<float>(spec, 1);
  UnitCost cost;
  for (std::size_t idx : h.convs) {
    const Node& n = net.node(idx);
    const std::uint64_t macs = static_cast<std::uint64_t>(n.conv.patch()) * n.conv.out_channels;
    if (idx == h.shortcut) {
      cost.shortcut += macs;
    } else if (n.name.ends_with("/conv_proj")) {
      cost.projection += macs;
    } else {
      cost.branch += macs;
    }
  }
  return cost;
}

inline double compare_unit_cost(const UnitSpec& a, const UnitSpec& b) {
  return static_cast<double>(unit_cost_per_position(a).total()) /
         static_cast<double>(unit_cost_per_position(b).total());
}

/// Full report for a config: per-node costs plus, for every inception unit, a
/// comparison with the basic unit it stands in for (same input and output width).
inline CostReport analyze_config(const NetworkConfig& config) {
  auto built = build_network<float>(config, 0);
  CostReport r = analyze(built.graph, config.input_shape, config.name);
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    for (std::size_t u = 0; u < config.stages[s].units.size(); ++u) {
      const UnitSpec& spec = config.stages[s].units[u];
      if (spec.variant != UnitVariant::inception) continue;
      const UnitSpec ref = UnitSpec::basic(spec.in_channels, spec.out_channels, spec.stride);
      UnitComparison c;
      c.unit = config.stages[s].name + "/unit" + std::to_string(u + 1);
      c.reference = "basic[" + std::to_string(ref.out_channels) + "," + std::to_string(ref.out_channels) + "]";
      c.unit_macs = unit_cost_per_position(spec).total();
      c.reference_macs = unit_cost_per_position(ref).total();
      c.ratio = static_cast<double>(c.unit_macs) / static_cast<double>(c.reference_macs);
      r.comparisons.push_back(c);
    }
  }
  return r;
}

inline nlohmann::json report_json(const CostReport& r) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& c : r.per_node) {
    nodes.push_back({{"name", c.name},
                     {"kind", to_string(c.kind)},
                     {"params", c.params},
                     {"macs", c.macs},
                     {"elementwise_ops", c.elementwise_ops},
                     {"output_shape", {c.output_shape.c, c.output_shape.h, c.output_shape.w}},
                     {"receptive_field", c.receptive_field},
                     {"stride_product", c.stride_product}});
  }
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : r.comparisons) {
    comps.push_back({{"unit", c.unit},
                     {"reference", c.reference},
                     {"unit_macs_per_position", c.unit_macs},
                     {"reference_macs_per_position", c.reference_macs},
                     {"ratio", c.ratio}});
  }
  return {{"network", r.network},
          {"input_shape", {r.input_shape.c, r.input_shape.h, r.input_shape.w}},
          {"per_node", nodes},
          {"totals", {{"params", r.total_params}, {"macs", r.total_macs}, {"elementwise_ops", r.total_elementwise_ops}}},
          {"comparisons", comps}};
}

inline std::string report_text(const CostReport& r) {
  std::ostringstream os;
  std::size_t width = 4;
  for (const auto& c : r.per_node) width = std::max(width, c.name.size());
  os << std::left << std::setw(static_cast<int>(width)) << "node" << "  " << std::setw(16) << "kind" << std::right
     << std::setw(10) << "params" << std::setw(14) << "macs" << std::setw(16) << "output" << std::setw(6) << "rf"
     << std::setw(7) << "jump" << "\n";
  for (const auto& c : r.per_node) {
    os << std::left << std::setw(static_cast<int>(width)) << c.name << "  " << std::setw(16) << to_string(c.kind)
       << std::right << std::setw(10) << c.params << std::setw(14) << c.macs << std::setw(16) << c.output_shape.str()
       << std::setw(6) << c.receptive_field << std::setw(7) << c.stride_product << "\n";
  }
  os << "total params: " << r.total_params << " (" << std::fixed << std::setprecision(2)
     << static_cast<double>(r.total_params) / 1e6 << "M)\n";
  os << "total MACs: " << r.total_macs << " (" << static_cast<double>(r.total_macs) / 1e6 << "M)\n";
  os << "elementwise ops: " << r.total_elementwise_ops << "\n";
  for (const auto& c : r.comparisons) {
    os << "unit cost " << c.unit << " vs " << c.reference << ": " << c.unit_macs << " / " << c.reference_macs
       << " MACs per position = " << std::setprecision(4) << c.ratio << "\n";
  }
  return os.str();
}

}  // namespace wrin
