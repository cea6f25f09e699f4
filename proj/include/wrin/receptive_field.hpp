#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "wrin/graph.hpp"

namespace wrin {

/// Receptive field of one node, measured in input pixels.
struct ReceptiveField {
  std::size_t rf = 1;              // max over all paths from the input
  std::size_t stride_product = 1;  // distance in input pixels between adjacent outputs
  std::set<std::size_t> paths;     // rf along every distinct path
};

/// Standard recurrence rf' = rf + (k - 1) * jump, jump' = jump * s along every
/// path; joins keep the union of incoming path values. Global pooling acts as a
/// kernel covering its whole input map.
template <typename T>
std::vector<ReceptiveField> receptive_fields(const Network<T>& net) {
  const auto& nodes = net.nodes();
  const auto shapes = net.infer_shapes(net.input_shape());
  std::vector<ReceptiveField> out(nodes.size());
  out[0].paths = {1};
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    const ReceptiveField& in = out[n.inputs[0]];
    ReceptiveField r;
    switch (n.kind) {
      case LayerKind::conv:
        for (std::size_t p : in.paths) r.paths.insert(p + (n.conv.kernel - 1) * in.stride_product);
        r.stride_product = in.stride_product * n.conv.stride;
        break;
      case LayerKind::global_avg_pool: {
        const std::size_t extent = std::max(shapes[n.inputs[0]].h, shapes[n.inputs[0]].w);
        for (std::size_t p : in.paths) r.paths.insert(p + (extent - 1) * in.stride_product);
        r.stride_product = in.stride_product * extent;
        break;
      }
      case LayerKind::add:
      case LayerKind::concat:
        r.stride_product = in.stride_product;
        for (std::size_t j : n.inputs) {
          r.paths.insert(out[j].paths.begin(), out[j].paths.end());
          r.stride_product = std::max(r.stride_product, out[j].stride_product);
        }
        break;
      default:
        r = in;
    }
    r.rf = *r.paths.rbegin();
    out[i] = std::move(r);
  }
  return out;
}

}  // namespace wrin
