// Independent reference implementations used as test oracles.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "wrin/wrin.hpp"

namespace oracle {

// -- parameter counting by hand ----------------------------------------------------

inline std::uint64_t bn(std::uint64_t c) { return 2 * c; }

inline std::uint64_t unit_params(const wrin::UnitSpec& u) {
  const std::uint64_t in = u.in_channels;
  const auto& w = u.widths;
  const bool project = u.stride != 1 || u.in_channels != u.out_channels;
  const std::uint64_t shortcut = project ? in * u.out_channels : 0;
  switch (u.variant) {
    case wrin::UnitVariant::basic:
      return bn(in) + in * 9 * w[0] + bn(w[0]) + w[0] * 9 * w[1] + shortcut;
    case wrin::UnitVariant::bottleneck:
      return bn(in) + in * w[0] + bn(w[0]) + w[0] * 9 * w[1] + bn(w[1]) + w[1] * w[2] + shortcut;
    case wrin::UnitVariant::inception:
      return bn(in) + in * w[0] + bn(w[0]) + w[0] * 9 * w[1] + bn(w[0]) + w[0] * 9 * w[2] + bn(w[2]) + w[2] * 9 * w[3] +
             (w[0] + w[1] + w[3]) * u.out_channels + shortcut;
  }
  return 0;
}

inline std::uint64_t network_params(const wrin::NetworkConfig& c) {
  std::uint64_t total = static_cast<std::uint64_t>(c.input_shape.c) * c.conv1_kernel * c.conv1_kernel * c.conv1_out;
  std::uint64_t channels = c.conv1_out;
  for (const auto& s : c.stages) {
    for (const auto& u : s.units) {
      total += unit_params(u);
      channels = u.out_channels;
    }
  }
  return total + bn(channels) + channels * c.num_classes + c.num_classes;
}

// -- receptive fields by pixel influence ---------------------------------------------

struct Influence {
  std::size_t extent = 0;  // max of vertical and horizontal spread of influencing pixels
  bool clipped = false;    // spread touches the image border
};

/// Sets every weight positive and every normalization to (nearly) the identity so
/// that each path contributes a strictly positive influence, then perturbs one
/// input pixel at a time and records which pixels change each node's centre output.
inline std::vector<Influence> pixel_influence(wrin::Network<double> net) {
  for (auto& p : net.params()) {
    if (p.name.ends_with("/weight")) {
      for (auto& v : p.value) v = 1.0 / static_cast<double>(p.value.size() / p.dims[0]);
    } else if (p.name.ends_with("/running_var") || p.name.ends_with("/gamma")) {
      std::ranges::fill(p.value, 1.0);
    } else {
      std::ranges::fill(p.value, 0.0);
    }
  }
  const wrin::Shape3 in = net.input_shape();
  const std::size_t pixels = in.h * in.w;
  const auto base = net.run(wrin::Tensor<double>::filled(in.batch(1), 1.0), wrin::Mode::infer, true);
  const std::size_t nodes = net.nodes().size();
  std::vector<std::size_t> ymin(nodes, in.h), ymax(nodes, 0), xmin(nodes, in.w), xmax(nodes, 0);
  std::vector<bool> any(nodes, false);
  const std::size_t batch = 256;
  for (std::size_t first = 0; first < pixels; first += batch) {
    const std::size_t count = std::min(batch, pixels - first);
    auto x = wrin::Tensor<double>::filled(in.batch(count), 1.0);
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t py = (first + b) / in.w, px = (first + b) % in.w;
      for (std::size_t c = 0; c < in.c; ++c) x.at(b, c, py, px) += 1.0;
    }
    const auto t = net.run(x, wrin::Mode::infer, true);
    for (std::size_t i = 0; i < nodes; ++i) {
      const auto& y = t.outputs[i];
      const std::size_t cy = y.shape().h / 2, cx = y.shape().w / 2;
      for (std::size_t b = 0; b < count; ++b) {
        bool changed = false;
        for (std::size_t c = 0; c < y.shape().c && !changed; ++c) {
          changed = y.at(b, c, cy, cx) != base.outputs[i].at(0, c, cy, cx);
        }
        if (!changed) continue;
        const std::size_t py = (first + b) / in.w, px = (first + b) % in.w;
        any[i] = true;
        ymin[i] = std::min(ymin[i], py);
        ymax[i] = std::max(ymax[i], py);
        xmin[i] = std::min(xmin[i], px);
        xmax[i] = std::max(xmax[i], px);
      }
    }
  }
  std::vector<Influence> out(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    if (!any[i]) continue;
    out[i].extent = std::max(ymax[i] - ymin[i] + 1, xmax[i] - xmin[i] + 1);
    out[i].clipped = ymin[i] == 0 || xmin[i] == 0 || ymax[i] + 1 == in.h || xmax[i] + 1 == in.w;
  }
  return out;
}

// -- detection references --------------------------------------------------------------

inline double box_area(const wrin::Box& b) { return std::max(0.0, b.xmax - b.xmin) * std::max(0.0, b.ymax - b.ymin); }

inline double overlap(const wrin::Box& a, const wrin::Box& b) {
  const double iw = std::max(0.0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const double ih = std::max(0.0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Kept set: a box survives iff no higher-ranked surviving box overlaps it beyond
/// the threshold. Ranking: score descending, then input index.
inline std::vector<std::size_t> nms(const std::vector<wrin::Detection>& d, double thr) {
  std::vector<std::size_t> rank(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) rank[i] = i;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      const bool swap = d[rank[j]].score > d[rank[i]].score ||
                        (d[rank[j]].score == d[rank[i]].score && rank[j] < rank[i]);
      if (swap) std::swap(rank[i], rank[j]);
    }
  std::vector<std::size_t> kept;
  for (std::size_t r : rank) {
    bool suppressed = false;
    for (std::size_t k : kept) suppressed = suppressed || overlap(d[k].box, d[r].box) > thr;
    if (!suppressed) kept.push_back(r);
  }
  return kept;
}

/// Exhaustive matcher: the forced stage rescans every unassigned (prior, gt)
/// pair for the maximum IoU (ties: lower prior, then lower gt); remaining priors
/// take their best gt (ties: lower gt) when it reaches the threshold.
inline std::vector<int> match(const std::vector<wrin::Box>& priors, const std::vector<wrin::Box>& gts, double thr) {
  std::vector<int> m(priors.size(), -1);
  std::vector<bool> gt_done(gts.size(), false), prior_done(priors.size(), false);
  for (std::size_t round = 0; round < std::min(gts.size(), priors.size()); ++round) {
    double best = -1;
    std::size_t bg = 0, bp = 0;
    for (std::size_t p = 0; p < priors.size(); ++p) {
      if (prior_done[p]) continue;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (gt_done[g]) continue;
        const double o = overlap(priors[p], gts[g]);
        if (o > best) {
          best = o;
          bg = g;
          bp = p;
        }
      }
    }
    gt_done[bg] = prior_done[bp] = true;
    m[bp] = static_cast<int>(bg);
  }
  for (std::size_t p = 0; p < priors.size(); ++p) {
    if (prior_done[p]) continue;
    double best = -1;
    std::size_t bg = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double o = overlap(priors[p], gts[g]);
      if (o > best) {
        best = o;
        bg = g;
      }
    }
    if (!gts.empty() && best >= thr) m[p] = static_cast<int>(bg);
  }
  return m;
}

}  // namespace oracle
