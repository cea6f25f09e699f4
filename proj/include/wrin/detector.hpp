#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wrin/detect.hpp"
#include "wrin/network.hpp"
#include "wrin/optimizer.hpp"

namespace wrin {

/// SSD-style head on a residual backbone: each tapped stage output goes through
/// BN -> ReLU and two 3x3 convolutions (class scores and box offsets).
struct DetectorConfig {
  NetworkConfig backbone;
  std::size_t num_classes = 3;          // foreground classes; background is added as class 0
  std::vector<std::size_t> taps{1, 2};  // stage indices (conv3 and conv4 of the three-stage nets)
  std::vector<double> aspect_ratios{1.0, 2.0, 0.5};
  double s_min = 0.2;
  double s_max = 0.9;
  double match_iou = 0.5;
  std::size_t negpos_ratio = 3;
  Variances variances;

  std::size_t scores_per_prior() const { return num_classes + 1; }
};

struct HeadTap {
  std::size_t source = 0;
  std::size_t conf = 0;
  std::size_t loc = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

template <typename T>
struct Detector {
  DetectorConfig config;
  Network<T> graph;
  NetworkLayout layout;
  std::vector<HeadTap> heads;
  PriorLayout prior_layout;
  std::vector<Box> priors;

  std::size_t priors_per_cell() const { return prior_layout.maps.front().priors_per_cell(); }
};

template <typename T = float>
Detector<T> build_detector(const DetectorConfig& config, std::uint64_t seed) {
  config.backbone.validate();
  if (config.taps.empty()) throw std::invalid_argument("detector needs at least one tapped stage");
  Detector<T> d{config, Network<T>(config.backbone.input_shape), {}, {}, {}, {}};
  d.layout = build_backbone(d.graph, config.backbone);
  const std::size_t anchors = config.aspect_ratios.size() + 1;
  std::vector<std::pair<std::size_t, std::size_t>> grids;
  for (std::size_t k = 0; k < config.taps.size(); ++k) {
    if (config.taps[k] >= d.layout.stage_outputs.size()) throw ConfigError("detector tap out of range", config.taps[k]);
    const std::size_t src = d.layout.stage_outputs[config.taps[k]];
    const std::string name = "head" + std::to_string(k + 1);
    const std::size_t bn = d.graph.add_batch_norm(name + "/bn", src);
    const std::size_t relu = d.graph.add_relu(name + "/relu", bn);
    HeadTap h;
    h.source = src;
    h.conf = d.graph.add_conv(name + "/conf", relu, anchors * config.scores_per_prior(), 3, 1, 1, true);
    h.loc = d.graph.add_conv(name + "/loc", relu, anchors * 4, 3, 1, 1, true);
    h.grid_h = d.graph.node(src).out_shape.h;
    h.grid_w = d.graph.node(src).out_shape.w;
    grids.emplace_back(h.grid_h, h.grid_w);
    d.heads.push_back(h);
  }
  d.prior_layout = make_prior_layout(grids, config.s_min, config.s_max, config.aspect_ratios, true);
  d.priors = generate_priors(d.prior_layout);
  d.graph.set_output(d.heads.back().loc);
  d.graph.initialize(seed);
  return d;
}

/// Per-sample predictions in prior order: P x K scores and P x 4 offsets.
template <typename T>
struct HeadOutputs {
  std::vector<std::vector<T>> scores;
  std::vector<std::vector<T>> offsets;
};

namespace detail {

// Conv output channel a*D + d at (i, j) holds value d of anchor a in cell (i, j).
template <typename T>
void gather_head(const Tensor<T>& y, std::size_t anchors, std::size_t depth, std::size_t n, std::vector<T>& out) {
  const Shape s = y.shape();
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) {
      for (std::size_t a = 0; a < anchors; ++a) {
        for (std::size_t d = 0; d < depth; ++d) out.push_back(y.at(n, a * depth + d, i, j));
      }
    }
  }
}

template <typename T>
std::size_t scatter_head(Tensor<T>& g, std::size_t anchors, std::size_t depth, std::size_t n, const std::vector<T>& src,
                         std::size_t offset) {
  const Shape s = g.shape();
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) {
      for (std::size_t a = 0; a < anchors; ++a) {
        for (std::size_t d = 0; d < depth; ++d) g.at(n, a * depth + d, i, j) = src[offset++];
      }
    }
  }
  return offset;
}

}  // namespace detail

template <typename T>
HeadOutputs<T> gather_outputs(const Detector<T>& d, const Trace<T>& trace) {
  const std::size_t n = trace.outputs[0].shape().n;
  const std::size_t anchors = d.priors_per_cell();
  HeadOutputs<T> out;
  out.scores.resize(n);
  out.offsets.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (const auto& h : d.heads) {
      detail::gather_head(trace.outputs[h.conf], anchors, d.config.scores_per_prior(), s, out.scores[s]);
      detail::gather_head(trace.outputs[h.loc], anchors, 4, s, out.offsets[s]);
    }
  }
  return out;
}

/// One image's groundtruth: normalized boxes and foreground class indices.
struct DetectionSample {
  std::vector<Box> boxes;
  std::vector<int> classes;
};

struct DetectorStep {
  double loss = 0;
  std::size_t matched = 0;
};

/// Forward + multibox loss + backward; loss is averaged over the batch and
/// gradients are left in the parameters.
template <typename T>
DetectorStep detector_loss_and_grad(Detector<T>& d, const Tensor<T>& images, const std::vector<DetectionSample>& truth) {
  const std::size_t n = images.shape().n;
  if (truth.size() != n) throw std::invalid_argument("detector: one groundtruth entry per image");
  Trace<T> trace = d.graph.forward(images, Mode::train);
  HeadOutputs<T> pred = gather_outputs(d, trace);
  const std::size_t K = d.config.scores_per_prior();
  const std::size_t anchors = d.priors_per_cell();
  std::vector<std::pair<std::size_t, Tensor<T>>> seeds;
  for (const auto& h : d.heads) {
    seeds.emplace_back(h.conf, Tensor<T>(trace.outputs[h.conf].shape()));
    seeds.emplace_back(h.loc, Tensor<T>(trace.outputs[h.loc].shape()));
  }
  DetectorStep step;
  for (std::size_t s = 0; s < n; ++s) {
    const MultiboxTargets targets =
        build_targets(d.priors, truth[s].boxes, truth[s].classes, d.config.match_iou, d.config.variances);
    auto l = multibox_loss<T>(pred.scores[s], pred.offsets[s], K, targets, d.config.negpos_ratio);
    step.loss += l.loss / static_cast<double>(n);
    step.matched += l.matched;
    for (auto& v : l.grad_logits) v /= static_cast<T>(n);
    for (auto& v : l.grad_offsets) v /= static_cast<T>(n);
    std::size_t conf_off = 0;
    std::size_t loc_off = 0;
    for (std::size_t h = 0; h < d.heads.size(); ++h) {
      conf_off = detail::scatter_head(seeds[2 * h].second, anchors, K, s, l.grad_logits, conf_off);
      loc_off = detail::scatter_head(seeds[2 * h + 1].second, anchors, 4, s, l.grad_offsets, loc_off);
    }
  }
  if (!std::isfinite(step.loss)) throw NumericError("non-finite detection loss");
  d.graph.zero_grad();
  d.graph.backward(trace, std::move(seeds));
  return step;
}

template <typename T>
DetectorStep detector_train_step(Detector<T>& d, OptimizerState<T>& opt, const Tensor<T>& images,
                                 const std::vector<DetectionSample>& truth, const TrainConfig& cfg) {
  DetectorStep step = detector_loss_and_grad(d, images, truth);
  const double lr = lr_at(cfg.schedule, opt.step_count, cfg.lr_initial);
  sgd_nesterov_step<T>(d.graph.params(), opt, static_cast<T>(lr), static_cast<T>(cfg.momentum),
                       static_cast<T>(cfg.weight_decay), cfg.freeze);
  return step;
}

/// Inference: softmax scores, decoded boxes, per-class NMS, then the top `keep`
/// by score. Class ids in the result are foreground indices.
template <typename T>
std::vector<std::vector<Detection>> detect(const Detector<T>& d, const Tensor<T>& images, double score_threshold = 0.01,
                                           double nms_iou = 0.45, std::size_t keep = 200) {
  Trace<T> trace = d.graph.run(images, Mode::infer, true);
  HeadOutputs<T> pred = gather_outputs(d, trace);
  const std::size_t K = d.config.scores_per_prior();
  std::vector<std::vector<Detection>> out(images.shape().n);
  for (std::size_t s = 0; s < out.size(); ++s) {
    std::vector<Detection> candidates;
    for (std::size_t p = 0; p < d.priors.size(); ++p) {
      const T* z = pred.scores[s].data() + p * K;
      const double peak = static_cast<double>(*std::max_element(z, z + K));
      double denom = 0;
      for (std::size_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(z[k]) - peak);
      Offsets t;
      for (std::size_t c = 0; c < 4; ++c) t[c] = static_cast<double>(pred.offsets[s][p * 4 + c]);
      const Box box = decode_box(t, d.priors[p], d.config.variances).clipped();
      for (std::size_t k = 1; k < K; ++k) {
        const double score = std::exp(static_cast<double>(z[k]) - peak) / denom;
        if (score >= score_threshold) candidates.push_back({static_cast<int>(k - 1), score, box, std::to_string(s)});
      }
    }
    auto kept = nms(candidates, nms_iou);
    std::ranges::stable_sort(kept, [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (kept.size() > keep) kept.resize(keep);
    out[s] = std::move(kept);
  }
  return out;
}

}  // namespace wrin
