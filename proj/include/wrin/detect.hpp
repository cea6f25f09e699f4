#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wrin/tensor.hpp"

namespace wrin {

/// Axis-aligned box in corner form. Detection internals use image-normalized
/// coordinates; pixel boxes are converted at the I/O boundary.
struct Box {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const { return 0.5 * (xmin + xmax); }
  double cy() const { return 0.5 * (ymin + ymax); }
  Box clipped() const {
    return {std::clamp(xmin, 0.0, 1.0), std::clamp(ymin, 0.0, 1.0), std::clamp(xmax, 0.0, 1.0),
            std::clamp(ymax, 0.0, 1.0)};
  }
  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }
  friend bool operator==(const Box&, const Box&) = default;
};

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double h = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  return w > 0 && h > 0 ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// -- prior boxes ------------------------------------------------------------------

struct FeatureMapPriors {
  std::size_t grid_h = 1;
  std::size_t grid_w = 1;
  double scale = 0.2;
  double next_scale = 0.2;  // s_{k+1}, used by the extra square prior
  std::vector<double> aspect_ratios{1.0};
  bool extra_prior = true;

  std::size_t priors_per_cell() const { return aspect_ratios.size() + (extra_prior ? 1 : 0); }
};

struct PriorLayout {
  std::vector<FeatureMapPriors> maps;
  double s_min = 0.2;
  double s_max = 0.9;

  std::size_t prior_count() const {
    std::size_t n = 0;
    for (const auto& m : maps) n += m.grid_h * m.grid_w * m.priors_per_cell();
    return n;
  }

  void validate() const {
    for (std::size_t i = 0; i < maps.size(); ++i) {
      if (maps[i].grid_h == 0 || maps[i].grid_w == 0) throw std::invalid_argument("prior grid must be non-empty");
      if (maps[i].scale <= 0) throw std::invalid_argument("prior scale must be positive");
      for (double a : maps[i].aspect_ratios) {
        if (a <= 0) throw std::invalid_argument("aspect ratios must be positive");
      }
      if (i > 0 && maps[i].scale <= maps[i - 1].scale) throw std::invalid_argument("prior scales must increase");
    }
  }
};

/// Scales spaced linearly from s_min to s_max over the maps; the last map's
/// extra prior uses s_max + step, capped at 1.
inline PriorLayout make_prior_layout(const std::vector<std::pair<std::size_t, std::size_t>>& grids, double s_min,
                                     double s_max, const std::vector<double>& aspect_ratios, bool extra = true) {
  PriorLayout layout;
  layout.s_min = s_min;
  layout.s_max = s_max;
  const std::size_t m = grids.size();
  const double step = m > 1 ? (s_max - s_min) / static_cast<double>(m - 1) : 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    FeatureMapPriors f;
    f.grid_h = grids[k].first;
    f.grid_w = grids[k].second;
    f.scale = s_min + step * static_cast<double>(k);
    f.next_scale = std::min(1.0, k + 1 < m ? s_min + step * static_cast<double>(k + 1) : s_max + step);
    if (m == 1) f.next_scale = s_max;
    f.aspect_ratios = aspect_ratios;
    f.extra_prior = extra;
    layout.maps.push_back(f);
  }
  return layout;
}

/// Priors ordered by (map, row, col, ratio); the extra square prior follows the
/// ratio priors of each cell. All boxes are clipped to [0, 1].
inline std::vector<Box> generate_priors(const PriorLayout& layout) {
  layout.validate();
  std::vector<Box> out;
  out.reserve(layout.prior_count());
  for (const auto& m : layout.maps) {
    for (std::size_t i = 0; i < m.grid_h; ++i) {
      for (std::size_t j = 0; j < m.grid_w; ++j) {
        const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(m.grid_w);
        const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(m.grid_h);
        for (double a : m.aspect_ratios) {
          const double r = std::sqrt(a);
          out.push_back(Box::from_center(cx, cy, m.scale * r, m.scale / r).clipped());
        }
        if (m.extra_prior) {
          const double s = std::sqrt(m.scale * m.next_scale);
          out.push_back(Box::from_center(cx, cy, s, s).clipped());
        }
      }
    }
  }
  return out;
}

// -- offset coding ------------------------------------------------------------------

struct Variances {
  double center = 0.1;
  double size = 0.2;
};

using Offsets = std::array<double, 4>;

/// Center-size coding relative to a prior.
inline Offsets encode_box(const Box& gt, const Box& prior, Variances v = {}) {
  if (prior.width() <= 0 || prior.height() <= 0) throw std::invalid_argument("encode_box: degenerate prior");
  if (gt.width() <= 0 || gt.height() <= 0) throw std::invalid_argument("encode_box: nonpositive groundtruth size");
  return {(gt.cx() - prior.cx()) / (prior.width() * v.center), (gt.cy() - prior.cy()) / (prior.height() * v.center),
          std::log(gt.width() / prior.width()) / v.size, std::log(gt.height() / prior.height()) / v.size};
}

inline Box decode_box(const Offsets& t, const Box& prior, Variances v = {}) {
  if (prior.width() <= 0 || prior.height() <= 0) throw std::invalid_argument("decode_box: degenerate prior");
  const double cx = prior.cx() + t[0] * v.center * prior.width();
  const double cy = prior.cy() + t[1] * v.center * prior.height();
  const double w = prior.width() * std::exp(t[2] * v.size);
  const double h = prior.height() * std::exp(t[3] * v.size);
  return Box::from_center(cx, cy, w, h);
}

// -- matching ---------------------------------------------------------------------

inline constexpr int kBackground = -1;

/// Per-prior groundtruth index or kBackground. First every groundtruth is
/// paired with a distinct prior by repeatedly taking the highest-IoU remaining
/// (gt, prior) pair (ties: lower prior index, then lower gt); then every other
/// prior takes its best groundtruth when that IoU reaches the threshold (ties to
/// the lower gt index).
inline std::vector<int> match_priors(const std::vector<Box>& priors, const std::vector<Box>& gts,
                                     double iou_threshold = 0.5) {
  std::vector<int> match(priors.size(), kBackground);
  if (gts.empty() || priors.empty()) return match;
  const std::size_t P = priors.size();
  const std::size_t G = gts.size();
  std::vector<double> overlap(P * G);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t g = 0; g < G; ++g) overlap[p * G + g] = iou(priors[p], gts[g]);
  }
  // Per gt, candidate priors sorted by descending IoU then index.
  std::vector<std::vector<std::size_t>> ranked(G);
  for (std::size_t g = 0; g < G; ++g) {
    ranked[g].resize(P);
    std::iota(ranked[g].begin(), ranked[g].end(), std::size_t{0});
    std::ranges::stable_sort(ranked[g], [&](std::size_t a, std::size_t b) { return overlap[a * G + g] > overlap[b * G + g]; });
  }
  std::vector<bool> prior_taken(P, false);
  std::vector<bool> gt_done(G, false);
  std::vector<std::size_t> cursor(G, 0);
  for (std::size_t round = 0; round < std::min(P, G); ++round) {
    std::size_t best_g = G;
    std::size_t best_p = P;
    double best = -1.0;
    for (std::size_t g = 0; g < G; ++g) {
      if (gt_done[g]) continue;
      while (prior_taken[ranked[g][cursor[g]]]) ++cursor[g];
      const std::size_t p = ranked[g][cursor[g]];
      const double v = overlap[p * G + g];
      if (v > best || (v == best && p < best_p)) {
        best = v;
        best_g = g;
        best_p = p;
      }
    }
    gt_done[best_g] = true;
    prior_taken[best_p] = true;
    match[best_p] = static_cast<int>(best_g);
  }
  for (std::size_t p = 0; p < P; ++p) {
    if (prior_taken[p]) continue;
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < G; ++g) {
      if (overlap[p * G + g] > best) {
        best = overlap[p * G + g];
        best_g = g;
      }
    }
    if (best >= iou_threshold) match[p] = static_cast<int>(best_g);
  }
  return match;
}

/// Training targets per prior: class (0 = background, gt classes shifted by 1)
/// and encoded offsets for matched priors.
struct MultiboxTargets {
  std::vector<int> labels;
  std::vector<Offsets> offsets;
  std::size_t positives() const {
    return static_cast<std::size_t>(std::ranges::count_if(labels, [](int l) { return l > 0; }));
  }
};

inline MultiboxTargets build_targets(const std::vector<Box>& priors, const std::vector<Box>& gts,
                                     const std::vector<int>& gt_classes, double iou_threshold = 0.5,
                                     Variances v = {}) {
  if (gt_classes.size() != gts.size()) throw std::invalid_argument("build_targets: one class per groundtruth");
  const auto match = match_priors(priors, gts, iou_threshold);
  MultiboxTargets t;
  t.labels.assign(priors.size(), 0);
  t.offsets.assign(priors.size(), Offsets{0, 0, 0, 0});
  for (std::size_t p = 0; p < priors.size(); ++p) {
    if (match[p] == kBackground) continue;
    const auto g = static_cast<std::size_t>(match[p]);
    t.labels[p] = gt_classes[g] + 1;
    t.offsets[p] = encode_box(gts[g], priors[p], v);
  }
  return t;
}

// -- loss -------------------------------------------------------------------------

inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}
inline double smooth_l1_grad(double x) { return std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0); }

template <typename T>
struct MultiboxLoss {
  double loss = 0;
  double conf_loss = 0;  // already divided by the match count
  double loc_loss = 0;   // already divided by the match count
  std::size_t matched = 0;
  std::size_t negatives = 0;
  std::vector<T> grad_logits;   // P x K
  std::vector<T> grad_offsets;  // P x 4
};

/// Softmax cross-entropy over matched priors plus the hardest background priors
/// (at most negpos_ratio per match), and smooth-L1 over matched offsets; both
/// divided by the match count. `logits` is P x K with class 0 = background.
template <typename T>
MultiboxLoss<T> multibox_loss(std::span<const T> logits, std::span<const T> offsets, std::size_t num_classes,
                              const MultiboxTargets& targets, std::size_t negpos_ratio = 3) {
  const std::size_t P = targets.labels.size();
  if (logits.size() != P * num_classes || offsets.size() != P * 4) {
    throw ShapeError("multibox_loss: prediction sizes do not match prior count");
  }
  MultiboxLoss<T> r;
  r.grad_logits.assign(P * num_classes, T(0));
  r.grad_offsets.assign(P * 4, T(0));
  r.matched = targets.positives();
  if (r.matched == 0) return r;

  std::vector<double> prob(P * num_classes);
  std::vector<double> bg_loss(P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    const T* z = logits.data() + p * num_classes;
    const double peak = static_cast<double>(*std::max_element(z, z + num_classes));
    double denom = 0;
    for (std::size_t k = 0; k < num_classes; ++k) denom += std::exp(static_cast<double>(z[k]) - peak);
    for (std::size_t k = 0; k < num_classes; ++k) prob[p * num_classes + k] = std::exp(static_cast<double>(z[k]) - peak) / denom;
    bg_loss[p] = std::log(denom) - (static_cast<double>(z[0]) - peak);
  }
  std::vector<std::size_t> negatives;
  for (std::size_t p = 0; p < P; ++p) {
    if (targets.labels[p] == 0) negatives.push_back(p);
  }
  std::ranges::stable_sort(negatives, [&](std::size_t a, std::size_t b) { return bg_loss[a] > bg_loss[b]; });
  negatives.resize(std::min(negatives.size(), negpos_ratio * r.matched));
  r.negatives = negatives.size();

  const double norm = static_cast<double>(r.matched);
  auto add_conf = [&](std::size_t p, int label) {
    const auto l = static_cast<std::size_t>(label);
    r.conf_loss -= std::log(std::max(prob[p * num_classes + l], 1e-300));
    for (std::size_t k = 0; k < num_classes; ++k) {
      r.grad_logits[p * num_classes + k] = static_cast<T>((prob[p * num_classes + k] - (k == l ? 1.0 : 0.0)) / norm);
    }
  };
  for (std::size_t p = 0; p < P; ++p) {
    if (targets.labels[p] <= 0) continue;
    add_conf(p, targets.labels[p]);
    for (std::size_t c = 0; c < 4; ++c) {
      const double d = static_cast<double>(offsets[p * 4 + c]) - targets.offsets[p][c];
      r.loc_loss += smooth_l1(d);
      r.grad_offsets[p * 4 + c] = static_cast<T>(smooth_l1_grad(d) / norm);
    }
  }
  for (std::size_t p : negatives) add_conf(p, 0);
  r.conf_loss /= norm;
  r.loc_loss /= norm;
  r.loss = r.conf_loss + r.loc_loss;
  return r;
}

// -- non-maximum suppression ----------------------------------------------------------

struct Detection {
  int class_id = 0;
  double score = 0;
  Box box;
  std::string image_id;
};

/// Greedy suppression within one set of boxes: keeps the best remaining box and
/// drops every other box whose IoU with it exceeds the threshold. Ties in score
/// keep input order. Returns kept indices in selection order.
inline std::vector<std::size_t> nms_indices(const std::vector<Detection>& dets, double iou_threshold = 0.45) {
  for (const auto& d : dets) {
    if (!std::isfinite(d.score)) throw NumericError("nms: non-finite score");
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<bool> suppressed(dets.size(), false);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t a = order[i];
    if (suppressed[a]) continue;
    keep.push_back(a);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t b = order[j];
      if (!suppressed[b] && iou(dets[a].box, dets[b].box) > iou_threshold) suppressed[b] = true;
    }
  }
  return keep;
}

/// Per-class NMS; output grouped by ascending class id.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold = 0.45) {
  std::vector<int> classes;
  for (const auto& d : dets) classes.push_back(d.class_id);
  std::ranges::sort(classes);
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<Detection> out;
  for (int c : classes) {
    std::vector<Detection> group;
    for (const auto& d : dets) {
      if (d.class_id == c) group.push_back(d);
    }
    for (std::size_t i : nms_indices(group, iou_threshold)) out.push_back(group[i]);
  }
  return out;
}

}  // namespace wrin
