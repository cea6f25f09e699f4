#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrin/detect.hpp"
#include "wrin/kitti.hpp"

namespace wrin {

struct GroundTruth {
  std::string image_id;
  int class_id = 0;  // ignored for dont_care regions, which apply to every class
  Box box;
  bool eligible = true;  // false: outside the difficulty filter; matches are neither TP nor FP
  bool dont_care = false;
};

enum class ApMethod { eleven_point, all_point };

struct ClassResult {
  int class_id = 0;
  double ap = 0;
  double ar = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t groundtruths = 0;  // eligible only
  bool valid() const { return groundtruths > 0; }
};

struct DetectionEval {
  std::vector<ClassResult> classes;
  double map = 0;  // over classes with at least one eligible groundtruth
  double mar = 0;
};

/// Average precision from a ranked TP/FP sequence.
inline double average_precision(const std::vector<bool>& is_tp, std::size_t groundtruths, ApMethod method) {
  if (groundtruths == 0) return 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < is_tp.size(); ++i) {
    tp += is_tp[i] ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(groundtruths));
  }
  if (method == ApMethod::eleven_point) {
    double sum = 0;
    for (int k = 0; k <= 10; ++k) {
      const double r = k / 10.0;
      double best = 0;
      for (std::size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] >= r) best = std::max(best, precision[i]);
      }
      sum += best;
    }
    return sum / 11.0;
  }
  // Area under the monotone precision envelope.
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] <= prev_recall) continue;
    double envelope = 0;
    for (std::size_t j = i; j < precision.size(); ++j) envelope = std::max(envelope, precision[j]);
    ap += (recall[i] - prev_recall) * envelope;
    prev_recall = recall[i];
  }
  return ap;
}

/// Per-class AP/AR. Detections are ranked by score (ties keep input order). A
/// detection takes the best-IoU unmatched eligible groundtruth of its class in
/// its image when that IoU reaches the threshold (TP); otherwise an ineligible
/// one (ignored); otherwise, if at least half of it lies in a DontCare region,
/// it is ignored; else it is a FP. `images` lists every known image id.
inline DetectionEval evaluate_detections(const std::vector<Detection>& detections, const std::vector<GroundTruth>& gts,
                                         const std::set<std::string>& images, std::size_t num_classes,
                                         double iou_threshold = 0.5, ApMethod method = ApMethod::eleven_point) {
  for (const auto& d : detections) {
    if (!images.contains(d.image_id)) throw std::invalid_argument("detection references unknown image '" + d.image_id + "'");
    if (!std::isfinite(d.score)) throw NumericError("detection score is not finite");
  }
  for (const auto& g : gts) {
    if (!images.contains(g.image_id)) throw std::invalid_argument("groundtruth references unknown image '" + g.image_id + "'");
  }
  DetectionEval out;
  double ap_sum = 0;
  double ar_sum = 0;
  std::size_t valid = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const int cls = static_cast<int>(c);
    std::map<std::string, std::vector<std::size_t>> by_image;
    std::map<std::string, std::vector<Box>> dont_care;
    ClassResult res;
    res.class_id = cls;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      if (gts[i].dont_care) {
        dont_care[gts[i].image_id].push_back(gts[i].box);
      } else if (gts[i].class_id == cls) {
        by_image[gts[i].image_id].push_back(i);
        if (gts[i].eligible) ++res.groundtruths;
      }
    }
    std::vector<std::size_t> ranked;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].class_id == cls) ranked.push_back(i);
    }
    std::ranges::stable_sort(ranked, [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });

    std::vector<bool> used(gts.size(), false);
    std::vector<bool> is_tp;
    for (std::size_t di : ranked) {
      const Detection& d = detections[di];
      std::optional<std::size_t> best_eligible;
      std::optional<std::size_t> best_ignored;
      double iou_eligible = -1;
      double iou_ignored = -1;
      for (std::size_t gi : by_image[d.image_id]) {
        if (used[gi]) continue;
        const double o = iou(d.box, gts[gi].box);
        if (o < iou_threshold) continue;
        if (gts[gi].eligible && o > iou_eligible) {
          iou_eligible = o;
          best_eligible = gi;
        } else if (!gts[gi].eligible && o > iou_ignored) {
          iou_ignored = o;
          best_ignored = gi;
        }
      }
      if (best_eligible) {
        used[*best_eligible] = true;
        is_tp.push_back(true);
        continue;
      }
      if (best_ignored) {
        used[*best_ignored] = true;
        continue;
      }
      const bool in_dont_care = std::ranges::any_of(dont_care[d.image_id], [&](const Box& r) {
        return d.box.area() > 0 && intersection_area(d.box, r) / d.box.area() >= 0.5;
      });
      if (!in_dont_care) is_tp.push_back(false);
    }
    res.true_positives = static_cast<std::size_t>(std::ranges::count(is_tp, true));
    res.false_positives = is_tp.size() - res.true_positives;
    res.ap = average_precision(is_tp, res.groundtruths, method);
    res.ar = res.groundtruths ? static_cast<double>(res.true_positives) / static_cast<double>(res.groundtruths) : 0.0;
    if (res.valid()) {
      ap_sum += res.ap;
      ar_sum += res.ar;
      ++valid;
    }
    out.classes.push_back(res);
  }
  if (valid > 0) {
    out.map = ap_sum / static_cast<double>(valid);
    out.mar = ar_sum / static_cast<double>(valid);
  }
  return out;
}

/// Image ids are taken from the groundtruth set.
inline DetectionEval evaluate_detections(const std::vector<Detection>& detections, const std::vector<GroundTruth>& gts,
                                         std::size_t num_classes, double iou_threshold = 0.5,
                                         ApMethod method = ApMethod::eleven_point) {
  std::set<std::string> images;
  for (const auto& g : gts) images.insert(g.image_id);
  return evaluate_detections(detections, gts, images, num_classes, iou_threshold, method);
}

// -- KITTI adapter -------------------------------------------------------------------

inline const std::vector<std::string>& kitti_classes() {
  static const std::vector<std::string> names{"Car", "Pedestrian", "Cyclist"};
  return names;
}

inline constexpr double kKittiImageWidth = 1242.0;
inline constexpr double kKittiImageHeight = 375.0;

inline std::optional<int> kitti_class_index(const std::string& type) {
  const auto& names = kitti_classes();
  auto it = std::ranges::find(names, type);
  if (it == names.end()) return std::nullopt;
  return static_cast<int>(it - names.begin());
}

inline Box kitti_box(const KittiObject& o) {
  return {o.left / kKittiImageWidth, o.top / kKittiImageHeight, o.right / kKittiImageWidth, o.bottom / kKittiImageHeight};
}

using KittiSet = std::map<std::string, std::vector<KittiObject>>;

/// Detection ids with no groundtruth file.
inline std::vector<std::string> kitti_orphans(const KittiSet& gt, const KittiSet& det) {
  std::vector<std::string> out;
  for (const auto& [id, objs] : det) {
    if (!gt.contains(id)) out.push_back(id);
  }
  return out;
}

/// `level` empty: every labelled object of an evaluated class is eligible.
/// Objects of other classes are dropped; DontCare regions are kept.
inline DetectionEval evaluate_kitti(const KittiSet& gt, const KittiSet& det, std::optional<Difficulty> level,
                                    double iou_threshold = 0.5, ApMethod method = ApMethod::eleven_point) {
  std::set<std::string> images;
  std::vector<GroundTruth> gts;
  for (const auto& [id, objs] : gt) {
    images.insert(id);
    for (const auto& o : objs) {
      if (o.dont_care()) {
        gts.push_back({id, -1, kitti_box(o), false, true});
        continue;
      }
      const auto cls = kitti_class_index(o.type);
      if (!cls) continue;
      const bool eligible = !level || counts_for(kitti_difficulty(o), *level);
      gts.push_back({id, *cls, kitti_box(o), eligible, false});
    }
  }
  std::vector<Detection> dets;
  for (const auto& [id, objs] : det) {
    for (const auto& o : objs) {
      const auto cls = kitti_class_index(o.type);
      if (!cls) continue;
      dets.push_back({*cls, o.score.value_or(1.0), kitti_box(o), id});
    }
  }
  return evaluate_detections(dets, gts, images, kitti_classes().size(), iou_threshold, method);
}

struct KittiReportRow {
  std::string difficulty;  // easy | moderate | hard | all
  DetectionEval eval;
};

struct KittiReport {
  std::vector<KittiReportRow> rows;
  double map = 0;  // headline row: moderate when present, else the only row
  double mar = 0;
};

inline KittiReport kitti_report(const KittiSet& gt, const KittiSet& det, const std::vector<std::optional<Difficulty>>& levels,
                                double iou_threshold = 0.5, ApMethod method = ApMethod::eleven_point) {
  KittiReport r;
  for (const auto& level : levels) {
    r.rows.push_back({level ? to_string(*level) : "all", evaluate_kitti(gt, det, level, iou_threshold, method)});
  }
  if (!r.rows.empty()) {
    const auto it = std::ranges::find_if(r.rows, [](const KittiReportRow& row) { return row.difficulty == "moderate"; });
    const KittiReportRow& head = it != r.rows.end() ? *it : r.rows.front();
    r.map = head.eval.map;
    r.mar = head.eval.mar;
  }
  return r;
}

inline nlohmann::json report_json(const KittiReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& c : row.eval.classes) {
      classes[kitti_classes().at(static_cast<std::size_t>(c.class_id))] = {
          {"ap", c.ap}, {"ar", c.ar}, {"tp", c.true_positives}, {"fp", c.false_positives}, {"groundtruths", c.groundtruths}};
    }
    rows.push_back({{"difficulty", row.difficulty}, {"classes", classes}, {"map", row.eval.map}, {"mar", row.eval.mar}});
  }
  return {{"rows", rows}, {"map", r.map}, {"mar", r.mar}};
}

inline std::string report_text(const KittiReport& r) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.2f", 100.0 * v);
    return std::string(buf);
  };
  std::string out = "difficulty ";
  for (const auto& n : kitti_classes()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " %10s-AP %10s-AR", n.c_str(), n.c_str());
    out += buf;
  }
  out += "      mAP      mAR\n";
  for (const auto& row : r.rows) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%-10s ", row.difficulty.c_str());
    out += buf;
    for (const auto& c : row.eval.classes) out += "    " + pct(c.ap) + "      " + pct(c.ar);
    out += " " + pct(row.eval.map) + " " + pct(row.eval.mar) + "\n";
  }
  out += "mAP " + pct(r.map) + " %\nmAR " + pct(r.mar) + " %\n";
  return out;
}

}  // namespace wrin
