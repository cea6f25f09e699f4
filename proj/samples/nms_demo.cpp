// Generates priors for two feature maps, matches a groundtruth box and runs NMS.
#include <cstdio>

#include "wrin/wrin.hpp"

int main() {
  const auto layout = wrin::make_prior_layout({{8, 8}, {4, 4}}, 0.2, 0.9, {1.0, 2.0, 0.5});
  const auto priors = wrin::generate_priors(layout);
  const wrin::Box car{0.30, 0.40, 0.55, 0.60};
  const auto targets = wrin::build_targets(priors, {car}, {0});
  std::printf("%zu priors, %zu matched to the box\n", priors.size(), targets.positives());

  std::vector<wrin::Detection> dets;
  for (std::size_t p = 0; p < priors.size(); ++p) {
    if (targets.labels[p] != 0) dets.push_back({0, wrin::iou(priors[p], car), priors[p], "0"});
  }
  for (const auto& d : wrin::nms(dets, 0.45)) {
    std::printf("kept score %.3f box (%.3f %.3f %.3f %.3f)\n", d.score, d.box.xmin, d.box.ymin, d.box.xmax, d.box.ymax);
  }
}
