// Builds a wide residual inception network and prints its cost breakdown.
#include <cstdio>

#include "wrin/wrin.hpp"

int main() {
  const auto cfg = wrin::builtin_config("wr-inception");
  const auto report = wrin::analyze_config(cfg);
  std::printf("%s: %llu parameters, %llu MACs per image\n", cfg.name.c_str(),
              static_cast<unsigned long long>(report.total_params), static_cast<unsigned long long>(report.total_macs));

  const auto basic = wrin::UnitSpec::basic(128, 128);
  const auto inception = wrin::UnitSpec::inception(128, {128, 64, 64, 128}, 128);
  std::printf("per-position MACs: basic %llu, inception %llu (ratio %.3f)\n",
              static_cast<unsigned long long>(wrin::unit_cost_per_position(basic).total()),
              static_cast<unsigned long long>(wrin::unit_cost_per_position(inception).total()),
              wrin::compare_unit_cost(inception, basic));

  auto built = wrin::build_network(cfg, 1);
  const auto rf = wrin::receptive_field(built.graph, "conv3/unit2/concat");
  std::printf("conv3/unit2/concat receptive field %zu, paths:", rf.rf);
  for (auto p : rf.paths) std::printf(" %zu", p);
  std::printf("\n");
}
