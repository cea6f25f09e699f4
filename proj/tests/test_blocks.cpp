#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "wrin/wrin.hpp"

using wrin::Network;
using wrin::Shape3;
using wrin::Tensor;
using wrin::UnitSpec;

namespace {

std::size_t conv_weight_count(const Network<float>& net, const wrin::UnitHandles& h) {
  std::size_t total = 0;
  for (std::size_t c : h.convs) total += net.params()[net.node(c).params[0]].size();
  return total;
}

Tensor<double> random_input(Shape3 s, std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d;
  Tensor<double> t(s.batch(n));
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

}  // namespace

TEST(BasicUnit, Width128ConvWeights) {
  auto [net, h] = wrin::standalone_unit(UnitSpec::basic(128, 128));
  EXPECT_EQ(conv_weight_count(net, h), 294912u);
  EXPECT_EQ(h.shortcut, 0u);
}

TEST(BasicUnit, ProjectionShortcutOnWidthChange) {
  auto [net, h] = wrin::standalone_unit(UnitSpec::basic(64, 128, 2));
  ASSERT_NE(h.shortcut, 0u);
  const auto& sc = net.node(h.shortcut);
  EXPECT_EQ(sc.conv.kernel, 1u);
  EXPECT_EQ(sc.conv.stride, 2u);
  EXPECT_EQ(net.params()[sc.params[0]].size(), 8192u);
  EXPECT_EQ(net.node(h.output).out_shape, (Shape3{128, 4, 4}));
}

TEST(BottleneckUnit, ConvWeights) {
  auto [net, h] = wrin::standalone_unit(UnitSpec::bottleneck(256, 256));
  EXPECT_EQ(conv_weight_count(net, h), 69632u);
}

TEST(InceptionUnit, StructureAndWidths) {
  const auto spec = UnitSpec::inception(128, {128, 64, 64, 128}, 128);
  EXPECT_EQ(spec.concat_width(), 320u);
  auto [net, h] = wrin::standalone_unit(spec);
  EXPECT_EQ(net.node(h.branch_end).out_shape.c, 320u);
  EXPECT_EQ(net.param("unit/conv_proj/weight").dims, (std::vector<std::size_t>{128, 320, 1, 1}));
  EXPECT_EQ(net.node(h.output).out_shape, (Shape3{128, 8, 8}));
  EXPECT_EQ(h.shortcut, 0u);
  for (std::size_t c : h.convs) {
    const auto expected = c == h.convs[4] ? wrin::LayerKind::concat : wrin::LayerKind::relu;
    EXPECT_EQ(net.node(net.node(c).inputs[0]).kind, expected) << net.node(c).name;
  }
}

TEST(InceptionUnit, ParamCountMatchesHandCount) {
  for (const auto& spec : {UnitSpec::inception(128, {128, 64, 64, 128}, 128),
                           UnitSpec::inception(64, {32, 16, 8, 24}, 96, 2), UnitSpec::basic(16, 64),
                           UnitSpec::bottleneck(64, 128, 2)}) {
    auto [net, h] = wrin::standalone_unit(spec);
    std::size_t learnable = 0;
    for (const auto& p : net.params()) learnable += p.learnable ? p.size() : 0;
    EXPECT_EQ(learnable, oracle::unit_params(spec)) << to_string(spec.variant);
  }
}

TEST(InceptionUnit, ConcatOrderIsSharedThenThreeByThreeThenDouble) {
  const auto spec = UnitSpec::inception(6, {4, 3, 2, 5}, 6);
  auto [net, h] = wrin::standalone_unit<double>(spec);
  net.initialize(3);
  const auto t = net.run(random_input(net.input_shape(), 2, 1), wrin::Mode::infer);
  const auto& cat = t.outputs[h.branch_end];
  const std::size_t a = *net.find_node("unit/conv_shared"), b = *net.find_node("unit/conv_b"),
                    c = *net.find_node("unit/conv_c2");
  EXPECT_EQ(wrin::slice_channels(cat, 0, 4), t.outputs[a]);
  EXPECT_EQ(wrin::slice_channels(cat, 4, 3), t.outputs[b]);
  EXPECT_EQ(wrin::slice_channels(cat, 7, 5), t.outputs[c]);
}

TEST(Units, ZeroBranchReducesToShortcut) {
  for (const auto& spec : {UnitSpec::basic(6, 6), UnitSpec::basic(4, 6, 2), UnitSpec::bottleneck(8, 8),
                           UnitSpec::inception(6, {4, 3, 2, 5}, 6), UnitSpec::inception(4, {4, 3, 2, 5}, 8, 2)}) {
    auto [net, h] = wrin::standalone_unit<double>(spec);
    net.initialize(5);
    auto& last = net.params()[net.node(h.convs[h.shortcut == 0 ? h.convs.size() - 1 : h.convs.size() - 2]).params[0]];
    std::ranges::fill(last.value, 0.0);
    for (auto mode : {wrin::Mode::infer, wrin::Mode::train}) {
      const auto x = random_input(net.input_shape(), 3, 2);
      const auto t = net.run(x, mode);
      EXPECT_EQ(t.outputs[h.output], t.outputs[h.shortcut]) << to_string(spec.variant);
      if (h.shortcut == 0) EXPECT_EQ(t.outputs[h.output], x);
    }
  }
}

TEST(Units, InvalidSpecsRejected) {
  Network<float> net(Shape3{4, 8, 8});
  EXPECT_THROW(wrin::make_unit(net, 0, UnitSpec{wrin::UnitVariant::inception, 4, {4, 4}, 1, 4}, "u"),
               std::invalid_argument);
  EXPECT_THROW(wrin::make_unit(net, 0, UnitSpec::basic(4, 4, 3), "u"), std::invalid_argument);
  EXPECT_THROW(wrin::make_unit(net, 0, UnitSpec::basic(5, 4), "u"), wrin::ShapeError);
  EXPECT_THROW(wrin::make_unit(net, 0, UnitSpec::inception(4, {4, 0, 4, 4}, 4), "u"), std::invalid_argument);
}

TEST(ReceptiveField, BranchPaths) {
  EXPECT_EQ(wrin::effective_receptive_paths(UnitSpec::inception(128, {128, 64, 64, 128}, 128)),
            (std::set<std::size_t>{1, 3, 5}));
  EXPECT_EQ(wrin::effective_receptive_paths(UnitSpec::inception(64, {32, 16, 16, 32}, 64, 2)),
            (std::set<std::size_t>{1, 3, 5}));
  EXPECT_EQ(wrin::effective_receptive_paths(UnitSpec::basic(64, 64)), (std::set<std::size_t>{5}));
}

TEST(ReceptiveField, StackedKernels) {
  Network<double> net(Shape3{1, 32, 32});
  const auto a = net.add_conv("a", 0, 2, 3, 2, 1);
  const auto b = net.add_conv("b", a, 2, 3, 1, 1);
  const auto c = net.add_conv("c", b, 2, 1, 1, 0);
  const auto rf = wrin::receptive_fields(net);
  EXPECT_EQ(rf[a].rf, 3u);
  EXPECT_EQ(rf[b].rf, 7u);
  EXPECT_EQ(rf[c].rf, 7u);
  EXPECT_EQ(rf[b].stride_product, 2u);
  const auto measured = oracle::pixel_influence(net);
  EXPECT_EQ(measured[a].extent, 3u);
  EXPECT_EQ(measured[b].extent, 7u);
  EXPECT_EQ(measured[c].extent, 7u);
}

TEST(ReceptiveField, MatchesPixelInfluenceOnMiniNetwork) {
  const auto cfg = wrin::builtin_config("mini", 4, Shape3{3, 48, 48});
  const auto built = wrin::build_network<double>(cfg, 1);
  const auto rf = wrin::receptive_fields(built.graph);
  const auto measured = oracle::pixel_influence(built.graph);
  for (std::size_t i = 1; i < rf.size(); ++i) {
    const auto& m = measured[i];
    const auto kind = built.graph.node(i).kind;
    SCOPED_TRACE(built.graph.node(i).name);
    if (kind == wrin::LayerKind::global_avg_pool || kind == wrin::LayerKind::fully_connected) {
      EXPECT_EQ(m.extent, 48u);
      EXPECT_GE(rf[i].rf, 48u);
    } else {
      EXPECT_FALSE(m.clipped);
      EXPECT_EQ(rf[i].rf, m.extent);
    }
  }
}
