#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wrin/wrin.hpp"

using wrin::Network;
using wrin::Shape3;
using wrin::UnitSpec;

TEST(CountParameters, SingleConvWithBias) {
  Network<float> net(Shape3{128, 16, 16});
  net.add_conv("c", 0, 128, 3, 1, 1, true);
  EXPECT_EQ(wrin::count_parameters(net), 147584u);
}

TEST(CountParameters, RunningStatisticsExcluded) {
  Network<float> net(Shape3{16, 4, 4});
  net.add_batch_norm("bn", 0);
  EXPECT_EQ(wrin::count_parameters(net), 32u);
}

TEST(CountParameters, AgreesWithHandCountForBuiltins) {
  for (const auto& name : wrin::builtin_config_names()) {
    const auto cfg = wrin::builtin_config(name);
    EXPECT_EQ(wrin::analyze_config(cfg).total_params, oracle::network_params(cfg)) << name;
  }
}

TEST(CountParameters, InceptionSwapConvDelta) {
  const auto a = wrin::analyze_config(wrin::builtin_config("wr-inception"));
  const auto b = wrin::analyze_config(wrin::builtin_config("wrn-16-4"));
  auto conv_weights = [](const wrin::CostReport& r, const std::string& prefix) {
    std::uint64_t n = 0;
    for (const auto& c : r.per_node) {
      if (c.kind == wrin::LayerKind::conv && c.name.starts_with(prefix)) n += c.params;
    }
    return n;
  };
  EXPECT_EQ(conv_weights(a, "conv3/unit2/"), 278528u);
  EXPECT_EQ(conv_weights(b, "conv3/unit2/"), 294912u);
  const auto delta = static_cast<std::int64_t>(a.total_params) - static_cast<std::int64_t>(b.total_params);
  // The conv delta plus the BN terms the inception unit adds (four BNs instead of two).
  EXPECT_EQ(delta, -16384 + 2 * (128 + 128 + 128 + 64) - 2 * (128 + 128));
}

TEST(CountMacs, ConvOnSixteenBySixteen) {
  Network<float> net(Shape3{128, 16, 16});
  net.add_conv("c", 0, 128, 3, 1, 1);
  EXPECT_EQ(wrin::count_macs(net, Shape3{128, 16, 16}), 37748736u);
}

TEST(CountMacs, FullyConnectedAndElementwise) {
  Network<float> net(Shape3{4, 2, 2});
  const auto bn = net.add_batch_norm("bn", 0);
  const auto r = net.add_relu("r", bn);
  const auto p = net.add_global_avg_pool("p", r);
  net.add_fully_connected("fc", p, 3);
  const auto report = wrin::analyze(net);
  EXPECT_EQ(report.total_macs, 12u);
  EXPECT_GT(report.total_elementwise_ops, 0u);
  for (const auto& c : report.per_node) {
    if (c.kind != wrin::LayerKind::fully_connected) EXPECT_EQ(c.macs, 0u) << c.name;
  }
}

TEST(CountMacs, BuiltinTotals) {
  EXPECT_EQ(wrin::analyze_config(wrin::builtin_config("wrn-16-4")).total_macs, 392612352u);
  EXPECT_EQ(wrin::analyze_config(wrin::builtin_config("wr-inception")).total_macs, 388418048u);
}

TEST(CountMacs, TotalsAreSumsOfNodes) {
  for (const auto& name : wrin::builtin_config_names()) {
    const auto r = wrin::analyze_config(wrin::builtin_config(name));
    std::uint64_t p = 0, m = 0;
    for (const auto& c : r.per_node) {
      p += c.params;
      m += c.macs;
    }
    EXPECT_EQ(p, r.total_params);
    EXPECT_EQ(m, r.total_macs);
  }
}

TEST(CountMacs, IndependentOfConstructionOrder) {
  // Two branches off the input, added in either order.
  auto build = [](bool swap) {
    Network<float> net(Shape3{8, 8, 8});
    std::size_t a = 0, b = 0;
    if (swap) {
      b = net.add_conv("b", 0, 8, 1, 1, 0);
      a = net.add_conv("a", 0, 8, 3, 1, 1);
    } else {
      a = net.add_conv("a", 0, 8, 3, 1, 1);
      b = net.add_conv("b", 0, 8, 1, 1, 0);
    }
    net.add_add("sum", a, b);
    return net;
  };
  EXPECT_EQ(wrin::count_macs(build(false), Shape3{8, 8, 8}), wrin::count_macs(build(true), Shape3{8, 8, 8}));
  EXPECT_EQ(wrin::count_macs(build(false), Shape3{8, 8, 8}), 8u * 9 * 8 * 64 + 8u * 8 * 64);
}

TEST(UnitCost, PerPositionFigures) {
  EXPECT_EQ(wrin::unit_cost_per_position(UnitSpec::basic(128, 128)).total(), 294912u);
  const auto inc = wrin::unit_cost_per_position(UnitSpec::inception(128, {128, 64, 64, 128}, 128));
  EXPECT_EQ(inc.branch, 237568u);
  EXPECT_EQ(inc.projection, 40960u);
  EXPECT_EQ(inc.total(), 278528u);
}

TEST(UnitCost, Ratios) {
  const auto inc = UnitSpec::inception(128, {128, 64, 64, 128}, 128);
  const auto basic = UnitSpec::basic(128, 128);
  EXPECT_NEAR(wrin::compare_unit_cost(inc, basic), 278528.0 / 294912.0, 1e-15);
  EXPECT_NEAR(wrin::compare_unit_cost(inc, basic), 0.944, 5e-4);
  EXPECT_EQ(wrin::compare_unit_cost(basic, basic), 1.0);
  EXPECT_EQ(wrin::compare_unit_cost(UnitSpec::basic(256, 256), basic), 4.0);
}

TEST(UnitCost, ReportComparison) {
  const auto r = wrin::analyze_config(wrin::builtin_config("wr-inception"));
  ASSERT_EQ(r.comparisons.size(), 1u);
  EXPECT_EQ(r.comparisons[0].unit, "conv3/unit2");
  EXPECT_EQ(r.comparisons[0].unit_macs, 278528u);
  EXPECT_EQ(r.comparisons[0].reference_macs, 294912u);
}

TEST(ReceptiveFieldQuery, Examples) {
  Network<float> net(Shape3{1, 16, 16});
  const auto a = net.add_conv("a", 0, 1, 3, 1, 1);
  net.add_conv("b", a, 1, 3, 1, 1);
  net.add_conv("one", 0, 1, 1, 1, 0);
  EXPECT_EQ(wrin::receptive_field(net, "b").rf, 5u);
  EXPECT_EQ(wrin::receptive_field(net, "one").rf, 1u);
  EXPECT_THROW(wrin::receptive_field(net, "missing"), std::out_of_range);
}

TEST(ReceptiveFieldQuery, JoinReportsBranches) {
  const auto built = wrin::build_network(wrin::builtin_config("wr-inception"), 1);
  const auto rf = wrin::receptive_field(built.graph, "conv3/unit2/concat");
  std::set<std::size_t> uni;
  for (const char* n : {"conv3/unit2/conv_shared", "conv3/unit2/conv_b", "conv3/unit2/conv_c2"}) {
    const auto p = wrin::receptive_field(built.graph, n).paths;
    uni.insert(p.begin(), p.end());
  }
  EXPECT_EQ(rf.paths, uni);
  EXPECT_EQ(rf.rf, *rf.paths.rbegin());
  EXPECT_EQ(rf.stride_product, 2u);
}

TEST(Report, JsonAndTextAgree) {
  const auto r = wrin::analyze_config(wrin::builtin_config("wr-inception"));
  const auto j = wrin::report_json(r);
  EXPECT_EQ(j["totals"]["params"].get<std::uint64_t>(), 2732890u);
  EXPECT_EQ(j["per_node"].size(), r.per_node.size());
  const auto text = wrin::report_text(r);
  EXPECT_NE(text.find("total params: 2732890"), std::string::npos);
  EXPECT_NE(text.find("total MACs: 388418048"), std::string::npos);
}
