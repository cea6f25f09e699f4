#include <gtest/gtest.h>

#include "wrin/wrin.hpp"

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_EQ(wrin::relative_error(0.0, 0.0, 1e-6), 0.0);
  EXPECT_NEAR(wrin::relative_error(1.0, 1.1, 1e-6), 0.1 / 1.1, 1e-12);
  EXPECT_NEAR(wrin::relative_error(1e-9, 0.0, 1e-6), 1e-3, 1e-12);
}

TEST(Gradcheck, TwentySeedsPass) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    wrin::GradcheckOptions opt;
    opt.seed = seed;
    const auto r = wrin::run_gradcheck(opt);
    EXPECT_TRUE(r.passed()) << "seed " << seed << "\n" << wrin::to_text(r, opt);
    EXPECT_LT(r.max_rel_error(), 1e-4);
  }
}

TEST(Gradcheck, EverySuiteCovered) {
  const auto r = wrin::run_gradcheck({});
  std::set<std::string> suites, names;
  for (const auto& i : r.items) {
    suites.insert(i.suite);
    names.insert(i.name);
    EXPECT_GT(i.checked, 0u) << i.name;
  }
  EXPECT_EQ(suites, (std::set<std::string>{"layer", "unit", "network"}));
  for (const char* n : {"conv3x3", "batch_norm", "concat", "softmax_cross_entropy", "basic", "bottleneck", "inception"}) {
    EXPECT_TRUE(names.contains(n)) << n;
  }
}

TEST(Gradcheck, SameSeedSameErrors) {
  wrin::GradcheckOptions opt;
  opt.seed = 9;
  const auto a = wrin::run_gradcheck(opt), b = wrin::run_gradcheck(opt);
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    EXPECT_EQ(a.items[i].max_rel_error, b.items[i].max_rel_error);
    EXPECT_EQ(a.items[i].worst, b.items[i].worst);
  }
}

TEST(Gradcheck, InjectedFaultIsCaught) {
  wrin::GradcheckOptions opt;
  opt.inject_fault = true;
  const auto r = wrin::run_gradcheck(opt);
  EXPECT_FALSE(r.passed());
  for (const auto& i : r.items) EXPECT_FALSE(i.passed) << i.name;
  const auto text = wrin::to_text(r, opt);
  EXPECT_NE(text.find("overall FAIL"), std::string::npos);
  EXPECT_FALSE(wrin::to_json(r, opt)["passed"].get<bool>());
}

TEST(Gradcheck, ReportFormats) {
  wrin::GradcheckOptions opt;
  const auto r = wrin::run_gradcheck(opt);
  const auto text = wrin::to_text(r, opt);
  EXPECT_NE(text.find("overall PASS"), std::string::npos);
  const auto j = wrin::to_json(r, opt);
  EXPECT_EQ(j["items"].size(), r.items.size());
  EXPECT_TRUE(j["passed"].get<bool>());
}
