#include <gtest/gtest.h>

#include <random>

#include "wrin/tensor.hpp"

using wrin::Shape;
using wrin::Tensor;

namespace {

Tensor<float> random_tensor(Shape s, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1, 1);
  Tensor<float> t(s);
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

}  // namespace

TEST(Tensor, LayoutIsRowMajorNCHW) {
  Tensor<float> t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  t.at(1, 2, 3, 4) = 7.0f;
  EXPECT_EQ(t[((1 * 3 + 2) * 4 + 3) * 5 + 4], 7.0f);
  EXPECT_EQ(t.sample(1) - t.data(), 60);
}

TEST(Tensor, AllFiniteDetectsNanAndInf) {
  Tensor<double> t(Shape{1, 1, 2, 2});
  EXPECT_TRUE(t.all_finite());
  t[3] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
  t[3] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(ConcatChannels, PaperWidths) {
  const Tensor<float> a(Shape{1, 128, 8, 8}), b(Shape{1, 64, 8, 8}), c(Shape{1, 128, 8, 8});
  EXPECT_EQ(wrin::concat_channels<float>({a, b, c}).shape(), (Shape{1, 320, 8, 8}));
}

TEST(ConcatChannels, SingleInputIsIdentity) {
  const auto a = random_tensor({2, 3, 4, 4}, 1);
  EXPECT_EQ(wrin::concat_channels<float>({a}), a);
}

TEST(ConcatChannels, CopiesInInputOrder) {
  const auto a = Tensor<float>::filled({2, 3, 4, 4}, 1.0f);
  const auto b = Tensor<float>::filled({2, 5, 4, 4}, 2.0f);
  const auto y = wrin::concat_channels<float>({a, b});
  ASSERT_EQ(y.shape(), (Shape{2, 8, 4, 4}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w) EXPECT_EQ(y.at(n, c, h, w), c < 3 ? 1.0f : 2.0f);
}

TEST(ConcatChannels, MismatchNamesOffendingIndex) {
  const Tensor<float> a(Shape{1, 2, 4, 4}), b(Shape{1, 2, 4, 4}), c(Shape{1, 2, 3, 4});
  try {
    wrin::concat_channels<float>({a, b, c});
    FAIL() << "expected ShapeError";
  } catch (const wrin::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(wrin::concat_channels<float>(std::vector<Tensor<float>>{}), wrin::ShapeError);
  EXPECT_THROW(wrin::concat_channels<float>({Tensor<float>(Shape{1, 2, 4, 4}), Tensor<float>(Shape{2, 2, 4, 4})}),
               wrin::ShapeError);
}

TEST(ConcatChannels, SlicingRecoversInputs) {
  for (unsigned seed = 0; seed < 10; ++seed) {
    std::mt19937 rng(seed);
    std::vector<Tensor<float>> parts;
    for (int i = 0; i < 4; ++i) parts.push_back(random_tensor({2, 1 + rng() % 5, 3, 2}, seed * 10 + i));
    const auto y = wrin::concat_channels<float>(parts);
    std::size_t offset = 0;
    for (const auto& p : parts) {
      EXPECT_EQ(wrin::slice_channels(y, offset, p.shape().c), p);
      offset += p.shape().c;
    }
    EXPECT_EQ(offset, y.shape().c);
  }
}

TEST(AddElementwise, IdentityAndOnes) {
  const auto a = random_tensor({2, 3, 4, 4}, 3);
  EXPECT_EQ(wrin::add_elementwise(a, Tensor<float>(a.shape())), a);
  const auto ones = Tensor<float>::filled({1, 2, 2, 2}, 1.0f);
  const auto twos = wrin::add_elementwise(ones, ones);
  for (float v : twos.vec()) EXPECT_EQ(v, 2.0f);
}

TEST(AddElementwise, CommutativeAndMatchesScalarLoop) {
  for (unsigned seed = 0; seed < 10; ++seed) {
    const auto a = random_tensor({2, 3, 5, 5}, seed);
    const auto b = random_tensor({2, 3, 5, 5}, seed + 100);
    const auto ab = wrin::add_elementwise(a, b);
    EXPECT_EQ(ab, wrin::add_elementwise(b, a));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(ab[i], a[i] + b[i]);
  }
}

TEST(AddElementwise, ShapeMismatchRejected) {
  EXPECT_THROW(wrin::add_elementwise(Tensor<float>(Shape{1, 2, 2, 2}), Tensor<float>(Shape{1, 2, 2, 3})),
               wrin::ShapeError);
}
