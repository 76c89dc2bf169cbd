#include <gtest/gtest.h>

#include "ducat/error.hpp"
#include "ducat/mlp.hpp"
#include "oracles.hpp"

namespace ducat {
namespace {

using testing::random_tensor;

TEST(Mlp, CreateShapesAndCounts) {
  auto m = MlpModel::create({3, 5, 4, 2}, {7});
  EXPECT_EQ(m.input_dim(), 3u);
  EXPECT_EQ(m.output_dim(), 2u);
  EXPECT_EQ(m.num_classes(), 2u);
  EXPECT_EQ(m.head_mode(), HeadMode::standard);
  EXPECT_EQ(m.layers().size(), 3u);
  EXPECT_EQ(m.parameter_count(), 3u * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2);
  EXPECT_EQ(m.parameters().size(), 6u);
  EXPECT_EQ(m.dummy_permutation(), (std::vector<std::size_t>{0, 1}));
}

TEST(Mlp, CreateRejectsBadWidths) {
  EXPECT_THROW(MlpModel::create({3}, {}), InvalidArgument);
  EXPECT_THROW(MlpModel::create({3, 1}, {}), InvalidArgument);
  EXPECT_THROW(MlpModel::create({3, 0, 2}, {}), InvalidArgument);
}

TEST(Mlp, SameSeedSameWeights) {
  auto a = MlpModel::create({2, 8, 3}, {5});
  auto b = MlpModel::create({2, 8, 3}, {5});
  auto c = MlpModel::create({2, 8, 3}, {6});
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_FALSE(bitwise_equal(a, c));
}

TEST(Mlp, InitialisationWithinFanInBound) {
  auto m = MlpModel::create({4, 16, 3}, {1});
  for (const auto& l : m.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    for (double w : l.weight.data()) EXPECT_LE(std::abs(w), bound);
    for (double b : l.bias.data()) EXPECT_LE(std::abs(b), bound);
  }
}

TEST(Mlp, CopiesAreDeep) {
  auto a = MlpModel::create({2, 4, 2}, {3});
  MlpModel b = a;
  b.parameters()[0].mutable_data()[0] += 1.0;
  EXPECT_FALSE(bitwise_equal(a, b));
  MlpModel c;
  c = a;
  EXPECT_TRUE(bitwise_equal(a, c));
}

TEST(Mlp, UntrackedForwardLeavesParametersAlone) {
  auto m = MlpModel::create({2, 4, 2}, {3});
  auto x = Tensor::from({1, 2}, {0.3, 0.7}, true);
  backward(sum(m.forward(x, false)));
  EXPECT_TRUE(x.has_grad());
  for (const auto& p : m.parameters()) EXPECT_FALSE(p.has_grad());
}

TEST(Mlp, ForwardRejectsWrongWidth) {
  auto m = MlpModel::create({2, 4, 2}, {3});
  EXPECT_THROW(m.forward(Tensor::zeros({1, 3})), ShapeError);
}

TEST(Mlp, HeadDoublingPreservesOriginalLogits) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.below(4), h = 1 + rng.below(6), c = 2 + rng.below(4);
    auto m = MlpModel::create({d, h, c}, {rng.next_u64()});
    m.set_dummy_permutation(rng.permutation(c));
    const auto init = trial % 2 ? DummyInit::fresh : DummyInit::copy_with_noise;
    auto doubled = double_last_layer(m, {rng.next_u64(), init});
    ASSERT_EQ(doubled.head_mode(), HeadMode::ducat);
    ASSERT_EQ(doubled.output_dim(), 2 * c);
    EXPECT_EQ(doubled.dummy_permutation(), m.dummy_permutation());
    auto x = random_tensor(rng, {5, d}, 0.0, 1.0);
    const auto before = m.forward(x, false);
    const auto after = doubled.forward(x, false);
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t k = 0; k < c; ++k) EXPECT_EQ(before.at(r, k), after.at(r, k));
    }
  }
}

TEST(Mlp, CopyWithNoiseTracksPairedRow) {
  auto m = MlpModel::create({3, 6, 3}, {2});
  m.set_dummy_permutation({2, 0, 1});
  auto d = double_last_layer(m, {9, DummyInit::copy_with_noise, 1e-3});
  const auto& w = d.layers().back().weight;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t slot = d.dummy_slot(k);
    for (std::size_t p = 0; p < 6; ++p) EXPECT_NEAR(w.at(slot, p), w.at(k, p), 1e-2);
  }
}

TEST(Mlp, DoublingTwiceIsRejected) {
  auto m = double_last_layer(MlpModel::create({2, 3, 2}, {}), {});
  EXPECT_THROW(double_last_layer(m, {}), InvalidArgument);
}

TEST(Mlp, PermutationMustBeABijection) {
  auto m = MlpModel::create({2, 3, 3}, {});
  EXPECT_THROW(m.set_dummy_permutation({0, 0, 1}), InvalidArgument);
  EXPECT_THROW(m.set_dummy_permutation({0, 1}), InvalidArgument);
  m.set_dummy_permutation({1, 2, 0});
  EXPECT_EQ(m.dummy_slot(0), 4u);
}

}  // namespace
}  // namespace ducat
