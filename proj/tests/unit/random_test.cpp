#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ducat/random.hpp"

namespace ducat {
namespace {

TEST(Random, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    differs |= va != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Random, DerivedSeedsSeparateStreams) {
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2, 0), derive_seed(1, 2, 1));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(7, 8, 9), derive_seed(7, 8, 9));
}

TEST(Random, UniformStaysInRange) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = r.uniform(-2.0, 5.0);
    ASSERT_GE(v, -2.0);
    ASSERT_LT(v, 5.0);
  }
}

TEST(Random, BelowIsUniform) {
  // χ² with 6 degrees of freedom; 22.46 is the 0.999 quantile.
  Rng r(9);
  constexpr int kBins = 7, kDraws = 70000;
  std::vector<int> counts(kBins, 0);
  for (int i = 0; i < kDraws; ++i) ++counts[r.below(kBins)];
  const double expected = static_cast<double>(kDraws) / kBins;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 22.46);
}

TEST(Random, NormalMoments) {
  Rng r(21);
  constexpr int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  const double m = s / n;
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(s2 / n - m * m, 1.0, 0.02);
}

TEST(Random, PermutationIsABijection) {
  Rng r(5);
  for (std::size_t n : {0u, 1u, 2u, 17u, 100u}) {
    auto p = r.permutation(n);
    std::sort(p.begin(), p.end());
    std::vector<std::size_t> id(n);
    std::iota(id.begin(), id.end(), 0);
    EXPECT_EQ(p, id);
  }
}

}  // namespace
}  // namespace ducat
