#include <gtest/gtest.h>

#include <cmath>

#include "simplexlm/errors.hpp"
#include "simplexlm/rng.hpp"

namespace simplexlm {
namespace {

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, StateRoundTrip) {
  Rng a(7);
  for (int i = 0; i < 10; ++i) a.next_u64();
  Rng b;
  b.set_state(a.state());
  EXPECT_EQ(a, b);
  for (int i = 0; i < 10; ++i) ASSERT_EQ(a.uniform(), b.uniform());
}

TEST(Rng, MalformedStateThrows) {
  Rng r;
  EXPECT_THROW(r.set_state("not a state"), DataError);
}

TEST(Rng, UniformIntStaysInRange) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const auto v = r.uniform_int(-2, 4);
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 4);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  // Standard errors: 1/sqrt(n) for the mean, sqrt(2/n) for the variance.
  EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(n));
  EXPECT_LT(std::abs(var - 1.0), 4.0 * std::sqrt(2.0 / n));
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
  EXPECT_NE(derive_seed(1, 0, 1), derive_seed(1, 1, 0));
  EXPECT_EQ(derive_seed(9, 3, 4), derive_seed(9, 3, 4));
}

}  // namespace
}  // namespace simplexlm
