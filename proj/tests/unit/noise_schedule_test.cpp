#include <gtest/gtest.h>

#include <cmath>

#include "simplexlm/errors.hpp"
#include "simplexlm/noise_schedule.hpp"

namespace simplexlm {
namespace {

// Reference values below were computed once with 40-digit arithmetic from
// r(t) = cos(((t/T + s) / (1 + s)) pi/2)^2, alpha_bar_t = r(t) / r(0).

TEST(CosineSchedule, Endpoints) {
  const NoiseSchedule s = NoiseSchedule::cosine(5000);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_LE(s.alpha_bar(5000), 1e-30);
  EXPECT_EQ(s.steps(), 5000);
  EXPECT_EQ(s.train_steps(), 5000);
}

TEST(CosineSchedule, ClosedFormSpotValues) {
  const NoiseSchedule s = NoiseSchedule::cosine(5000, 1e-4);
  EXPECT_NEAR(s.alpha_bar(1), 0.99999980264739583469, 1e-12);
  EXPECT_NEAR(s.alpha_bar(50), 0.99974839651740578931, 1e-12);
  EXPECT_NEAR(s.alpha_bar(2500), 0.4999214803697808168, 1e-12);
  EXPECT_NEAR(s.alpha_bar(4999), 9.8676306951160186162e-8, 1e-12);
}

TEST(CosineSchedule, InvalidArgumentsThrow) {
  EXPECT_THROW(NoiseSchedule::cosine(0), ConfigError);
  EXPECT_THROW(NoiseSchedule::cosine(10, 0.0), ConfigError);
  EXPECT_THROW(NoiseSchedule::cosine(10, -1.0), ConfigError);
}

TEST(CosineSchedule, IndexOutOfRangeThrows) {
  const NoiseSchedule s = NoiseSchedule::cosine(10);
  EXPECT_THROW(s.alpha_bar(11), ConfigError);
  EXPECT_THROW(s.alpha_bar(-1), ConfigError);
  EXPECT_THROW(s.alpha(0), ConfigError);
  EXPECT_THROW(s.compensation_coefficient(11), ConfigError);
}

class ScheduleProperties : public ::testing::TestWithParam<int> {};

TEST_P(ScheduleProperties, MonotoneAndConsistent) {
  const int T = GetParam();
  const NoiseSchedule s = NoiseSchedule::cosine(T);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_LE(s.alpha_bar(T), 1e-6);
  for (int t = 1; t <= T; ++t) {
    ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1)) << "t=" << t;
    ASSERT_GT(s.alpha(t), 0.0);
    ASSERT_LE(s.alpha(t), 1.0);
    ASSERT_NEAR(s.alpha(t) * s.alpha_bar(t - 1), s.alpha_bar(t), 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(Lengths, ScheduleProperties, ::testing::Values(1, 2, 7, 200, 5000));

TEST(CompensationCoefficient, SpotValues) {
  const NoiseSchedule s = NoiseSchedule::cosine(5000);
  EXPECT_EQ(s.compensation_coefficient(1), 0.0);
  EXPECT_NEAR(s.compensation_coefficient(2), 0.57735019322855895026, 1e-9);
  EXPECT_NEAR(s.compensation_coefficient(50), 0.98019283438274769448, 1e-9);
  EXPECT_NEAR(s.compensation_coefficient(4999), 0.49999995066184104735, 1e-9);
}

TEST(CompensationCoefficient, ApproachesSqrtAlphaNearT) {
  const NoiseSchedule s = NoiseSchedule::cosine(5000);
  for (int t : {4990, 4995, 4999}) {
    EXPECT_NEAR(s.compensation_coefficient(t), std::sqrt(s.alpha(t)), 1e-5) << "t=" << t;
  }
}

TEST(CompensationCoefficient, AboveThresholdForMostTimesteps) {
  const NoiseSchedule s = NoiseSchedule::cosine(5000, 1e-4);
  int above = 0;
  for (int t = 1; t <= 5000; ++t) above += s.compensation_coefficient(t) > 0.98;
  EXPECT_EQ(above, 4901);
}

TEST(Subsample, FullLengthIsIdentity) {
  const NoiseSchedule s = NoiseSchedule::cosine(50);
  const NoiseSchedule d = s.subsample(50);
  ASSERT_EQ(d.steps(), 50);
  for (int k = 0; k <= 50; ++k) {
    EXPECT_EQ(d.alpha_bar(k), s.alpha_bar(k));
    EXPECT_EQ(d.timestep(k), k);
  }
}

TEST(Subsample, SingleStepSpansWholeRange) {
  const NoiseSchedule d = NoiseSchedule::cosine(200).subsample(1);
  ASSERT_EQ(d.steps(), 1);
  EXPECT_EQ(d.alpha_bar(0), 1.0);
  EXPECT_EQ(d.timestep(1), 200);
  EXPECT_LE(d.alpha_bar(1), 1e-6);
  EXPECT_EQ(d.train_steps(), 200);
}

TEST(Subsample, EntriesPointIntoParentTable) {
  const NoiseSchedule s = NoiseSchedule::cosine(5000);
  const NoiseSchedule d = s.subsample(1000);
  for (int k = 0; k <= 1000; ++k) {
    ASSERT_EQ(d.timestep(k), 5 * k);
    ASSERT_EQ(d.alpha_bar(k), s.alpha_bar(5 * k));
  }
}

TEST(Subsample, RoundsToNearestTimestep) {
  const NoiseSchedule s = NoiseSchedule::cosine(10);
  const NoiseSchedule d = s.subsample(4);
  // round(k * 10 / 4) with halves rounded up: 0, 3, 5, 8, 10.
  const int expected[] = {0, 3, 5, 8, 10};
  for (int k = 0; k <= 4; ++k) EXPECT_EQ(d.timestep(k), expected[k]);
  for (int k = 1; k <= 4; ++k) EXPECT_LT(d.alpha_bar(k), d.alpha_bar(k - 1));
}

TEST(Subsample, OutOfRangeThrows) {
  const NoiseSchedule s = NoiseSchedule::cosine(10);
  EXPECT_THROW(s.subsample(0), ConfigError);
  EXPECT_THROW(s.subsample(11), ConfigError);
}

}  // namespace
}  // namespace simplexlm
