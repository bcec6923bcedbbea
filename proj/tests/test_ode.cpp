#include <gtest/gtest.h>

#include <cmath>

#include "nthlab/ode.hpp"

using namespace nthlab;

namespace {

// y' = A y with A = [[0, 1], [-1, 0]]: y(t) = (cos t, -sin t) from (1, 0).
Vec rotation(const Vec& y) { return {y[1], -y[0]}; }

double endpoint_error(double dt, double t_end) {
  Vec last;
  const Vec times{t_end};
  integrate_rk4({1.0, 0.0}, t_end, dt, times, rotation, [&](double, const Vec& y) { last = y; });
  return std::max(std::abs(last[0] - std::cos(t_end)), std::abs(last[1] + std::sin(t_end)));
}

}  // namespace

TEST(UniformTimes, IncludesBothEnds) {
  EXPECT_EQ(uniform_times(1.0, 0.25), (Vec{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(uniform_times(1.0, 0.3).back(), 1.0);
  EXPECT_EQ(uniform_times(1.0, 0.3).size(), 5u);
  EXPECT_EQ(uniform_times(0.0, 0.1), (Vec{0.0}));
  EXPECT_THROW(uniform_times(1.0, 0.0), std::invalid_argument);
}

TEST(Rk4, FourthOrderConvergence) {
  const double e1 = endpoint_error(0.2, 2.0), e2 = endpoint_error(0.1, 2.0), e3 = endpoint_error(0.05, 2.0);
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.2);
  EXPECT_NEAR(std::log2(e2 / e3), 4.0, 0.2);
}

TEST(Rk4, ShortensLastStep) {
  EXPECT_LT(endpoint_error(0.3, 1.0), 1e-3);
  int calls = 0;
  const Vec times{1.0};
  integrate_rk4({1.0}, 1.0, 0.3, times, [&](const Vec& y) { ++calls; return Vec{-y[0]}; },
                [](double t, const Vec&) { EXPECT_EQ(t, 1.0); });
  EXPECT_EQ(calls, 1 + 4 * 4);
}

TEST(Rk4, ZeroHorizonObservesInitialStateOnly) {
  int seen = 0, calls = 0;
  const Vec times{0.0};
  integrate_rk4({3.0}, 0.0, 0.1, times, [&](const Vec& y) { ++calls; return y; },
                [&](double t, const Vec& y) {
                  ++seen;
                  EXPECT_EQ(t, 0.0);
                  EXPECT_EQ(y[0], 3.0);
                });
  EXPECT_EQ(seen, 1);
  EXPECT_EQ(calls, 0);
}

TEST(Rk4, OffGridSnapshotsAreInterpolatedAccurately) {
  const Vec times{0.0, 0.13, 0.5, 0.77, 1.0};
  std::size_t k = 0;
  integrate_rk4({1.0, 0.0}, 1.0, 0.05, times, rotation, [&](double t, const Vec& y) {
    EXPECT_EQ(t, times[k++]);
    EXPECT_NEAR(y[0], std::cos(t), 1e-7);
    EXPECT_NEAR(y[1], -std::sin(t), 1e-7);
  });
  EXPECT_EQ(k, times.size());
}

TEST(Rk4, DivergenceReportsLastGoodTime) {
  const Vec times{0.0, 1.0};
  try {
    integrate_rk4({1.0}, 1.0, 0.1, times, [](const Vec& y) { return Vec{y[0] * y[0] * 1e300}; },
                  [](double, const Vec&) {});
    FAIL() << "expected divergence";
  } catch (const IntegrationDiverged& e) {
    EXPECT_GE(e.last_good_time(), 0.0);
    EXPECT_LT(e.last_good_time(), 1.0);
  }
}

TEST(Rk4, RejectsBadSchedules) {
  const auto noop = [](double, const Vec&) {};
  const auto id = [](const Vec& y) { return y; };
  const Vec unordered{0.5, 0.2}, outside{0.0, 2.0};
  EXPECT_THROW(integrate_rk4({1.0}, 1.0, 0.1, unordered, id, noop), std::invalid_argument);
  EXPECT_THROW(integrate_rk4({1.0}, 1.0, 0.1, outside, id, noop), std::invalid_argument);
  EXPECT_THROW(integrate_rk4({1.0}, 1.0, 0.0, Vec{}, id, noop), std::invalid_argument);
}
