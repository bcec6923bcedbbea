#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nthlab/nth.hpp"

using namespace nthlab;

namespace {

NetworkParams<double> random_net(std::size_t d, std::size_t m, std::size_t H, Activation act, std::uint64_t seed) {
  return init_params(NetworkConfig{d, m, H, std::move(act), 1.0, 1.0, seed});
}

DataSet data_of(std::size_t n, std::size_t d, std::uint64_t seed) {
  return synthetic_dataset(n, d, seed, LabelKind::gaussian, DataRequirements{});
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

}  // namespace

TEST(HierarchyState, InitialConditions) {
  const auto p = random_net(4, 16, 2, Activation::tanh(), 1);
  const auto data = data_of(3, 4, 2);
  const auto s = init_state(p, data, 3);
  EXPECT_EQ(s.f, outputs(p, data));
  EXPECT_LT(relative_error_inf(s.kernel(2).values, ntk_gram(p, data).values), 1e-12);
  EXPECT_EQ(s.flat_size(), 3u + 9u + 27u);
  const auto s2 = init_state(p, data, 2);
  ASSERT_EQ(s2.kernels.size(), 1u);
  EXPECT_EQ(s2.flatten().size(), 3u + 9u);
  EXPECT_THROW(init_state(p, data, 1), std::invalid_argument);
}

TEST(TruncatedRhs, FixedPointAtLabels) {
  const auto p = random_net(4, 8, 2, Activation::tanh(), 3);
  auto data = data_of(3, 4, 4);
  auto s = init_state(p, data, 4);
  data.labels = s.f;
  for (double v : truncated_rhs(s, data).flatten()) EXPECT_EQ(v, 0.0);
}

TEST(TruncatedRhs, TopLevelIsZero) {
  const auto p = random_net(4, 8, 2, Activation::tanh(), 3);
  const auto data = data_of(3, 4, 4);
  const auto d = truncated_rhs(init_state(p, data, 3), data);
  for (double v : d.kernel(3).values) EXPECT_EQ(v, 0.0);
  const auto s = init_state(p, data, 3);
  for (std::size_t a = 0; a < 3; ++a) {
    double expect = 0.0;
    for (std::size_t b = 0; b < 3; ++b) expect -= s.kernel(2).at({a, b}) * (s.f[b] - data.labels[b]) / 3.0;
    EXPECT_NEAR(d.f[a], expect, 1e-15);
  }
}

TEST(Truncated, ScalarFrozenKernelClosedForm) {
  const auto p = random_net(3, 16, 2, Activation::tanh(), 5);
  const auto data = data_of(1, 3, 6);
  const auto s = init_state(p, data, 2);
  const Vec times = uniform_times(2.0, 0.5);
  const auto traj = integrate_truncated(s, data, 2.0, 1e-2, times);
  const double k = s.kernel(2).at({0, 0}), y = data.labels[0];
  for (const auto& snap : traj)
    EXPECT_NEAR(snap.f[0], y + (s.f[0] - y) * std::exp(-k * snap.t), 1e-8);
}

TEST(Truncated, FrozenKernelMatchesMatrixExponential) {
  const auto p = random_net(5, 32, 2, Activation::tanh(), 7);
  const auto data = data_of(4, 5, 8);
  const auto s = init_state(p, data, 2);
  const auto traj = integrate_truncated(s, data, 3.0, 1e-2, uniform_times(3.0, 0.25));
  for (const auto& snap : traj) {
    const Vec exact = frozen_kernel_solution(s.kernel(2), s.f, data.labels, snap.t);
    EXPECT_LT(relative_error_inf(snap.f, exact), 1e-8) << "t=" << snap.t;
  }
}

TEST(Truncated, TopKernelFrozenAndNtkSymmetric) {
  const auto p = random_net(4, 16, 2, Activation::tanh(), 9);
  const auto data = data_of(3, 4, 10);
  const auto s = init_state(p, data, 4);
  const auto traj = integrate_truncated(s, data, 1.0, 0.03, Vec{0.0, 0.1, 0.37, 1.0});
  ASSERT_EQ(traj.size(), 4u);
  for (const auto& snap : traj) {
    EXPECT_EQ(snap.kernel(4).values, s.kernel(4).values);
    const auto& k2 = snap.kernel(2);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(k2.at({a, b}), k2.at({b, a}));
  }
  EXPECT_NE(traj.back().kernel(3).values, s.kernel(3).values);
}

TEST(Truncated, FourthOrderSelfConvergence) {
  const auto p = random_net(4, 16, 2, Activation::tanh(), 11);
  const auto data = data_of(3, 4, 12);
  const auto s = init_state(p, data, 3);
  const Vec times{4.0};
  const auto f = [&](double dt) { return integrate_truncated(s, data, 4.0, dt, times).back().flatten(); };
  const Vec a = f(0.4), b = f(0.2), c = f(0.1);
  const double ratio = max_abs_diff(a, b) / max_abs_diff(b, c);
  EXPECT_NEAR(std::log2(ratio), 4.0, 0.3);
}

TEST(Truncated, ThirdOrderTracksExactFlowBetter) {
  const auto p = random_net(4, 128, 2, Activation::tanh(), 13);
  const auto data = data_of(3, 4, 14);
  const Vec times = uniform_times(2.0, 0.25);
  FlowConfig cfg;
  cfg.t_end = 2.0;
  cfg.dt = 1e-2;
  cfg.snapshot_times = times;
  cfg.record_norms = false;
  cfg.record_lambda_min = false;
  const auto exact = integrate_flow(p, data, cfg);
  const auto t2 = integrate_truncated(init_state(p, data, 2), data, 2.0, 1e-2, times);
  const auto t3 = integrate_truncated(init_state(p, data, 3), data, 2.0, 1e-2, times);
  for (std::size_t k = 1; k < times.size(); ++k) {
    Vec d2(3), d3(3);
    for (std::size_t i = 0; i < 3; ++i) {
      d2[i] = t2[k].f[i] - exact.snapshots[k].outputs[i];
      d3[i] = t3[k].f[i] - exact.snapshots[k].outputs[i];
    }
    EXPECT_LT(norm2(d3), norm2(d2)) << "t=" << times[k];
  }
}

TEST(Prediction, TrainingPointReproducesItsTrajectory) {
  const auto p = random_net(4, 32, 2, Activation::tanh(), 15);
  const auto data = data_of(3, 4, 16);
  for (int order : {2, 3, 4}) {
    const auto traj = predict_new_point(p, data, data.inputs[1], order, 1.5, 1e-2, uniform_times(1.5, 0.1));
    ASSERT_EQ(traj.point.size(), traj.train.size());
    for (std::size_t k = 0; k < traj.point.size(); ++k)
      EXPECT_NEAR(traj.point[k].f_x, traj.train[k].f[1], 1e-10);
  }
}

TEST(Prediction, ZeroHorizonIsNetworkOutput) {
  const auto p = random_net(4, 16, 2, Activation::tanh(), 17);
  const auto data = data_of(3, 4, 18);
  const Vec x{0.6, 0.0, 0.0, 0.8};
  const auto traj = predict_new_point(p, data, x, 3, 0.0, 1e-2, Vec{0.0});
  ASSERT_EQ(traj.point.size(), 1u);
  EXPECT_EQ(traj.point[0].f_x, forward(p, x).output);
  EXPECT_EQ(traj.point[0].rows.size(), 2u);
  EXPECT_EQ(traj.point[0].rows[1].size(), 9u);
}

TEST(Prediction, RejectsInputOutsideBracket) {
  const auto p = random_net(2, 8, 1, Activation::tanh(), 1);
  const auto data = data_of(2, 2, 2);
  EXPECT_THROW(predict_new_point(p, data, Vec{3.0, 0.0}, 2, 1.0, 0.1, Vec{1.0}), std::invalid_argument);
}

TEST(Prediction, ErrorShrinksWithWidth) {
  const auto data = data_of(3, 4, 20);
  const Vec x{0.5, -0.5, 0.5, 0.5};
  auto gap = [&](std::size_t m) {
    double med = 0.0;
    Vec all;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto p = random_net(4, m, 2, Activation::tanh(), 200 + s);
      const auto pred = predict_new_point(p, data, x, 2, 1.0, 1e-2, Vec{1.0});
      const Vec theta = flow_endpoint(p, data, 1.0, 1e-2);
      const double exact = forward(NetworkParams<double>(p.shape(), p.activation(), theta), x).output;
      all.push_back(std::abs(pred.point.back().f_x - exact));
    }
    std::sort(all.begin(), all.end());
    med = all[1];
    return med;
  };
  EXPECT_LT(gap(256), gap(32));
}

TEST(TaylorStep, ErrorVanishesWithStep) {
  const auto p = random_net(4, 16, 2, Activation::tanh(), 21);
  const auto data = data_of(3, 4, 22);
  const double big = taylor_discrete_step(p, data, 1e-1, 3).relative_error;
  const double small = taylor_discrete_step(p, data, 1e-3, 3).relative_error;
  EXPECT_LT(small, big);
  EXPECT_LT(small, 1e-6);
  EXPECT_THROW(taylor_discrete_step(p, data, 0.0, 3), std::invalid_argument);
  EXPECT_THROW(taylor_discrete_step(p, data, 0.1, 2), std::invalid_argument);
}

TEST(TaylorStep, RemainderOrder) {
  const auto p = random_net(4, 16, 2, Activation::tanh(), 23);
  const auto data = data_of(3, 4, 24);
  for (int order : {3, 4}) {
    const double e1 = taylor_discrete_step(p, data, 1e-2, order).relative_error;
    const double e3 = taylor_discrete_step(p, data, 2.5e-3, order).relative_error;
    EXPECT_NEAR(std::log2(e1 / e3) / 2.0, order - 1, 0.3) << "p=" << order;
  }
}

TEST(TaylorStep, LinearNetAgreesWithClosedFormThirdOrder) {
  const auto p = random_net(5, 6, 1, Activation::identity(), 25);
  const auto data = data_of(3, 5, 26);
  const double eta = 0.05;
  const Vec f = outputs(p, data), res = residuals(p, data);
  const auto& x = data.inputs;
  const double m = 6.0;
  const auto step = taylor_discrete_step(p, data, eta, 3);
  KernelTensor expect = ntk_gram(p, data);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 3; ++c)
        sum += res[c] * (2 * dot(x[a], x[b]) * f[c] + dot(x[a], x[c]) * f[b] + dot(x[b], x[c]) * f[a]) / m;
      expect.at({a, b}) += -eta / 3.0 * sum;
    }
  EXPECT_LT(relative_error_inf(step.predicted.values, expect.values), 1e-12);
  // the NTK of this net is quadratic in the parameters: second order is exact
  EXPECT_LT(taylor_discrete_step(p, data, eta, 4).relative_error, 1e-12);
}

TEST(TaylorStep, PrintedCoefficientsDiffer) {
  const auto p = random_net(4, 16, 2, Activation::tanh(), 27);
  const auto data = data_of(3, 4, 28);
  const auto derived = taylor_discrete_step(p, data, 1e-2, 4);
  const auto printed = taylor_discrete_step(p, data, 1e-2, 4, TaylorCoefficients::printed);
  EXPECT_EQ(derived.recomputed.values, printed.recomputed.values);
  EXPECT_GT(printed.relative_error, derived.relative_error);
}

TEST(Checkpoint, RoundTrip) {
  const auto p = random_net(4, 8, 2, Activation::tanh(), 29);
  const auto data = data_of(3, 4, 30);
  auto s = init_state(p, data, 3);
  s.t = 0.125;
  std::stringstream buf;
  write_checkpoint(buf, s);
  const auto back = read_checkpoint(buf);
  EXPECT_EQ(back.p, 3);
  EXPECT_EQ(back.t, 0.125);
  EXPECT_EQ(back.flatten(), s.flatten());
  std::istringstream bad("p,3\nn,0\n");
  EXPECT_THROW(read_checkpoint(bad), std::runtime_error);
}
