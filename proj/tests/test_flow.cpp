#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nthlab/flow.hpp"

using namespace nthlab;

namespace {

NetworkParams<double> random_net(std::size_t d, std::size_t m, std::size_t H, Activation act, std::uint64_t seed) {
  return init_params(NetworkConfig{d, m, H, std::move(act), 1.0, 1.0, seed});
}

DataSet data_of(std::size_t n, std::size_t d, std::uint64_t seed) {
  return synthetic_dataset(n, d, seed, LabelKind::gaussian, DataRequirements{});
}

Vec loss_gradient_by_samples(const NetworkParams<double>& p, const DataSet& data) {
  Vec g(p.size(), 0.0);
  for (std::size_t b = 0; b < data.size(); ++b) {
    const auto t = forward(p, data.inputs[b]);
    const Vec gb = param_gradient(p, t);
    const double r = (t.output - data.labels[b]) / static_cast<double>(data.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= r * gb[i];
  }
  return g;
}

}  // namespace

TEST(GradientFlowRhs, MatchesSummedSampleGradients) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto p = random_net(4, 9, 1 + s, Activation::tanh(), s);
    const auto data = data_of(3, 4, 10 + s);
    EXPECT_LT(relative_error_inf(gradient_flow_rhs(p, data), loss_gradient_by_samples(p, data)), 1e-13);
  }
}

TEST(GradientFlowRhs, ZeroAtInterpolation) {
  const auto p = random_net(3, 5, 2, Activation::tanh(), 2);
  DataSet data = data_of(2, 3, 3);
  data.labels = outputs(p, data);
  for (double v : gradient_flow_rhs(p, data)) EXPECT_EQ(v, 0.0);
}

TEST(Flow, LossIsMonotone) {
  const auto p = random_net(4, 32, 2, Activation::tanh(), 5);
  const auto data = data_of(4, 4, 6);
  FlowConfig cfg;
  cfg.t_end = 3.0;
  cfg.dt = 0.02;
  cfg.snapshot_times = uniform_times(3.0, 0.1);
  cfg.record_lambda_min = false;
  const auto traj = integrate_flow(p, data, cfg);
  ASSERT_EQ(traj.snapshots.size(), cfg.snapshot_times.size());
  for (std::size_t k = 1; k < traj.snapshots.size(); ++k)
    EXPECT_LE(traj.snapshots[k].loss, traj.snapshots[k - 1].loss + 10 * std::pow(cfg.dt, 5));
  EXPECT_LT(traj.snapshots.back().loss, traj.snapshots.front().loss);
}

TEST(Flow, ZeroHorizonHasOneSnapshot) {
  const auto p = random_net(3, 8, 1, Activation::tanh(), 1);
  const auto data = data_of(2, 3, 2);
  FlowConfig cfg;
  cfg.t_end = 0.0;
  cfg.snapshot_times = {0.0};
  cfg.kernel_order = 2;
  const auto traj = integrate_flow(p, data, cfg);
  ASSERT_EQ(traj.snapshots.size(), 1u);
  EXPECT_EQ(traj.snapshots[0].loss, loss(p, data));
  EXPECT_EQ(max_kernel_drift(traj), 0.0);
}

TEST(Flow, SnapshotObservables) {
  const auto p = random_net(3, 16, 2, Activation::softplus(1.0), 4);
  const auto data = data_of(3, 3, 5);
  FlowConfig cfg;
  cfg.t_end = 0.5;
  cfg.snapshot_times = {0.0, 0.5};
  cfg.kernel_order = 3;
  cfg.keep_params = true;
  const auto traj = integrate_flow(p, data, cfg);
  const auto& s0 = traj.snapshots[0];
  EXPECT_EQ(*s0.params, p.flatten());
  ASSERT_EQ(s0.kernels.size(), 2u);
  EXPECT_EQ(s0.kernel(3).order, 3);
  EXPECT_THROW(s0.kernel(4), std::invalid_argument);
  EXPECT_NEAR(s0.lambda_min, min_eigenvalue_sym(ntk_gram(p, data).as_matrix()), 1e-12);
  ASSERT_EQ(s0.layer_norms.size(), 2u);
  const Vec sv = singular_values(Mat(16, 3, Vec(p.layer(0).begin(), p.layer(0).end())));
  EXPECT_NEAR(s0.layer_norms[0], sv.front() / 4.0, 1e-6);
  EXPECT_NEAR(s0.output_norm, norm2(p.output_weights()) / 4.0, 1e-15);
  EXPECT_EQ(s0.residuals.size(), 3u);
}

TEST(Flow, DescentIdentityHolds) {
  const auto p = random_net(4, 64, 2, Activation::tanh(), 21);
  const auto data = data_of(3, 4, 22);
  auto check = [&](double spacing) {
    FlowConfig cfg;
    cfg.t_end = 1.0;
    cfg.dt = 1e-3;
    cfg.snapshot_times = uniform_times(1.0, spacing);
    cfg.kernel_order = 2;
    cfg.record_norms = false;
    return descent_identity_check(integrate_flow(p, data, cfg)).max_deviation;
  };
  const double coarse = check(0.02), fine = check(0.01);
  EXPECT_LT(fine, 1e-4);
  EXPECT_NEAR(coarse / fine, 4.0, 0.6);
}

TEST(Flow, KernelDerivativeMatchesNextOrder) {
  const auto p = random_net(4, 64, 2, Activation::tanh(), 31);
  const auto data = data_of(3, 4, 32);
  FlowConfig cfg;
  cfg.t_end = 0.5;
  cfg.dt = 5e-3;
  cfg.snapshot_times = uniform_times(0.5, 0.01);
  cfg.kernel_order = 3;
  cfg.record_norms = false;
  const auto traj = integrate_flow(p, data, cfg);
  EXPECT_LT(hierarchy_identity_check(traj, 2).max_deviation, 1e-3);
  EXPECT_THROW(hierarchy_identity_check(traj, 3), std::invalid_argument);
}

TEST(Flow, IdentityCheckNeedsThreeSnapshots) {
  const auto p = random_net(3, 8, 1, Activation::tanh(), 1);
  const auto data = data_of(2, 3, 2);
  FlowConfig cfg;
  cfg.t_end = 0.1;
  cfg.snapshot_times = {0.0, 0.1};
  cfg.kernel_order = 2;
  EXPECT_THROW(descent_identity_check(integrate_flow(p, data, cfg)), std::invalid_argument);
}

TEST(Flow, CsvLayout) {
  const auto p = random_net(3, 8, 2, Activation::tanh(), 1);
  const auto data = data_of(2, 3, 2);
  FlowConfig cfg;
  cfg.t_end = 0.2;
  cfg.dt = 0.05;
  cfg.snapshot_times = {0.0, 0.1, 0.2};
  const auto traj = integrate_flow(p, data, cfg);
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "time,loss,lambda_min,r_1,r_2,wnorm_1,wnorm_2,anorm");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Flow, RejectsBadConfig) {
  const auto p = random_net(3, 8, 1, Activation::tanh(), 1);
  const auto data = data_of(2, 3, 2);
  FlowConfig cfg;
  cfg.kernel_order = 1;
  EXPECT_THROW(integrate_flow(p, data, cfg), std::invalid_argument);
  cfg.kernel_order = 0;
  cfg.dt = -1;
  EXPECT_THROW(integrate_flow(p, data, cfg), std::invalid_argument);
}
