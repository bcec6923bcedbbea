#pragma once

// Numerical property checks shared by `nthlab selftest` and the acceptance
// binary. Each returns one Check; sizes come from the caller.

#include <cmath>
#include <string>
#include <vector>

#include "nthlab/harness.hpp"

namespace nthlab::checks {

namespace detail {

inline Vec fd_output_gradient(const NetworkParams<double>& p, std::span<const double> x, double h) {
  Vec theta = p.flatten(), out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(theta[i]));
    const double keep = theta[i];
    theta[i] = keep + step;
    const double up = forward(NetworkParams<double>(p.shape(), p.activation(), theta), x).output;
    theta[i] = keep - step;
    const double down = forward(NetworkParams<double>(p.shape(), p.activation(), theta), x).output;
    theta[i] = keep;
    out[i] = (up - down) / (2 * step);
  }
  return out;
}

inline Activation activation_at(std::size_t k) {
  switch (k % 3) {
    case 0: return Activation::tanh();
    case 1: return Activation::softplus(1.0 + 0.5 * static_cast<double>(k % 5));
    default: return Activation::identity();
  }
}

inline DataSet loose_data(std::size_t n, std::size_t d, std::uint64_t seed) {
  DataRequirements req;
  req.subset_cap = std::min<std::size_t>(req.subset_cap, d);
  return synthetic_dataset(n, d, seed, LabelKind::gaussian, req);
}

// K3 for the identity activation with one hidden layer:
// (2<x1,x2> f3 + <x1,x3> f2 + <x2,x3> f1) / m
inline KernelTensor linear_third_order(const NetworkParams<double>& p, const DataSet& data) {
  const Vec f = outputs(p, data);
  const std::size_t n = data.size();
  const double m = static_cast<double>(p.shape().m);
  const auto& x = data.inputs;
  KernelTensor k(3, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        k.at({a, b, c}) = (2 * dot(x[a], x[b]) * f[c] + dot(x[a], x[c]) * f[b] + dot(x[b], x[c]) * f[a]) / m;
  return k;
}

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace detail

/// Backprop gradient against central differences on random small nets.
inline Check gradient(std::size_t nets, std::size_t max_dim, std::uint64_t seed) {
  RngStream rng(seed, 11);
  auto draw = [&] { return 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_dim)); };
  double worst = 0.0;
  for (std::size_t k = 0; k < nets; ++k) {
    const std::size_t d = draw(), m = draw(), H = draw();
    const auto p = init_params(NetworkConfig{d, m, H, detail::activation_at(k), 1.0, 1.0, seed + 1000 + k});
    Vec x(d);
    for (double& v : x) v = rng.gaussian();
    const double nx = norm2(x);
    for (double& v : x) v /= nx;
    const Vec g = param_gradient(p, std::span<const double>(x));
    worst = std::max(worst, relative_error_inf(g, detail::fd_output_gradient(p, x, 1e-6)));
  }
  return {"gradient vs central differences (" + std::to_string(nets) + " nets)", worst < 1e-6, detail::sci(worst),
          "< 1e-6"};
}

/// Flat-gradient Gram against the layerwise sum on random nets.
inline Check ntk_identity(std::size_t nets, std::uint64_t seed) {
  RngStream rng(seed, 12);
  auto draw = [&](double hi) { return 1 + static_cast<std::size_t>(rng.uniform() * hi); };
  double worst = 0.0;
  for (std::size_t k = 0; k < nets; ++k) {
    const std::size_t d = 1 + draw(7), m = draw(8), H = draw(8), n = draw(4);
    const auto p = init_params(NetworkConfig{d, m, H, detail::activation_at(k), 1.0, 1.0, seed + 2000 + k});
    const auto data = detail::loose_data(n, d, seed + 3000 + k);
    worst = std::max(worst, relative_error_inf(ntk_layerwise(p, data).total.values, ntk_gram(p, data).values));
  }
  return {"NTK gradient Gram = layerwise sum (" + std::to_string(nets) + " nets)", worst < 1e-12, detail::sci(worst),
          "< 1e-12"};
}

/// Dual-number K3, K4 against the finite-difference oracle, and K3 of a
/// linear one-hidden-layer net against its closed form.
inline std::vector<Check> hierarchy_oracle(std::size_t m, std::size_t n, std::size_t nets, std::uint64_t seed) {
  double k3 = 0.0, k4 = 0.0, lin = 0.0;
  for (std::size_t k = 0; k < nets; ++k) {
    const auto p = init_params(NetworkConfig{4, m, 2, Activation::tanh(), 1.0, 1.0, seed + 4000 + k});
    const auto data = detail::loose_data(n, 4, seed + 5000 + k);
    k3 = std::max(k3, relative_error_inf(kernel_of_order(p, data, 3).values, kernel_fd_oracle(p, data, 3).values));
    k4 = std::max(k4, relative_error_inf(kernel_of_order(p, data, 4).values, kernel_fd_oracle(p, data, 4).values));
    const auto q = init_params(NetworkConfig{5, 7, 1, Activation::identity(), 1.0, 1.0, seed + 6000 + k});
    const auto ldata = detail::loose_data(n, 5, seed + 7000 + k);
    lin = std::max(lin, relative_error_inf(kernel_of_order(q, ldata, 3).values,
                                           detail::linear_third_order(q, ldata).values));
  }
  return {{"K3 vs finite-difference oracle (m=" + std::to_string(m) + ")", k3 < 1e-5, detail::sci(k3), "< 1e-5"},
          {"K4 vs finite-difference oracle (m=" + std::to_string(m) + ")", k4 < 1e-3, detail::sci(k4), "< 1e-3"},
          {"K3 vs linear-net closed form", lin < 1e-6, detail::sci(lin), "< 1e-6"}};
}

/// Time derivatives of K2 and K3 along the exact flow against the next kernel.
inline std::vector<Check> hierarchy_along_flow(std::size_t m, std::size_t n, std::uint64_t seed, double t_end,
                                               double dt, double spacing) {
  const auto p = init_params(NetworkConfig{4, m, 2, Activation::tanh(), 1.0, 1.0, seed});
  const auto data = detail::loose_data(n, 4, seed + 1);
  FlowConfig cfg;
  cfg.t_end = t_end;
  cfg.dt = dt;
  cfg.snapshot_times = uniform_times(t_end, spacing);
  cfg.kernel_order = 4;
  cfg.record_norms = false;
  cfg.record_lambda_min = false;
  const auto traj = integrate_flow(p, data, cfg);
  const double d2 = hierarchy_identity_check(traj, 2).max_deviation;
  const double d3 = hierarchy_identity_check(traj, 3).max_deviation;
  const double df = descent_identity_check(traj).max_deviation;
  return {{"d/dt f matches -(1/n) K2 r", df < 1e-3, detail::sci(df), "< 1e-3"},
          {"d/dt K2 matches -(1/n) K3 r", d2 < 1e-3, detail::sci(d2), "< 1e-3"},
          {"d/dt K3 matches -(1/n) K4 r", d3 < 1e-2, detail::sci(d3), "< 1e-2"}};
}

/// Loss is non-increasing at every snapshot up to 10 dt^5.
inline Check monotone_loss(std::size_t m, std::size_t n, std::size_t seeds, double t_end, double dt) {
  double worst = -1e300;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto p = init_params(NetworkConfig{4, m, 2, Activation::tanh(), 1.0, 1.0, 100 + s});
    const auto data = detail::loose_data(n, 4, 200 + s);
    FlowConfig cfg;
    cfg.t_end = t_end;
    cfg.dt = dt;
    cfg.snapshot_times = uniform_times(t_end, dt);
    cfg.record_norms = false;
    cfg.record_lambda_min = false;
    const auto traj = integrate_flow(p, data, cfg);
    for (std::size_t k = 1; k < traj.snapshots.size(); ++k)
      worst = std::max(worst, traj.snapshots[k].loss - traj.snapshots[k - 1].loss);
  }
  const double slack = 10 * std::pow(dt, 5);
  return {"loss non-increasing at every snapshot", worst <= slack, "max increase " + detail::sci(worst),
          "<= " + detail::sci(slack)};
}

/// p = 2 truncated trajectory against exp(-tK/n) applied to the residual.
inline Check frozen_kernel(std::size_t m, std::size_t n, std::uint64_t seed, double t_end, double dt) {
  const auto p = init_params(NetworkConfig{4, m, 2, Activation::tanh(), 1.0, 1.0, seed});
  const auto data = detail::loose_data(n, 4, seed + 1);
  const auto s = init_state(p, data, 2);
  double worst = 0.0;
  for (const auto& snap : integrate_truncated(s, data, t_end, dt, uniform_times(t_end, t_end / 20)))
    worst = std::max(worst,
                     relative_error_inf(snap.f, frozen_kernel_solution(s.kernel(2), s.f, data.labels, snap.t)));
  return {"p=2 truncation vs matrix exponential", worst < 1e-8, detail::sci(worst), "< 1e-8"};
}

/// Loss stays under loss(0) exp(-lambda t/(2n)) * 1.05.
inline Check decay_bound(std::size_t m, std::size_t n, std::size_t seeds, double t_end, double dt, double spacing,
                         std::size_t threads) {
  SweepConfig cfg;
  cfg.widths = {m};
  cfg.seeds.clear();
  for (std::uint64_t s = 0; s < seeds; ++s) cfg.seeds.push_back(s);
  cfg.n = n;
  cfg.t_end = t_end;
  cfg.dt = dt;
  cfg.snapshot_every = spacing;
  cfg.threads = threads;
  const auto rep = decay_experiment(cfg);
  for (const auto& c : rep.checks)
    if (c.name.rfind("loss <=", 0) == 0) return c;
  return {"decay bound", false, "missing", "check present"};
}

/// One gradient step: Taylor prediction error slope against eta is p - 1.
inline std::vector<Check> taylor_order(std::size_t m, std::size_t n, std::uint64_t seed, const Vec& etas,
                                       const std::vector<int>& orders) {
  const auto p = init_params(NetworkConfig{4, m, 2, Activation::tanh(), 1.0, 1.0, seed});
  const auto data = detail::loose_data(n, 4, seed + 1);
  std::vector<Check> out;
  for (int order : orders) {
    Vec errs;
    for (double eta : etas) errs.push_back(taylor_discrete_step(p, data, eta, order).relative_error);
    const double slope = fit_loglog_slope(etas, errs).slope;
    out.push_back(nthlab::detail::bracket_check("Taylor step error slope vs eta, p=" + std::to_string(order), slope,
                                                order - 1 - 0.3, order - 1 + 0.3));
  }
  return out;
}

/// Predicting at a training input reproduces that input's truncated trajectory.
inline Check prediction_consistency(std::size_t m, std::size_t n, std::uint64_t seed, double t_end, double dt) {
  const auto p = init_params(NetworkConfig{4, m, 2, Activation::tanh(), 1.0, 1.0, seed});
  const auto data = detail::loose_data(n, 4, seed + 1);
  double worst = 0.0;
  for (int order : {2, 3, 4})
    for (std::size_t g = 0; g < n; ++g) {
      const auto traj = predict_new_point(p, data, data.inputs[g], order, t_end, dt, uniform_times(t_end, t_end / 10));
      for (std::size_t k = 0; k < traj.point.size(); ++k)
        worst = std::max(worst, std::abs(traj.point[k].f_x - traj.train[k].f[g]));
    }
  return {"prediction at a training input tracks its trajectory", worst < 1e-10, detail::sci(worst), "< 1e-10"};
}

}  // namespace nthlab::checks
