#pragma once

// Continuous-time gradient descent d theta/dt = -grad L(theta), integrated
// with fixed-step RK4, plus the observables the theory makes claims about.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nthlab/csv.hpp"
#include "nthlab/kernels.hpp"
#include "nthlab/network.hpp"
#include "nthlab/ode.hpp"

namespace nthlab {

/// -(1/n) sum_b grad f_b (f_b - y_b), assembled block by block from the
/// backward vectors without materializing per-sample gradients.
inline Vec gradient_flow_rhs(const NetworkParams<double>& params, const DataSet& data) {
  data.check_shape();
  const NetworkShape& shape = params.shape();
  const double inv_n = 1.0 / static_cast<double>(data.size());
  Vec out(shape.param_count(), 0.0);
  for (std::size_t b = 0; b < data.size(); ++b) {
    const auto trace = forward(params, data.inputs[b]);
    const double coeff = -inv_n * (trace.output - data.labels[b]);
    if (coeff == 0.0) continue;
    const auto back = backward_vectors(params, trace);
    for (std::size_t l = 0; l < shape.H; ++l) {
      const std::size_t cols = shape.layer_cols(l);
      double* block = out.data() + shape.layer_offset(l);
      const auto& xin = trace.activations[l];
      for (std::size_t i = 0; i < shape.m; ++i) {
        const double bi = coeff * back[l][i];
        double* row = block + i * cols;
        for (std::size_t j = 0; j < cols; ++j) row[j] += bi * xin[j];
      }
    }
    double* a = out.data() + shape.output_offset();
    const auto& top = trace.activations[shape.H];
    for (std::size_t i = 0; i < shape.m; ++i) a[i] += coeff * top[i];
  }
  return out;
}

struct FlowConfig {
  double t_end = 1.0;
  double dt = 1e-2;
  Vec snapshot_times{0.0, 1.0};
  int kernel_order = 0;  // record K^(2..kernel_order) at each snapshot; 0 disables
  bool record_norms = true;
  bool record_lambda_min = true;
  bool keep_params = false;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("flow: dt must be > 0");
    if (t_end < 0.0) throw std::invalid_argument("flow: t_end must be >= 0");
    check_snapshot_times(snapshot_times, t_end);
    if (kernel_order != 0 && (kernel_order < 2 || kernel_order > max_kernel_order))
      throw std::invalid_argument("flow: kernel_order must be 0 or in [2, " + std::to_string(max_kernel_order) + "]");
  }
};

struct Snapshot {
  double time = 0.0;
  double loss = 0.0;
  Vec outputs;
  Vec residuals;
  double lambda_min = std::numeric_limits<double>::quiet_NaN();
  Vec layer_norms;  // ||W^(l)||_2 / sqrt(m)
  double output_norm = std::numeric_limits<double>::quiet_NaN();  // ||a||_2 / sqrt(m)
  std::vector<KernelTensor> kernels;                              // orders 2.. in ascending order
  std::optional<Vec> params;

  const KernelTensor& kernel(int order) const {
    for (const auto& k : kernels)
      if (k.order == order) return k;
    throw std::invalid_argument("snapshot has no kernel of order " + std::to_string(order));
  }
};

struct TrajectoryLog {
  NetworkShape shape;
  std::size_t n = 0;
  double dt = 0.0;
  std::vector<Snapshot> snapshots;
};

inline Snapshot observe_state(const NetworkParams<double>& params, const DataSet& data, double t,
                              const FlowConfig& cfg) {
  Snapshot s;
  s.time = t;
  s.outputs = outputs(params, data);
  s.residuals = s.outputs;
  for (std::size_t i = 0; i < s.residuals.size(); ++i) s.residuals[i] -= data.labels[i];
  s.loss = loss_from_residuals(s.residuals);
  if (cfg.kernel_order >= 2) {
    s.kernels = kernel_hierarchy(params, data, cfg.kernel_order);
    for (auto& k : s.kernels) k.snapshot = "t=" + format_double(t);
  }
  if (cfg.record_lambda_min) {
    const Mat k2 = cfg.kernel_order >= 2 ? s.kernels.front().as_matrix() : ntk_layerwise(params, data).total.as_matrix();
    s.lambda_min = min_eigenvalue_sym(k2);
  }
  if (cfg.record_norms) {
    const NetworkShape& shape = params.shape();
    const double sqrt_m = std::sqrt(static_cast<double>(shape.m));
    for (std::size_t l = 0; l < shape.H; ++l)
      s.layer_norms.push_back(spectral_norm(params.layer(l), shape.m, shape.layer_cols(l)) / sqrt_m);
    s.output_norm = norm2(params.output_weights()) / sqrt_m;
  }
  if (cfg.keep_params) s.params = params.flatten();
  return s;
}

/// Integrates the gradient flow from params0 and records a snapshot at every
/// requested time. Throws IntegrationDiverged on non-finite state.
inline TrajectoryLog integrate_flow(const NetworkParams<double>& params0, const DataSet& data, const FlowConfig& cfg) {
  cfg.validate();
  data.check_shape();
  TrajectoryLog log{params0.shape(), data.size(), cfg.dt, {}};
  const NetworkShape shape = params0.shape();
  const Activation act = params0.activation();
  integrate_rk4(
      params0.flatten(), cfg.t_end, cfg.dt, cfg.snapshot_times,
      [&](const Vec& theta) { return gradient_flow_rhs(NetworkParams<double>(shape, act, theta), data); },
      [&](double t, const Vec& theta) {
        log.snapshots.push_back(observe_state(NetworkParams<double>(shape, act, theta), data, t, cfg));
      });
  return log;
}

/// Final parameters after integrating to t_end (no observers).
inline Vec flow_endpoint(const NetworkParams<double>& params0, const DataSet& data, double t_end, double dt) {
  Vec out;
  const Vec times{t_end};
  integrate_rk4(
      params0.flatten(), t_end, dt, times,
      [&](const Vec& theta) {
        return gradient_flow_rhs(NetworkParams<double>(params0.shape(), params0.activation(), theta), data);
      },
      [&](double, const Vec& theta) { out = theta; });
  return out;
}

/// First multiple of `every` by which the loss has fallen by `factor`, or t_max.
inline double auto_horizon(const NetworkParams<double>& params0, const DataSet& data, double dt, double factor = 100.0,
                           double t_max = 50.0, double every = 0.5) {
  struct Reached {
    double t;
  };
  const double target = loss(params0, data) / factor;
  if (target == 0.0) return 0.0;
  const Vec times = uniform_times(t_max, every);
  try {
    integrate_rk4(
        params0.flatten(), t_max, dt, times,
        [&](const Vec& theta) {
          return gradient_flow_rhs(NetworkParams<double>(params0.shape(), params0.activation(), theta), data);
        },
        [&](double t, const Vec& theta) {
          if (t > 0.0 && loss(NetworkParams<double>(params0.shape(), params0.activation(), theta), data) <= target)
            throw Reached{t};
        });
  } catch (const Reached& r) {
    return r.t;
  }
  return t_max;
}

// ---------------------------------------------------------------------------
// Consistency of logged trajectories with the hierarchy identities

struct IdentityReport {
  Vec times;       // interior snapshot times
  Vec deviations;  // ||lhs - rhs||_inf / ||rhs||_inf at each (absolute when rhs = 0)
  double max_deviation = 0.0;
};

namespace detail {

// Second-order three-point derivative on a possibly non-uniform grid.
inline Vec three_point_derivative(std::span<const double> prev, std::span<const double> mid,
                                  std::span<const double> next, double h1, double h2) {
  const double cp = -h2 / (h1 * (h1 + h2)), cm = (h2 - h1) / (h1 * h2), cn = h1 / (h2 * (h1 + h2));
  Vec out(mid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cp * prev[i] + cm * mid[i] + cn * next[i];
  return out;
}

inline double deviation(std::span<const double> lhs, std::span<const double> rhs) {
  return relative_error_inf(lhs, rhs);
}

// -(1/n) sum_b K^(r+1)(idx, b) res_b for every idx of the order-r grid.
inline Vec contract_last(const KernelTensor& higher, std::span<const double> res) {
  const std::size_t n = higher.n;
  Vec out(higher.values.size() / n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t off = 0; off < out.size(); ++off) {
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) acc += higher.values[off * n + b] * res[b];
    out[off] = -inv_n * acc;
  }
  return out;
}

}  // namespace detail

/// Compares the time derivative of the outputs against -(1/n) sum_b K^(2)(., b) r_b.
inline IdentityReport descent_identity_check(const TrajectoryLog& traj) {
  const auto& s = traj.snapshots;
  if (s.size() < 3) throw std::invalid_argument("descent_identity_check: need at least 3 snapshots");
  IdentityReport rep;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) {
    const Vec lhs = detail::three_point_derivative(s[k - 1].residuals, s[k].residuals, s[k + 1].residuals,
                                                   s[k].time - s[k - 1].time, s[k + 1].time - s[k].time);
    const Vec rhs = detail::contract_last(s[k].kernel(2), s[k].residuals);
    rep.times.push_back(s[k].time);
    rep.deviations.push_back(detail::deviation(lhs, rhs));
    rep.max_deviation = std::max(rep.max_deviation, rep.deviations.back());
  }
  return rep;
}

/// Compares d/dt K^(order) against -(1/n) sum_b K^(order+1)(..., b) r_b.
inline IdentityReport hierarchy_identity_check(const TrajectoryLog& traj, int order = 2) {
  const auto& s = traj.snapshots;
  if (s.size() < 3) throw std::invalid_argument("hierarchy_identity_check: need at least 3 snapshots");
  IdentityReport rep;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) {
    const Vec lhs = detail::three_point_derivative(s[k - 1].kernel(order).values, s[k].kernel(order).values,
                                                   s[k + 1].kernel(order).values, s[k].time - s[k - 1].time,
                                                   s[k + 1].time - s[k].time);
    const Vec rhs = detail::contract_last(s[k].kernel(order + 1), s[k].residuals);
    rep.times.push_back(s[k].time);
    rep.deviations.push_back(detail::deviation(lhs, rhs));
    rep.max_deviation = std::max(rep.max_deviation, rep.deviations.back());
  }
  return rep;
}

/// max_t ||K^(2)_t - K^(2)_0||_inf over the logged snapshots.
inline double max_kernel_drift(const TrajectoryLog& traj) {
  const auto& k0 = traj.snapshots.front().kernel(2).values;
  double out = 0.0;
  for (const auto& s : traj.snapshots) {
    const auto& k = s.kernel(2).values;
    for (std::size_t i = 0; i < k.size(); ++i) out = std::max(out, std::abs(k[i] - k0[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

/// time, loss, lambda_min, r_1..r_n, wnorm_1..wnorm_H, anorm
inline void write_trajectory_csv(std::ostream& out, const TrajectoryLog& traj) {
  out << "time,loss,lambda_min";
  for (std::size_t i = 1; i <= traj.n; ++i) out << ",r_" << i;
  for (std::size_t l = 1; l <= traj.shape.H; ++l) out << ",wnorm_" << l;
  out << ",anorm\n";
  for (const auto& s : traj.snapshots) {
    out << format_double(s.time) << ',' << format_double(s.loss) << ',' << format_double(s.lambda_min);
    for (double r : s.residuals) out << ',' << format_double(r);
    for (std::size_t l = 0; l < traj.shape.H; ++l)
      out << ',' << format_double(l < s.layer_norms.size() ? s.layer_norms[l] : std::nan(""));
    out << ',' << format_double(s.output_norm) << '\n';
  }
}

/// One sidecar per kernel order: time, i1..ir, value. Returns written paths.
inline std::vector<std::filesystem::path> write_kernel_sidecars(const std::filesystem::path& dir,
                                                                const TrajectoryLog& traj,
                                                                const std::string& prefix = "kernels") {
  std::vector<std::filesystem::path> written;
  if (traj.snapshots.empty() || traj.snapshots.front().kernels.empty()) return written;
  for (const auto& proto : traj.snapshots.front().kernels) {
    const auto path = dir / (prefix + "_order" + std::to_string(proto.order) + ".csv");
    std::ofstream out(path, std::ios::binary);
    out << "time";
    for (int i = 1; i <= proto.order; ++i) out << ",i" << i;
    out << ",value\n";
    for (const auto& s : traj.snapshots) {
      const auto& k = s.kernel(proto.order);
      for (std::size_t off = 0; off < k.values.size(); ++off) {
        out << format_double(s.time);
        for (std::size_t i : k.index_of(off)) out << ',' << i;
        out << ',' << format_double(k.values[off]) << '\n';
      }
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace nthlab
