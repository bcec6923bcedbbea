#pragma once

// Truncated hierarchy: outputs and kernels K^(2..p) evolved as a closed ODE
// system with the top kernel frozen, the matching dynamic for a new input,
// and the one-step Taylor prediction of the kernel under discrete descent.

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nthlab/csv.hpp"
#include "nthlab/flow.hpp"
#include "nthlab/kernels.hpp"
#include "nthlab/ode.hpp"

namespace nthlab {

struct HierarchyState {
  int p = 2;
  std::size_t n = 0;
  double t = 0.0;
  Vec f;                             // predicted outputs
  std::vector<KernelTensor> kernels;  // orders 2..p

  const KernelTensor& kernel(int order) const { return kernels.at(static_cast<std::size_t>(order - 2)); }

  std::size_t flat_size() const {
    std::size_t s = n;
    for (int r = 2; r <= p; ++r) s += KernelTensor::ipow(n, r);
    return s;
  }

  /// f first, then kernels by ascending order, each row-major.
  Vec flatten() const {
    Vec out(f);
    out.reserve(flat_size());
    for (const auto& k : kernels) out.insert(out.end(), k.values.begin(), k.values.end());
    return out;
  }

  void assign(std::span<const double> flat) {
    if (flat.size() != flat_size()) throw std::invalid_argument("HierarchyState: flat size mismatch");
    std::size_t pos = 0;
    f.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n));
    pos += n;
    for (auto& k : kernels) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), k.values.size(), k.values.begin());
      pos += k.values.size();
    }
  }
};

inline HierarchyState init_state(const NetworkParams<double>& params0, const DataSet& data, int p) {
  if (p < 2) throw std::invalid_argument("truncation order p must be >= 2");
  HierarchyState s;
  s.p = p;
  s.n = data.size();
  s.f = outputs(params0, data);
  s.kernels = kernel_hierarchy(params0, data, p);
  return s;
}

namespace detail {

// out[idx] += scale * sum_b k[idx * n + b] * res[b]
inline void contract_into(std::span<const double> k, std::span<const double> res, double scale, std::span<double> out) {
  const std::size_t n = res.size();
  for (std::size_t off = 0; off < out.size(); ++off) {
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) acc += k[off * n + b] * res[b];
    out[off] += scale * acc;
  }
}

// Flat right-hand side over the layout of HierarchyState::flatten.
inline Vec truncated_rhs_flat(int p, std::size_t n, std::span<const double> y, std::span<const double> labels) {
  Vec res(n);
  for (std::size_t b = 0; b < n; ++b) res[b] = y[b] - labels[b];
  const double scale = -1.0 / static_cast<double>(n);
  Vec out(y.size(), 0.0);
  std::size_t pos = 0, next = n;  // block being written, block of the kernel driving it
  std::size_t len = n;
  for (int r = 2; r <= p; ++r) {
    const std::size_t next_len = len * n;
    contract_into(y.subspan(next, next_len), res, scale, std::span<double>(out).subspan(pos, len));
    pos = next;
    next += next_len;
    len = next_len;
  }
  return out;  // top kernel block untouched: frozen
}

}  // namespace detail

/// Derivative of every component; the top kernel's derivative is zero.
inline HierarchyState truncated_rhs(const HierarchyState& state, const DataSet& data) {
  if (data.size() != state.n) throw std::invalid_argument("truncated_rhs: data size does not match state");
  HierarchyState d = state;
  d.assign(detail::truncated_rhs_flat(state.p, state.n, state.flatten(), data.labels));
  return d;
}

/// RK4 on the concatenated state with snapshots at the requested times.
inline std::vector<HierarchyState> integrate_truncated(const HierarchyState& state, const DataSet& data, double t_end,
                                                       double dt, std::span<const double> snapshot_times) {
  if (data.size() != state.n) throw std::invalid_argument("integrate_truncated: data size does not match state");
  std::vector<HierarchyState> out;
  integrate_rk4(
      state.flatten(), t_end, dt, snapshot_times,
      [&](const Vec& y) { return detail::truncated_rhs_flat(state.p, state.n, y, data.labels); },
      [&](double t, const Vec& y) {
        HierarchyState s = state;
        s.assign(y);
        s.t = state.t + t;
        out.push_back(std::move(s));
      });
  return out;
}

/// f(t) = y + exp(-t K / n) (f0 - y) with K symmetric, via its eigendecomposition.
inline Vec frozen_kernel_solution(const KernelTensor& k2, std::span<const double> f0, std::span<const double> labels,
                                  double t) {
  const std::size_t n = k2.n;
  const auto eig = symmetric_eigen(k2.as_matrix());
  Vec r0(n), coeff(n, 0.0), out(labels.begin(), labels.end());
  for (std::size_t i = 0; i < n; ++i) r0[i] = f0[i] - labels[i];
  for (std::size_t j = 0; j < n; ++j) {
    double proj = 0.0;
    for (std::size_t i = 0; i < n; ++i) proj += eig.vectors(i, j) * r0[i];
    coeff[j] = std::exp(-t * eig.values[j] / static_cast<double>(n)) * proj;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += eig.vectors(i, j) * coeff[j];
  return out;
}

// ---------------------------------------------------------------------------
// New-point prediction

struct PredictionState {
  double t = 0.0;
  double f_x = 0.0;
  std::vector<Vec> rows;  // rows[r-2][i2..ir] = K^(r)(x, x_i2, ..., x_ir), r = 2..p
};

struct PredictionTrajectory {
  std::vector<HierarchyState> train;
  std::vector<PredictionState> point;
};

/// Integrates the training hierarchy jointly with the x-rows of every kernel
/// and the output at x, all started from their values at params0.
inline PredictionTrajectory predict_new_point(const NetworkParams<double>& params0, const DataSet& data,
                                              std::span<const double> x_new, int p, double t_end, double dt,
                                              std::span<const double> snapshot_times,
                                              const DataRequirements& req = {}) {
  const double nx = norm2(x_new);
  if (!(nx > req.norm_floor && nx <= 1.0 / req.norm_floor))
    throw std::invalid_argument("predict_new_point: new input norm " + format_double(nx) + " outside the data bracket");
  if (x_new.size() != params0.shape().d) throw std::invalid_argument("predict_new_point: input dimension mismatch");
  const HierarchyState train = init_state(params0, data, p);
  const std::size_t n = data.size();

  DataSet augmented = data;
  augmented.inputs.emplace_back(x_new.begin(), x_new.end());
  augmented.labels.push_back(0.0);
  const auto aug = kernel_hierarchy(params0, augmented, p);

  PredictionState x0;
  x0.f_x = forward(params0, x_new).output;
  for (int r = 2; r <= p; ++r) {
    const auto& k = aug[static_cast<std::size_t>(r - 2)];
    Vec row(KernelTensor::ipow(n, r - 1));
    std::vector<std::size_t> idx(static_cast<std::size_t>(r));
    for (std::size_t off = 0; off < row.size(); ++off) {
      idx[0] = n;
      std::size_t rem = off;
      for (int i = r - 1; i >= 1; --i) {
        idx[static_cast<std::size_t>(i)] = rem % n;
        rem /= n;
      }
      row[off] = k.at(std::span<const std::size_t>(idx));
    }
    x0.rows.push_back(std::move(row));
  }

  Vec y = train.flatten();
  const std::size_t train_size = y.size();
  y.push_back(x0.f_x);
  for (const auto& row : x0.rows) y.insert(y.end(), row.begin(), row.end());

  PredictionTrajectory out;
  const auto rhs = [&](const Vec& state) {
    const std::span<const double> s(state);
    Vec d = detail::truncated_rhs_flat(p, n, s.first(train_size), data.labels);
    Vec res(n);
    for (std::size_t b = 0; b < n; ++b) res[b] = state[b] - data.labels[b];
    // the x-part has the same shape as a training block with one output
    Vec dx(state.size() - train_size, 0.0);
    const auto xs = s.subspan(train_size);
    const double scale = -1.0 / static_cast<double>(n);
    std::size_t pos = 0, next = 1, len = 1;
    for (int r = 2; r <= p; ++r) {
      const std::size_t next_len = len * n;
      detail::contract_into(xs.subspan(next, next_len), res, scale, std::span<double>(dx).subspan(pos, len));
      pos = next;
      next += next_len;
      len = next_len;
    }
    d.insert(d.end(), dx.begin(), dx.end());
    return d;
  };
  integrate_rk4(std::move(y), t_end, dt, snapshot_times, rhs, [&](double t, const Vec& state) {
    HierarchyState s = train;
    s.assign(std::span<const double>(state).first(train_size));
    s.t = t;
    out.train.push_back(std::move(s));
    PredictionState q = x0;
    q.t = t;
    std::size_t pos = train_size;
    q.f_x = state[pos++];
    for (auto& row : q.rows) {
      std::copy_n(state.begin() + static_cast<std::ptrdiff_t>(pos), row.size(), row.begin());
      pos += row.size();
    }
    out.point.push_back(std::move(q));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Discrete-step Taylor prediction of K^(2)

enum class TaylorCoefficients {
  derived,  // (-eta/n)^k / k! on the k-fold residual sum, k = 1..p-2
  printed   // (-eta)^r / n^r on K^(r), r = 3..p-1, no factorial
};

struct TaylorStepResult {
  KernelTensor predicted;
  KernelTensor recomputed;  // K^(2) at theta - eta grad L
  double relative_error = 0.0;
  Vec params_next;
};

namespace detail {

// sum over the trailing `times` indices of k weighted by res in each.
inline Vec contract_residual_power(const KernelTensor& k, std::span<const double> res, int times) {
  Vec cur = k.values;
  for (int i = 0; i < times; ++i) {
    Vec next(cur.size() / res.size(), 0.0);
    contract_into(cur, res, 1.0, next);
    cur = std::move(next);
  }
  return cur;
}

}  // namespace detail

/// Predicts K^(2) one gradient step ahead from the fixed-direction kernels at
/// the current parameters and compares with direct recomputation.
inline TaylorStepResult taylor_discrete_step(const NetworkParams<double>& params, const DataSet& data, double eta,
                                             int p, TaylorCoefficients mode = TaylorCoefficients::derived) {
  if (!(eta > 0.0)) throw std::invalid_argument("taylor_discrete_step: eta must be > 0");
  if (p < 3 || p > max_kernel_order)
    throw std::invalid_argument("taylor_discrete_step: p must be in [3, " + std::to_string(max_kernel_order) + "]");
  const std::size_t n = data.size();
  const double nd = static_cast<double>(n);
  const Vec res = residuals(params, data);
  const int top = mode == TaylorCoefficients::derived ? p : p - 1;
  const auto ks = kernel_hierarchy(params, data, top, DirectionMode::fixed);

  TaylorStepResult out;
  out.predicted = ks.front();
  double factorial = 1.0;
  for (int r = 3; r <= top; ++r) {
    const int k = r - 2;
    factorial *= k;
    const double coeff = mode == TaylorCoefficients::derived ? std::pow(-eta / nd, k) / factorial
                                                             : std::pow(-eta, r) / std::pow(nd, r);
    const Vec term = detail::contract_residual_power(ks[static_cast<std::size_t>(r - 2)], res, k);
    for (std::size_t i = 0; i < term.size(); ++i) out.predicted.values[i] += coeff * term[i];
  }

  out.params_next = params.flatten();
  const Vec step = gradient_flow_rhs(params, data);  // -grad L
  for (std::size_t i = 0; i < step.size(); ++i) out.params_next[i] += eta * step[i];
  out.recomputed = ntk_gram(NetworkParams<double>(params.shape(), params.activation(), out.params_next), data);
  out.relative_error = relative_error_inf(out.predicted.values, out.recomputed.values);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

/// Header block (p, n, t) followed by one section per component.
inline void write_checkpoint(std::ostream& out, const HierarchyState& s) {
  out << "p," << s.p << "\nn," << s.n << "\nt," << format_double(s.t) << '\n';
  out << "section,f\nindex,value\n";
  for (std::size_t i = 0; i < s.n; ++i) out << i << ',' << format_double(s.f[i]) << '\n';
  for (const auto& k : s.kernels) {
    out << "section,K" << k.order << '\n';
    write_kernel_csv(out, k);
  }
}

inline HierarchyState read_checkpoint(std::istream& in) {
  auto fail = [](const std::string& what) { return std::runtime_error("checkpoint: " + what); };
  auto header = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line) || line.rfind(key + ",", 0) != 0) throw fail("expected " + key);
    return line.substr(key.size() + 1);
  };
  HierarchyState s;
  s.p = std::stoi(header("p"));
  s.n = std::stoul(header("n"));
  s.t = std::stod(header("t"));
  if (s.p < 2 || s.n == 0) throw fail("bad header");
  s.f.assign(s.n, 0.0);
  for (int r = 2; r <= s.p; ++r) s.kernels.emplace_back(r, s.n);

  std::string line;
  auto read_section = [&](const std::string& name, std::size_t cols, Vec& values) {
    if (!std::getline(in, line) || line != "section," + name) throw fail("expected section " + name);
    std::getline(in, line);  // column names
    for (std::size_t row = 0; row < values.size(); ++row) {
      if (!std::getline(in, line)) throw fail("truncated section " + name);
      std::istringstream cells(line);
      std::string cell;
      std::size_t off = 0;
      for (std::size_t c = 0; c + 1 < cols; ++c) {
        std::getline(cells, cell, ',');
        off = off * s.n + std::stoul(cell);
      }
      std::getline(cells, cell);
      if (off >= values.size()) throw fail("index out of range in " + name);
      values[off] = std::stod(cell);
    }
  };
  read_section("f", 2, s.f);
  for (auto& k : s.kernels) read_section("K" + std::to_string(k.order), static_cast<std::size_t>(k.order) + 1, k.values);
  return s;
}

}  // namespace nthlab
