#pragma once

// The neural tangent kernel K^(2) and its hierarchy K^(3..p).
//
// K^(2)(a1, a2) = <grad f(x_a1), grad f(x_a2)>, and each further order is the
// directional derivative of the previous one along a per-sample gradient:
//   K^(r+1)(a1, .., ar, b; theta) = d/ds K^(r)(a1, .., ar; theta + s grad f_b(theta)) at s = 0.
// Because K^(r) itself depends on theta through its inner directions, those
// directions have to be re-evaluated at the perturbed point. Stacking one
// dual level per extra index does exactly that: the inner gradient is
// computed on already-lifted parameters.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nthlab/autodiff.hpp"
#include "nthlab/csv.hpp"
#include "nthlab/network.hpp"

namespace nthlab {

/// Dense values of K^(r) on the n^r index grid, row-major with the last index fastest.
struct KernelTensor {
  int order = 2;
  std::size_t n = 0;
  Vec values;
  std::string snapshot;  // identifies the parameter point it was evaluated at

  KernelTensor() = default;
  KernelTensor(int order_, std::size_t n_) : order(order_), n(n_), values(ipow(n_, order_), 0.0) {
    if (order_ < 2) throw std::invalid_argument("kernel order must be >= 2");
  }

  static std::size_t ipow(std::size_t base, int exp) {
    std::size_t out = 1;
    for (int i = 0; i < exp; ++i) out *= base;
    return out;
  }

  std::size_t offset(std::span<const std::size_t> idx) const {
    if (idx.size() != static_cast<std::size_t>(order)) throw std::invalid_argument("kernel index has wrong arity");
    std::size_t off = 0;
    for (std::size_t i : idx) {
      if (i >= n) throw std::out_of_range("kernel index out of range");
      off = off * n + i;
    }
    return off;
  }
  double& at(std::initializer_list<std::size_t> idx) { return values[offset({idx.begin(), idx.size()})]; }
  double at(std::initializer_list<std::size_t> idx) const { return values[offset({idx.begin(), idx.size()})]; }
  double& at(std::span<const std::size_t> idx) { return values[offset(idx)]; }
  double at(std::span<const std::size_t> idx) const { return values[offset(idx)]; }

  /// Multi-index of a flat offset.
  std::vector<std::size_t> index_of(std::size_t off) const {
    std::vector<std::size_t> idx(order);
    for (int k = order - 1; k >= 0; --k) {
      idx[k] = off % n;
      off /= n;
    }
    return idx;
  }

  double norm_inf() const { return nthlab::norm_inf(values); }

  Mat as_matrix() const {
    if (order != 2) throw std::invalid_argument("as_matrix: only order-2 kernels are matrices");
    return Mat(n, n, values);
  }
};

inline void write_kernel_csv(std::ostream& out, const KernelTensor& k) {
  for (int i = 1; i <= k.order; ++i) out << 'i' << i << ',';
  out << "value\n";
  for (std::size_t off = 0; off < k.values.size(); ++off) {
    for (std::size_t i : k.index_of(off)) out << i << ',';
    out << format_double(k.values[off]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// K^(2)

/// Per-layer contributions G^(l)(a, b) = <b_l(a), b_l(b)> <x^(l-1)(a), x^(l-1)(b)>
/// for l = 1..H and G^(H+1) = <x^(H)(a), x^(H)(b)>, plus their sum.
template <Scalar S>
struct LayerwiseGram {
  Matrix<S> total;
  std::vector<Matrix<S>> contributions;
};

template <Scalar S>
S inner(const std::vector<S>& u, const std::vector<S>& v) {
  S acc{};
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

template <Scalar S>
LayerwiseGram<S> gram_layerwise(const NetworkParams<S>& params, std::span<const Vec> inputs) {
  const std::size_t n = inputs.size();
  const std::size_t H = params.shape().H;
  std::vector<ForwardTrace<S>> traces;
  std::vector<std::vector<std::vector<S>>> back;
  traces.reserve(n);
  back.reserve(n);
  for (const auto& x : inputs) {
    traces.push_back(forward(params, x));
    back.push_back(backward_vectors(params, traces.back()));
  }

  LayerwiseGram<S> out{Matrix<S>(n, n), std::vector<Matrix<S>>(H + 1, Matrix<S>(n, n))};
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      S total{};
      for (std::size_t l = 0; l < H; ++l) {
        const S g = inner(back[a][l], back[b][l]) * inner(traces[a].activations[l], traces[b].activations[l]);
        out.contributions[l](a, b) = out.contributions[l](b, a) = g;
        total += g;
      }
      const S top = inner(traces[a].activations[H], traces[b].activations[H]);
      out.contributions[H](a, b) = out.contributions[H](b, a) = top;
      total += top;
      out.total(a, b) = out.total(b, a) = total;
    }
  return out;
}

/// K^(2) as the Gram matrix of flattened parameter gradients.
inline KernelTensor ntk_gram(const NetworkParams<double>& params, const DataSet& data) {
  data.check_shape();
  const std::size_t n = data.size();
  std::vector<Vec> grads;
  grads.reserve(n);
  for (const auto& x : data.inputs) grads.push_back(param_gradient(params, std::span<const double>(x)));
  KernelTensor k(2, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) k.at({a, b}) = k.at({b, a}) = dot(grads[a], grads[b]);
  return k;
}

struct LayerwiseKernel {
  KernelTensor total;
  std::vector<Mat> contributions;  // G^(1) .. G^(H+1)
};

/// K^(2) as the sum of per-layer contributions, without flattening gradients.
inline LayerwiseKernel ntk_layerwise(const NetworkParams<double>& params, const DataSet& data) {
  data.check_shape();
  auto g = gram_layerwise(params, std::span<const Vec>(data.inputs));
  LayerwiseKernel out{KernelTensor(2, data.size()), std::move(g.contributions)};
  out.total.values.assign(g.total.values().begin(), g.total.values().end());
  return out;
}

// ---------------------------------------------------------------------------
// Hierarchy

/// How the directions of the extra indices are taken.
///  reevaluated: grad f_b is recomputed at the perturbed parameters of the
///               enclosing levels (the kernels that drive gradient flow).
///  fixed:       every grad f_b is taken at the base parameters, giving the
///               plain multilinear derivative used for a discrete Taylor step.
/// The two coincide for r = 3.
enum class DirectionMode { reevaluated, fixed };

inline constexpr int max_kernel_order = 5;

namespace detail {

// chosen holds beta indices outermost-first: chosen[0] is the last kernel index.
template <int Lifts, Scalar S>
void fill_hierarchy_level(const NetworkParams<S>& params, const DataSet& data, DirectionMode mode,
                          const std::vector<Vec>& base_directions, std::vector<std::size_t>& chosen,
                          KernelTensor& out) {
  const std::size_t n = data.size();
  if constexpr (Lifts == 0) {
    const auto g = gram_layerwise(params, std::span<const Vec>(data.inputs));
    std::vector<std::size_t> idx(out.order);
    for (std::size_t k = 0; k < chosen.size(); ++k) idx[2 + k] = chosen[chosen.size() - 1 - k];
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        idx[0] = a;
        idx[1] = b;
        out.at(idx) = top_tangent(g.total(a, b));
      }
  } else {
    for (std::size_t beta = 0; beta < n; ++beta) {
      chosen.push_back(beta);
      if (mode == DirectionMode::fixed || std::is_same_v<S, double>) {
        const auto lifted = lift_params(params, std::span<const double>(base_directions[beta]));
        fill_hierarchy_level<Lifts - 1>(lifted, data, mode, base_directions, chosen, out);
      } else {
        const auto dir = param_gradient(params, std::span<const double>(data.inputs[beta]));
        const auto lifted = lift_params(params, std::span<const S>(dir));
        fill_hierarchy_level<Lifts - 1>(lifted, data, mode, base_directions, chosen, out);
      }
      chosen.pop_back();
    }
  }
}

}  // namespace detail

/// K^(r) for one order r at the given parameters.
inline KernelTensor kernel_of_order(const NetworkParams<double>& params, const DataSet& data, int r,
                                    DirectionMode mode = DirectionMode::reevaluated) {
  data.check_shape();
  if (r < 2 || r > max_kernel_order)
    throw std::invalid_argument("kernel order " + std::to_string(r) + " outside supported range [2, " +
                                std::to_string(max_kernel_order) + "]");
  std::vector<Vec> base;
  if (r > 2)
    for (const auto& x : data.inputs) base.push_back(param_gradient(params, std::span<const double>(x)));
  KernelTensor out(r, data.size());
  std::vector<std::size_t> chosen;
  switch (r) {
    case 2: detail::fill_hierarchy_level<0>(params, data, mode, base, chosen, out); break;
    case 3: detail::fill_hierarchy_level<1>(params, data, mode, base, chosen, out); break;
    case 4: detail::fill_hierarchy_level<2>(params, data, mode, base, chosen, out); break;
    case 5: detail::fill_hierarchy_level<3>(params, data, mode, base, chosen, out); break;
    default: break;
  }
  return out;
}

/// K^(2), ..., K^(p).
inline std::vector<KernelTensor> kernel_hierarchy(const NetworkParams<double>& params, const DataSet& data, int p,
                                                  DirectionMode mode = DirectionMode::reevaluated) {
  if (p < 2 || p > max_kernel_order)
    throw std::invalid_argument("truncation order p = " + std::to_string(p) + " outside supported range [2, " +
                                std::to_string(max_kernel_order) + "]");
  std::vector<KernelTensor> out;
  for (int r = 2; r <= p; ++r) out.push_back(kernel_of_order(params, data, r, mode));
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

namespace detail {

inline KernelTensor fd_kernel(const NetworkParams<double>& params, const DataSet& data, int r, double h_base) {
  if (r == 2) return ntk_gram(params, data);
  const std::size_t n = data.size();
  KernelTensor out(r, n);
  const auto theta = params.flat();
  const double theta_scale = std::max(1.0, nthlab::norm_inf(theta));
  for (std::size_t beta = 0; beta < n; ++beta) {
    const Vec v = param_gradient(params, std::span<const double>(data.inputs[beta]));
    const double vmax = nthlab::norm_inf(v);
    if (vmax == 0.0) continue;  // zero direction: derivative is zero
    const double h = h_base * theta_scale / vmax;
    std::vector<double> plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
    for (std::size_t i = 0; i < plus.size(); ++i) {
      plus[i] += h * v[i];
      minus[i] -= h * v[i];
    }
    const auto kp = fd_kernel(NetworkParams<double>(params.shape(), params.activation(), std::move(plus)), data,
                              r - 1, h_base);
    const auto km = fd_kernel(NetworkParams<double>(params.shape(), params.activation(), std::move(minus)), data,
                              r - 1, h_base);
    for (std::size_t off = 0; off < kp.values.size(); ++off)
      out.values[off * n + beta] = (kp.values[off] - km.values[off]) / (2.0 * h);
  }
  return out;
}

}  // namespace detail

/// Central-difference step for an oracle that nests `levels` differences:
/// eps^(1/(2 + levels)) balances truncation against compounded roundoff.
inline double fd_oracle_step(int levels) {
  return std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (2.0 + levels));
}

/// K^(r) from nested central differences of K^(r-1) along grad f_b, with
/// every inner level recomputed from scratch at the displaced parameters and
/// the recursion ending at ntk_gram. Shares no code path with the dual towers.
inline KernelTensor kernel_fd_oracle(const NetworkParams<double>& params, const DataSet& data, int r,
                                     double h_base = 0.0) {
  data.check_shape();
  if (r < 3) throw std::invalid_argument("kernel_fd_oracle: order must be >= 3");
  if (h_base <= 0.0) h_base = fd_oracle_step(r - 2);
  return detail::fd_kernel(params, data, r, h_base);
}

}  // namespace nthlab
