#pragma once

// Fully-connected network without biases:
//   x^(0) = x,  x^(l) = sigma(W^(l) x^(l-1)) / sqrt(m),  f = a^T x^(H).
// Everything downstream of the parameters is written once against the
// Scalar contract so that the same code runs on reals and on dual towers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nthlab/activation.hpp"
#include "nthlab/data.hpp"
#include "nthlab/dual.hpp"
#include "nthlab/numerics.hpp"

namespace nthlab {

/// Layer sizes and the canonical flat layout
/// [W^(1) row-major | W^(2) | ... | W^(H) | a].
struct NetworkShape {
  std::size_t d = 1;
  std::size_t m = 1;
  std::size_t H = 1;

  std::size_t layer_cols(std::size_t l) const { return l == 0 ? d : m; }
  std::size_t layer_offset(std::size_t l) const { return l == 0 ? 0 : m * d + (l - 1) * m * m; }
  std::size_t layer_size(std::size_t l) const { return m * layer_cols(l); }
  std::size_t output_offset() const { return m * d + (H - 1) * m * m; }
  std::size_t param_count() const { return m * d + (H - 1) * m * m + m; }

  bool operator==(const NetworkShape&) const = default;
};

struct NetworkConfig {
  std::size_t d = 1;
  std::size_t m = 1;
  std::size_t H = 1;
  Activation activation = Activation::tanh();
  double sigma_w = 1.0;
  double sigma_a = 1.0;
  std::uint64_t seed = 0;

  NetworkShape shape() const { return {d, m, H}; }

  void validate() const {
    if (d < 1) throw std::invalid_argument("network: input dimension d must be >= 1");
    if (m < 1) throw std::invalid_argument("network: width m must be >= 1");
    if (H < 1) throw std::invalid_argument("network: depth H must be >= 1");
    if (!(sigma_w > 0.0)) throw std::invalid_argument("network: sigma_w must be > 0");
    if (!(sigma_a > 0.0)) throw std::invalid_argument("network: sigma_a must be > 0");
  }
};

template <Scalar S>
class NetworkParams {
 public:
  NetworkParams(NetworkShape shape, Activation activation, std::vector<S> theta)
      : shape_(shape), activation_(std::move(activation)), theta_(std::move(theta)) {
    if (theta_.size() != shape_.param_count())
      throw std::invalid_argument("NetworkParams: expected " + std::to_string(shape_.param_count()) +
                                  " parameters, got " + std::to_string(theta_.size()));
  }

  const NetworkShape& shape() const noexcept { return shape_; }
  const Activation& activation() const noexcept { return activation_; }
  std::size_t size() const noexcept { return theta_.size(); }

  std::span<const S> flat() const noexcept { return theta_; }
  std::span<S> flat() noexcept { return theta_; }

  /// W^(l+1), row-major m x layer_cols(l); l is zero-based.
  std::span<const S> layer(std::size_t l) const {
    return std::span<const S>(theta_).subspan(shape_.layer_offset(l), shape_.layer_size(l));
  }
  std::span<const S> output_weights() const {
    return std::span<const S>(theta_).subspan(shape_.output_offset(), shape_.m);
  }

  std::vector<S> flatten() const { return theta_; }

  static NetworkParams unflatten(NetworkShape shape, Activation activation, std::vector<S> flat) {
    return NetworkParams(shape, std::move(activation), std::move(flat));
  }

 private:
  NetworkShape shape_;
  Activation activation_;
  std::vector<S> theta_;
};

/// Draws W^(l)_ij ~ N(0, sigma_w^2) layer by layer, then a_i ~ N(0, sigma_a^2).
inline NetworkParams<double> init_params(const NetworkConfig& config, RngStream rng) {
  config.validate();
  const NetworkShape shape = config.shape();
  std::vector<double> theta;
  theta.reserve(shape.param_count());
  for (std::size_t l = 0; l < shape.H; ++l) {
    Mat w = gaussian_matrix(rng, shape.m, shape.layer_cols(l), config.sigma_w);
    theta.insert(theta.end(), w.values().begin(), w.values().end());
  }
  Mat a = gaussian_matrix(rng, shape.m, 1, config.sigma_a);
  theta.insert(theta.end(), a.values().begin(), a.values().end());
  return NetworkParams<double>(shape, config.activation, std::move(theta));
}

inline NetworkParams<double> init_params(const NetworkConfig& config) {
  return init_params(config, RngStream(config.seed, 0));
}

template <Scalar S>
struct ForwardTrace {
  std::vector<std::vector<S>> preactivations;  // z^(l), l = 1..H
  std::vector<std::vector<S>> activations;     // x^(l), l = 0..H
  S output{};
};

template <Scalar S>
ForwardTrace<S> forward(const NetworkParams<S>& params, std::span<const double> x) {
  const NetworkShape& shape = params.shape();
  if (x.size() != shape.d)
    throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(shape.d));
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(shape.m));
  ForwardTrace<S> trace;
  trace.preactivations.reserve(shape.H);
  trace.activations.reserve(shape.H + 1);

  std::vector<S> input(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) input[j] = constant<S>(x[j]);
  trace.activations.push_back(std::move(input));

  for (std::size_t l = 0; l < shape.H; ++l) {
    const auto w = params.layer(l);
    const auto& prev = trace.activations.back();
    const std::size_t cols = shape.layer_cols(l);
    std::vector<S> z(shape.m);
    std::vector<S> act(shape.m);
    for (std::size_t i = 0; i < shape.m; ++i) {
      S acc{};
      const S* row = w.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) acc += row[j] * prev[j];
      z[i] = acc;
      act[i] = inv_sqrt_m * activate(params.activation(), 0, acc);
    }
    trace.preactivations.push_back(std::move(z));
    trace.activations.push_back(std::move(act));
  }

  const auto a = params.output_weights();
  const auto& top = trace.activations.back();
  S f{};
  for (std::size_t i = 0; i < shape.m; ++i) f += a[i] * top[i];
  trace.output = f;
  return trace;
}

/// Backward vectors b_l = df/dz^(l):
///   b_H = sigma'_H a / sqrt(m),  b_l = sigma'_l (W^(l+1))^T b_(l+1) / sqrt(m).
/// The gradient block of W^(l) is the outer product b_l (x^(l-1))^T.
template <Scalar S>
std::vector<std::vector<S>> backward_vectors(const NetworkParams<S>& params, const ForwardTrace<S>& trace) {
  const NetworkShape& shape = params.shape();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(shape.m));
  std::vector<std::vector<S>> b(shape.H);

  const auto a = params.output_weights();
  b[shape.H - 1].resize(shape.m);
  for (std::size_t i = 0; i < shape.m; ++i)
    b[shape.H - 1][i] = inv_sqrt_m * (activate(params.activation(), 1, trace.preactivations[shape.H - 1][i]) * a[i]);

  for (std::size_t l = shape.H - 1; l-- > 0;) {
    const auto w = params.layer(l + 1);  // m x m
    const auto& next = b[l + 1];
    std::vector<S> pulled(shape.m);
    for (std::size_t i = 0; i < shape.m; ++i) {
      const S* row = w.data() + i * shape.m;
      const S bi = next[i];
      for (std::size_t j = 0; j < shape.m; ++j) pulled[j] += row[j] * bi;
    }
    b[l].resize(shape.m);
    for (std::size_t i = 0; i < shape.m; ++i)
      b[l][i] = inv_sqrt_m * (activate(params.activation(), 1, trace.preactivations[l][i]) * pulled[i]);
  }
  return b;
}

/// grad_theta f in canonical flat order.
template <Scalar S>
std::vector<S> param_gradient(const NetworkParams<S>& params, const ForwardTrace<S>& trace) {
  const NetworkShape& shape = params.shape();
  const auto b = backward_vectors(params, trace);
  std::vector<S> grad(shape.param_count());
  for (std::size_t l = 0; l < shape.H; ++l) {
    const std::size_t cols = shape.layer_cols(l);
    S* block = grad.data() + shape.layer_offset(l);
    const auto& xin = trace.activations[l];
    for (std::size_t i = 0; i < shape.m; ++i)
      for (std::size_t j = 0; j < cols; ++j) block[i * cols + j] = b[l][i] * xin[j];
  }
  S* out = grad.data() + shape.output_offset();
  for (std::size_t i = 0; i < shape.m; ++i) out[i] = trace.activations[shape.H][i];
  return grad;
}

template <Scalar S>
std::vector<S> param_gradient(const NetworkParams<S>& params, std::span<const double> x) {
  return param_gradient(params, forward(params, x));
}

inline Vec outputs(const NetworkParams<double>& params, const DataSet& data) {
  Vec f(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) f[i] = forward(params, data.inputs[i]).output;
  return f;
}

inline Vec residuals(const NetworkParams<double>& params, const DataSet& data) {
  Vec r = outputs(params, data);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= data.labels[i];
  return r;
}

/// (1/2n) sum_alpha (f(x_alpha) - y_alpha)^2
template <Scalar S>
S loss(const NetworkParams<S>& params, const DataSet& data) {
  data.check_shape();
  S total{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const S r = forward(params, data.inputs[i]).output - data.labels[i];
    total += r * r;
  }
  return (0.5 / static_cast<double>(data.size())) * total;
}

inline double loss_from_residuals(std::span<const double> r) {
  return 0.5 * dot(r, r) / static_cast<double>(r.size());
}

}  // namespace nthlab
