#pragma once

#include <span>
#include <string>
#include <type_traits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nthlab/dual.hpp"
#include "nthlab/network.hpp"

namespace nthlab {

/// theta + eps * v: each entry becomes Dual{theta_i, v_i}. Lifting already
/// dual values adds one more nesting level.
template <Scalar S>
std::vector<Dual<S>> lift(std::span<const S> values, std::span<const S> direction) {
  if (values.size() != direction.size())
    throw std::invalid_argument("lift: direction has " + std::to_string(direction.size()) + " entries, expected " +
                                std::to_string(values.size()));
  std::vector<Dual<S>> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = Dual<S>(values[i], direction[i]);
  return out;
}

/// Lifts along a real direction regardless of how deep the values already are.
template <Scalar S>
std::vector<Dual<S>> lift_constant_direction(std::span<const S> values, std::span<const double> direction) {
  if (values.size() != direction.size()) throw std::invalid_argument("lift: direction length mismatch");
  std::vector<Dual<S>> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = Dual<S>(values[i], constant<S>(direction[i]));
  return out;
}

template <Scalar S>
NetworkParams<Dual<S>> lift_params(const NetworkParams<S>& params, std::span<const std::type_identity_t<S>> direction) {
  return NetworkParams<Dual<S>>(params.shape(), params.activation(), lift(params.flat(), direction));
}

template <Scalar S>
  requires(!std::is_same_v<S, double>)
NetworkParams<Dual<S>> lift_params(const NetworkParams<S>& params, std::span<const double> direction) {
  return NetworkParams<Dual<S>>(params.shape(), params.activation(),
                                lift_constant_direction(params.flat(), direction));
}

/// Exact Gateaux derivative d/ds g(theta + s v)|_0 of a generic scalar
/// function of the parameters. Returns (g(theta), derivative).
template <Scalar S, class G>
std::pair<S, S> directional_derivative(G&& g, const NetworkParams<S>& params,
                                       std::span<const std::type_identity_t<S>> direction) {
  const Dual<S> out = g(lift_params(params, direction));
  return {out.value, out.tangent};
}

}  // namespace nthlab
