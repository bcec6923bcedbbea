#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nthlab/dual.hpp"

namespace nthlab {

enum class ActivationKind { tanh, softplus, identity };

/// Smooth activation with an exact derivative ladder sigma^(0..max_order).
///
/// tanh: sigma^(k) = P_k(tanh z) with P_0(t) = t, P_{k+1}(t) = P_k'(t) (1 - t^2).
/// softplus(a) = ln(1 + e^{a z}) / a: sigma^(k) = a^{k-1} Q_k(s), s = logistic(a z),
/// Q_1(s) = s, Q_{k+1}(s) = Q_k'(s) s (1 - s).
class Activation {
 public:
  static constexpr int max_order = 16;

  static Activation tanh() { return Activation(ActivationKind::tanh, 1.0); }
  static Activation softplus(double sharpness) {
    if (!(sharpness > 0.0) || !std::isfinite(sharpness))
      throw std::invalid_argument("softplus sharpness must be positive");
    return Activation(ActivationKind::softplus, sharpness);
  }
  static Activation identity() { return Activation(ActivationKind::identity, 1.0); }

  static Activation parse(std::string_view name, double sharpness = 1.0) {
    if (name == "tanh") return tanh();
    if (name == "softplus") return softplus(sharpness);
    if (name == "identity") return identity();
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
  }

  ActivationKind kind() const noexcept { return kind_; }
  double sharpness() const noexcept { return sharpness_; }
  std::string name() const {
    switch (kind_) {
      case ActivationKind::tanh: return "tanh";
      case ActivationKind::softplus: return "softplus";
      case ActivationKind::identity: return "identity";
    }
    return "?";
  }

  /// sigma^(order)(z); order 0 is the activation itself.
  double derivative(int order, double z) const {
    if (order < 0 || order > max_order) throw std::invalid_argument("activation derivative order out of range");
    switch (kind_) {
      case ActivationKind::identity:
        return order == 0 ? z : (order == 1 ? 1.0 : 0.0);
      case ActivationKind::tanh:
        return horner(ladder_[order], std::tanh(z));
      case ActivationKind::softplus: {
        const double az = sharpness_ * z;
        if (order == 0) return (std::max(az, 0.0) + std::log1p(std::exp(-std::abs(az)))) / sharpness_;
        const double s = az >= 0.0 ? 1.0 / (1.0 + std::exp(-az)) : std::exp(az) / (1.0 + std::exp(az));
        return std::pow(sharpness_, order - 1) * horner(ladder_[order], s);
      }
    }
    return 0.0;
  }

  double operator()(double z) const { return derivative(0, z); }

 private:
  using Poly = std::vector<double>;  // coefficients, lowest degree first

  Activation(ActivationKind kind, double sharpness) : kind_(kind), sharpness_(sharpness) {
    if (kind_ == ActivationKind::identity) return;
    ladder_.resize(max_order + 1);
    // d/dz of a polynomial in the base function u(z) is P'(u) * u'(z), with
    // u' = 1 - u^2 for tanh and u' = a (s - s^2) for the logistic (a folded
    // into the power prefactor).
    const Poly chain = kind_ == ActivationKind::tanh ? Poly{1.0, 0.0, -1.0} : Poly{0.0, 1.0, -1.0};
    ladder_[0] = {0.0, 1.0};  // unused for softplus order 0
    ladder_[1] = kind_ == ActivationKind::tanh ? multiply(Poly{1.0}, chain) : Poly{0.0, 1.0};
    for (int k = 1; k < max_order; ++k) ladder_[k + 1] = multiply(differentiate(ladder_[k]), chain);
  }

  static Poly differentiate(const Poly& p) {
    if (p.size() <= 1) return {0.0};
    Poly out(p.size() - 1);
    for (std::size_t i = 1; i < p.size(); ++i) out[i - 1] = static_cast<double>(i) * p[i];
    return out;
  }
  static Poly multiply(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
  }
  static double horner(const Poly& p, double x) {
    double acc = 0.0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  ActivationKind kind_;
  double sharpness_;
  std::vector<Poly> ladder_;
};

/// sigma^(order) applied to any scalar. On a dual the chain rule consumes one
/// more rung of the ladder per nesting level; nothing falls back to differencing.
template <Scalar S>
S activate(const Activation& act, int order, const S& z) {
  if constexpr (std::is_same_v<S, double>) {
    return act.derivative(order, z);
  } else {
    return S(activate(act, order, z.value), activate(act, order + 1, z.value) * z.tangent);
  }
}

}  // namespace nthlab
