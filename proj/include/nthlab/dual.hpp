#pragma once

// First-order perturbation scalars x + eps * t with eps^2 = 0. Nesting
// Dual<Dual<double>> carries one independent eps per level, so the top
// coefficient of a depth-k value is the mixed partial along k directions.

#include <concepts>
#include <cstddef>
#include <type_traits>

namespace nthlab {

template <class S>
struct Dual {
  S value{};
  S tangent{};

  constexpr Dual() = default;
  constexpr Dual(const S& v, const S& t) : value(v), tangent(t) {}
  /// A constant: zero tangent at every level.
  constexpr explicit Dual(double c) : value(c), tangent() {}

  constexpr bool operator==(const Dual&) const = default;

  constexpr Dual& operator+=(const Dual& o) {
    value += o.value;
    tangent += o.tangent;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    value -= o.value;
    tangent -= o.tangent;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    tangent = value * o.tangent + tangent * o.value;
    value *= o.value;
    return *this;
  }
  constexpr Dual& operator*=(double c) {
    value *= c;
    tangent *= c;
    return *this;
  }
};

template <class S>
constexpr Dual<S> operator+(const Dual<S>& a, const Dual<S>& b) {
  return {a.value + b.value, a.tangent + b.tangent};
}
template <class S>
constexpr Dual<S> operator-(const Dual<S>& a, const Dual<S>& b) {
  return {a.value - b.value, a.tangent - b.tangent};
}
template <class S>
constexpr Dual<S> operator-(const Dual<S>& a) {
  return {-a.value, -a.tangent};
}
template <class S>
constexpr Dual<S> operator*(const Dual<S>& a, const Dual<S>& b) {
  return {a.value * b.value, a.value * b.tangent + a.tangent * b.value};
}
template <class S>
constexpr Dual<S> operator*(double c, const Dual<S>& a) {
  return {c * a.value, c * a.tangent};
}
template <class S>
constexpr Dual<S> operator*(const Dual<S>& a, double c) {
  return c * a;
}
template <class S>
constexpr Dual<S> operator+(const Dual<S>& a, double c) {
  return {a.value + c, a.tangent};
}
template <class S>
constexpr Dual<S> operator+(double c, const Dual<S>& a) {
  return a + c;
}
template <class S>
constexpr Dual<S> operator-(const Dual<S>& a, double c) {
  return {a.value - c, a.tangent};
}
template <class S>
constexpr Dual<S> operator-(double c, const Dual<S>& a) {
  return {c - a.value, -a.tangent};
}

template <class T>
struct is_dual : std::false_type {};
template <class S>
struct is_dual<Dual<S>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

/// Number of perturbation levels wrapped around the base real.
template <class T>
inline constexpr int dual_depth_v = 0;
template <class S>
inline constexpr int dual_depth_v<Dual<S>> = 1 + dual_depth_v<S>;

/// Real part at the bottom of the tower.
constexpr double value_of(double x) { return x; }
template <class S>
constexpr double value_of(const Dual<S>& x) {
  return value_of(x.value);
}

/// Coefficient of eps_1 * ... * eps_k for a depth-k tower.
constexpr double top_tangent(double x) { return x; }
template <class S>
constexpr double top_tangent(const Dual<S>& x) {
  return top_tangent(x.tangent);
}

template <class S>
constexpr bool operator<(const Dual<S>& a, const Dual<S>& b) {
  return value_of(a) < value_of(b);
}

/// Operation set every scalar in the network / kernel pipeline goes through.
/// Activation application is provided separately by `activate`.
template <class S>
concept Scalar = std::regular<S> && requires(S a, S b, double c) {
  { a + b } -> std::convertible_to<S>;
  { a - b } -> std::convertible_to<S>;
  { a * b } -> std::convertible_to<S>;
  { -a } -> std::convertible_to<S>;
  { c * a } -> std::convertible_to<S>;
  { a += b };
  { value_of(a) } -> std::convertible_to<double>;
  { a < b } -> std::convertible_to<bool>;
};

/// Lifts a real constant into any scalar type.
template <Scalar S>
constexpr S constant(double c) {
  if constexpr (std::is_same_v<S, double>) {
    return c;
  } else {
    return S(c);
  }
}

}  // namespace nthlab
