#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nthlab/numerics.hpp"

namespace nthlab {

class IntegrationDiverged : public std::runtime_error {
 public:
  explicit IntegrationDiverged(double last_good_time)
      : std::runtime_error("integration diverged after t = " + std::to_string(last_good_time)),
        last_good_time_(last_good_time) {}
  double last_good_time() const noexcept { return last_good_time_; }

 private:
  double last_good_time_;
};

/// Snapshot times spaced by `every` on [0, t_end], always including both ends.
inline Vec uniform_times(double t_end, double every) {
  if (t_end < 0.0) throw std::invalid_argument("t_end must be >= 0");
  Vec out{0.0};
  if (t_end == 0.0) return out;
  if (!(every > 0.0)) throw std::invalid_argument("snapshot spacing must be > 0");
  const auto count = static_cast<long>(std::floor(t_end / every + 1e-9));
  for (long k = 1; k <= count; ++k) {
    const double t = static_cast<double>(k) * every;
    if (t < t_end - 1e-12 * std::max(1.0, t_end)) out.push_back(t);
  }
  out.push_back(t_end);
  return out;
}

inline void check_snapshot_times(std::span<const double> times, double t_end) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || times[i] > t_end) throw std::invalid_argument("snapshot time outside [0, t_end]");
    if (i > 0 && !(times[i] > times[i - 1])) throw std::invalid_argument("snapshot times must strictly increase");
  }
}

/// Cubic Hermite interpolant on [t0, t0 + h] from endpoint values and slopes.
inline Vec hermite(std::span<const double> y0, std::span<const double> f0, std::span<const double> y1,
                   std::span<const double> f1, double h, double tau) {
  const double t2 = tau * tau, t3 = t2 * tau;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + tau, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  Vec out(y0.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (f0[i] == 0.0 && f1[i] == 0.0 && y0[i] == y1[i]) {
      out[i] = y0[i];  // frozen components stay bit-identical
      continue;
    }
    out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
  }
  return out;
}

/// Classical fixed-step RK4 on [0, t_end]. `rhs(y) -> dy/dt` (autonomous);
/// `observe(t, y)` is called once per requested snapshot time, with states
/// between grid points reconstructed by cubic Hermite interpolation from the
/// stored right-hand sides. The final step is shortened to land on t_end.
template <class Rhs, class Observe>
void integrate_rk4(Vec y, double t_end, double dt, std::span<const double> snapshot_times, Rhs&& rhs,
                   Observe&& observe) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (t_end < 0.0) throw std::invalid_argument("t_end must be >= 0");
  check_snapshot_times(snapshot_times, t_end);
  const auto on_grid = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };

  std::size_t next = 0;
  while (next < snapshot_times.size() && on_grid(snapshot_times[next], 0.0)) observe(snapshot_times[next++], y);
  if (t_end == 0.0) return;

  Vec f = rhs(y);
  if (!all_finite(f)) throw IntegrationDiverged(0.0);
  const auto steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));
  const std::size_t dim = y.size();
  Vec stage(dim), y_new(dim);
  double t = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const double t_next = k == steps ? t_end : static_cast<double>(k) * dt;
    const double h = t_next - t;

    for (std::size_t i = 0; i < dim; ++i) stage[i] = y[i] + 0.5 * h * f[i];
    const Vec k2 = rhs(stage);
    for (std::size_t i = 0; i < dim; ++i) stage[i] = y[i] + 0.5 * h * k2[i];
    const Vec k3 = rhs(stage);
    for (std::size_t i = 0; i < dim; ++i) stage[i] = y[i] + h * k3[i];
    const Vec k4 = rhs(stage);
    for (std::size_t i = 0; i < dim; ++i) y_new[i] = y[i] + (h / 6.0) * (f[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    if (!all_finite(y_new)) throw IntegrationDiverged(t);

    Vec f_new = rhs(y_new);
    if (!all_finite(f_new)) throw IntegrationDiverged(t);
    while (next < snapshot_times.size() && (snapshot_times[next] < t_next || on_grid(snapshot_times[next], t_next))) {
      const double s = snapshot_times[next++];
      if (on_grid(s, t_next)) {
        observe(s, y_new);
      } else {
        observe(s, hermite(y, f, y_new, f_new, h, (s - t) / h));
      }
    }
    std::swap(y, y_new);
    f = std::move(f_new);
    t = t_next;
  }
}

}  // namespace nthlab
