#pragma once

// Width/seed sweeps, log-log slope fits and report emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nthlab/csv.hpp"
#include "nthlab/flow.hpp"
#include "nthlab/nth.hpp"

namespace nthlab {

// ---------------------------------------------------------------------------
// Slope fitting

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS residual in log space
  std::size_t points = 0;
};

/// Ordinary least squares of ln y on ln x.
inline SlopeFit fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_loglog_slope: x and y differ in length");
  if (x.size() < 3) throw std::invalid_argument("fit_loglog_slope: need at least 3 points");
  const std::size_t k = x.size();
  Vec lx(k), ly(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw std::invalid_argument("fit_loglog_slope: values must be positive (point " + std::to_string(i) + ")");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_loglog_slope: x values are all equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / static_cast<double>(k));
  fit.points = k;
  return fit;
}

inline double median(Vec v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---------------------------------------------------------------------------
// Deterministic parallel map: results land by index whatever the schedule.

inline std::size_t effective_threads(std::size_t requested, std::size_t tasks) {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::size_t t = requested == 0 ? hw : requested;
  return std::max<std::size_t>(1, std::min(t, tasks));
}

template <class R>
std::vector<R> parallel_map(std::size_t count, std::size_t threads, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t t = effective_threads(threads, count);
  if (t <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Sweep configuration and reports

enum class Experiment { drift, init_kernel, truncation, decay };

inline std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::drift: return "drift_scaling";
    case Experiment::init_kernel: return "init_kernel_scaling";
    case Experiment::truncation: return "truncation_error";
    case Experiment::decay: return "decay";
  }
  return "?";
}

inline Experiment parse_experiment(const std::string& s) {
  for (Experiment e : {Experiment::drift, Experiment::init_kernel, Experiment::truncation, Experiment::decay})
    if (s == experiment_name(e)) return e;
  throw std::invalid_argument("unknown experiment '" + s + "'");
}

struct SweepConfig {
  std::vector<std::size_t> widths{64, 128, 256, 512, 1024};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t n = 4;
  std::size_t d = 4;
  std::size_t H = 2;
  Activation activation = Activation::tanh();
  std::vector<int> p_list{2, 3};
  double t_end = 2.0;
  double dt = 1e-2;
  double snapshot_every = 0.1;
  std::uint64_t data_seed = 2024;
  std::vector<Experiment> experiments{Experiment::drift};
  std::size_t threads = 0;  // 0: hardware concurrency
  bool dt_audit = true;

  DataSet dataset() const { return synthetic_dataset(n, d, data_seed, LabelKind::gaussian, requirements()); }
  DataRequirements requirements() const {
    DataRequirements req;
    req.subset_cap = std::min<std::size_t>(req.subset_cap, d);
    return req;
  }
  NetworkConfig network(std::size_t m, std::uint64_t seed) const {
    return NetworkConfig{d, m, H, activation, 1.0, 1.0, seed};
  }
  Vec snapshot_times() const { return uniform_times(t_end, snapshot_every); }

  void validate(Experiment e) const {
    const bool needs_fit = e != Experiment::decay;
    if (needs_fit && widths.size() < 3)
      throw std::invalid_argument("widths: " + experiment_name(e) + " needs >= 3 widths for a slope fit");
    if (widths.empty()) throw std::invalid_argument("widths: at least one width is required");
    if (seeds.empty()) throw std::invalid_argument("seeds: at least one seed is required");
    if (e == Experiment::init_kernel && seeds.size() < 3)
      throw std::invalid_argument("seeds: init_kernel_scaling needs >= 3 seeds for the concentration check");
    if (n == 0 || d == 0 || H == 0) throw std::invalid_argument("n, d, H must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("dt: must be > 0");
    if (t_end < 0.0) throw std::invalid_argument("t_end: must be >= 0");
    if (e == Experiment::truncation) {
      if (p_list.empty()) throw std::invalid_argument("p: list must be nonempty");
      for (int p : p_list)
        if (p < 2 || p > max_kernel_order)
          throw std::invalid_argument("p: each order must be in [2, " + std::to_string(max_kernel_order) + "]");
    }
  }
};

struct RawRecord {
  std::string quantity;
  int p = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
  bool diverged = false;
};

struct SeriesSummary {
  std::string quantity;
  int p = 0;
  std::vector<std::size_t> widths;
  Vec medians;
  bool fitted = false;
  SlopeFit fit;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string measured;
  std::string expected;
};

struct ScalingReport {
  std::string experiment;
  std::vector<RawRecord> raw;
  std::vector<SeriesSummary> series;
  std::vector<Check> checks;
  std::vector<std::string> notes;
  bool degenerate = false;

  bool passed() const {
    return !degenerate && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  const SeriesSummary& find(const std::string& quantity, int p = 0) const {
    for (const auto& s : series)
      if (s.quantity == quantity && s.p == p) return s;
    throw std::invalid_argument("report has no series " + quantity);
  }
};

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

namespace detail {

inline Check bracket_check(const std::string& name, double value, double lo, double hi) {
  return {name, value >= lo && value <= hi, fmt(value), "[" + fmt(lo) + ", " + fmt(hi) + "]"};
}

// Seed medians per width over the non-diverged runs, then a slope fit when
// at least three widths have positive medians.
inline SeriesSummary summarize(const std::vector<RawRecord>& raw, const std::string& quantity, int p,
                               const std::vector<std::size_t>& widths) {
  SeriesSummary s;
  s.quantity = quantity;
  s.p = p;
  for (std::size_t m : widths) {
    Vec vals;
    for (const auto& r : raw)
      if (r.quantity == quantity && r.p == p && r.m == m && !r.diverged) vals.push_back(r.value);
    if (vals.empty()) continue;
    s.widths.push_back(m);
    s.medians.push_back(median(vals));
  }
  Vec x, y;
  for (std::size_t i = 0; i < s.widths.size(); ++i)
    if (s.medians[i] > 0.0) {
      x.push_back(static_cast<double>(s.widths[i]));
      y.push_back(s.medians[i]);
    }
  if (x.size() >= 3) {
    s.fit = fit_loglog_slope(x, y);
    s.fitted = true;
  }
  return s;
}

inline FlowConfig flow_config(const SweepConfig& cfg, int kernel_order, bool norms, bool lambda, double dt) {
  FlowConfig f;
  f.t_end = cfg.t_end;
  f.dt = dt;
  f.snapshot_times = cfg.snapshot_times();
  f.kernel_order = kernel_order;
  f.record_norms = norms;
  f.record_lambda_min = lambda;
  return f;
}

inline void note_divergences(ScalingReport& rep) {
  for (const auto& r : rep.raw)
    if (r.diverged)
      rep.notes.push_back("diverged run excluded: " + r.quantity + " m=" + std::to_string(r.m) +
                          " seed=" + std::to_string(r.seed) + (r.p ? " p=" + std::to_string(r.p) : ""));
}

// Relative change of a measured quantity between dt and dt/2 on one run.
inline Check dt_audit_check(const std::string& what, double coarse, double fine) {
  const double rel = std::abs(coarse - fine) / std::max(std::abs(fine), 1e-300);
  return {"dt-halving audit (" + what + ")", rel < 1e-3, fmt(rel), "< 0.001"};
}

struct Pair {
  std::size_t m;
  std::uint64_t seed;
};

inline std::vector<Pair> grid(const SweepConfig& cfg) {
  std::vector<Pair> out;
  for (std::size_t m : cfg.widths)
    for (std::uint64_t s : cfg.seeds) out.push_back({m, s});
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiments

/// max_t ||K_t - K_0||_inf against width, plus the norm and eigenvalue
/// stability properties along the same runs.
inline ScalingReport drift_scaling_experiment(const SweepConfig& cfg) {
  cfg.validate(Experiment::drift);
  const DataSet data = cfg.dataset();
  ScalingReport rep;
  rep.experiment = experiment_name(Experiment::drift);
  const auto cells = detail::grid(cfg);

  struct Out {
    double drift = 0.0, norm_ratio = 0.0, lambda_ratio = 0.0;
    bool diverged = false;
  };
  const auto runs = parallel_map<Out>(cells.size(), cfg.threads, [&](std::size_t i) {
    Out o;
    try {
      const auto p0 = init_params(cfg.network(cells[i].m, cells[i].seed));
      const auto traj = integrate_flow(p0, data, detail::flow_config(cfg, 2, true, true, cfg.dt));
      o.drift = max_kernel_drift(traj);
      const auto& s0 = traj.snapshots.front();
      o.lambda_ratio = 1e300;
      for (const auto& s : traj.snapshots) {
        for (std::size_t l = 0; l < s.layer_norms.size(); ++l)
          o.norm_ratio = std::max(o.norm_ratio, s.layer_norms[l] / s0.layer_norms[l]);
        o.norm_ratio = std::max(o.norm_ratio, s.output_norm / s0.output_norm);
        o.lambda_ratio = std::min(o.lambda_ratio, s.lambda_min / s0.lambda_min);
      }
    } catch (const IntegrationDiverged&) {
      o.diverged = true;
    }
    return o;
  });
  for (std::size_t i = 0; i < cells.size(); ++i) {
    rep.raw.push_back({"kernel_drift", 0, cells[i].m, cells[i].seed, runs[i].drift, runs[i].diverged});
    rep.raw.push_back({"max_norm_ratio", 0, cells[i].m, cells[i].seed, runs[i].norm_ratio, runs[i].diverged});
    rep.raw.push_back({"min_lambda_ratio", 0, cells[i].m, cells[i].seed, runs[i].lambda_ratio, runs[i].diverged});
  }
  detail::note_divergences(rep);

  rep.series.push_back(detail::summarize(rep.raw, "kernel_drift", 0, cfg.widths));
  const auto& s = rep.series.back();
  if (!s.fitted) {
    rep.degenerate = true;
    rep.notes.push_back("degenerate: fewer than 3 widths with nonzero drift (t_end = " + fmt(cfg.t_end) + ")");
    return rep;
  }
  rep.checks.push_back(detail::bracket_check("drift slope vs m", s.fit.slope, -1.25, -0.75));

  double worst_norm = 0.0, worst_lambda = 1e300;
  bool any_wide = false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (runs[i].diverged) continue;
    worst_norm = std::max(worst_norm, runs[i].norm_ratio);
    if (cells[i].m >= 256 && cfg.n <= 4) {
      worst_lambda = std::min(worst_lambda, runs[i].lambda_ratio);
      any_wide = true;
    }
  }
  rep.checks.push_back({"norms within 2x of initial", worst_norm <= 2.0, fmt(worst_norm), "<= 2"});
  if (any_wide)
    rep.checks.push_back({"lambda_min >= lambda_min(0)/2 (m >= 256)", worst_lambda >= 0.5, fmt(worst_lambda), ">= 0.5"});

  if (cfg.dt_audit) {
    const auto p0 = init_params(cfg.network(cfg.widths.front(), cfg.seeds.front()));
    const double coarse = max_kernel_drift(integrate_flow(p0, data, detail::flow_config(cfg, 2, false, false, cfg.dt)));
    const double fine =
        max_kernel_drift(integrate_flow(p0, data, detail::flow_config(cfg, 2, false, false, cfg.dt / 2)));
    rep.checks.push_back(detail::dt_audit_check("kernel drift", coarse, fine));
  }
  return rep;
}

/// ||K^(r)_0||_inf for r = 2, 3, 4 against width, and the across-seed
/// spread of the NTK entries.
inline ScalingReport init_kernel_scaling_experiment(const SweepConfig& cfg) {
  cfg.validate(Experiment::init_kernel);
  const DataSet data = cfg.dataset();
  ScalingReport rep;
  rep.experiment = experiment_name(Experiment::init_kernel);
  const auto cells = detail::grid(cfg);
  const auto runs = parallel_map<std::vector<KernelTensor>>(cells.size(), cfg.threads, [&](std::size_t i) {
    return kernel_hierarchy(init_params(cfg.network(cells[i].m, cells[i].seed)), data, 4);
  });
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (const auto& k : runs[i])
      rep.raw.push_back({"kernel_norm", k.order, cells[i].m, cells[i].seed, k.norm_inf(), false});

  // mean over entries of the across-seed standard deviation of K^(2)_0
  const std::size_t entries = KernelTensor::ipow(cfg.n, 2);
  for (std::size_t m : cfg.widths) {
    std::vector<const KernelTensor*> ks;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].m == m) ks.push_back(&runs[i].front());
    double mean_std = 0.0;
    for (std::size_t e = 0; e < entries; ++e) {
      double mu = 0.0, var = 0.0;
      for (const auto* k : ks) mu += k->values[e];
      mu /= static_cast<double>(ks.size());
      for (const auto* k : ks) var += (k->values[e] - mu) * (k->values[e] - mu);
      mean_std += std::sqrt(var / static_cast<double>(ks.size() - 1));
    }
    rep.raw.push_back({"ntk_seed_std", 2, m, 0, mean_std / static_cast<double>(entries), false});
  }

  for (int r = 2; r <= 4; ++r) rep.series.push_back(detail::summarize(rep.raw, "kernel_norm", r, cfg.widths));
  {
    SeriesSummary s;
    s.quantity = "ntk_seed_std";
    s.p = 2;
    for (const auto& r : rep.raw)
      if (r.quantity == "ntk_seed_std") {
        s.widths.push_back(r.m);
        s.medians.push_back(r.value);
      }
    s.fit = fit_loglog_slope(Vec(s.widths.begin(), s.widths.end()), s.medians);
    s.fitted = true;
    rep.series.push_back(s);
  }
  rep.checks.push_back(detail::bracket_check("K3 norm slope vs m", rep.find("kernel_norm", 3).fit.slope, -1.3, -0.7));
  rep.checks.push_back(detail::bracket_check("K4 norm slope vs m", rep.find("kernel_norm", 4).fit.slope, -1.3, -0.7));
  const auto& sd = rep.find("ntk_seed_std", 2);
  const double shrink = sd.medians.front() / sd.medians.back();
  rep.checks.push_back({"K2 across-seed std decreasing in m (trend)", sd.fit.slope < 0.0 && shrink >= 2.0,
                        "slope " + fmt(sd.fit.slope) + ", first/last " + fmt(shrink), "slope < 0, first/last >= 2"});
  rep.notes.push_back("K2 norm slope " + fmt(rep.find("kernel_norm", 2).fit.slope));
  return rep;
}

/// Exact flow against the truncated hierarchy for each p on shared snapshots.
inline ScalingReport truncation_error_experiment(const SweepConfig& cfg) {
  cfg.validate(Experiment::truncation);
  const DataSet data = cfg.dataset();
  ScalingReport rep;
  rep.experiment = experiment_name(Experiment::truncation);
  const auto cells = detail::grid(cfg);
  const Vec times = cfg.snapshot_times();

  struct Out {
    Vec df, dk, df0;  // per p
    bool diverged = false;
  };
  const auto run_one = [&](const NetworkParams<double>& p0, double dt) {
    Out o;
    try {
      const auto exact = integrate_flow(p0, data, detail::flow_config(cfg, 2, false, false, dt));
      for (int p : cfg.p_list) {
        const auto trunc = integrate_truncated(init_state(p0, data, p), data, cfg.t_end, dt, times);
        double df = 0.0, dk = 0.0;
        for (std::size_t k = 0; k < times.size(); ++k) {
          Vec diff(data.size());
          for (std::size_t b = 0; b < diff.size(); ++b) diff[b] = trunc[k].f[b] - exact.snapshots[k].outputs[b];
          df = std::max(df, norm2(diff));
          const auto& ke = exact.snapshots[k].kernel(2).values;
          const auto& kt = trunc[k].kernel(2).values;
          for (std::size_t e = 0; e < ke.size(); ++e) dk = std::max(dk, std::abs(ke[e] - kt[e]));
          if (k == 0) o.df0.push_back(norm2(diff));
        }
        o.df.push_back(df);
        o.dk.push_back(dk);
      }
    } catch (const IntegrationDiverged&) {
      o.diverged = true;
      o.df.assign(cfg.p_list.size(), 0.0);
      o.dk.assign(cfg.p_list.size(), 0.0);
      o.df0.assign(cfg.p_list.size(), 0.0);
    }
    return o;
  };
  const auto runs = parallel_map<Out>(cells.size(), cfg.threads, [&](std::size_t i) {
    return run_one(init_params(cfg.network(cells[i].m, cells[i].seed)), cfg.dt);
  });

  double worst_df0 = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = 0; j < cfg.p_list.size(); ++j) {
      const int p = cfg.p_list[j];
      rep.raw.push_back({"output_error", p, cells[i].m, cells[i].seed, runs[i].df[j], runs[i].diverged});
      rep.raw.push_back({"kernel_error", p, cells[i].m, cells[i].seed, runs[i].dk[j], runs[i].diverged});
      worst_df0 = std::max(worst_df0, runs[i].df0[j]);
    }
  detail::note_divergences(rep);
  rep.checks.push_back({"output error at t=0 is zero", worst_df0 == 0.0, fmt(worst_df0), "0"});

  for (int p : cfg.p_list) {
    const double target = -0.5 * p, tol = 0.35;
    for (const char* q : {"output_error", "kernel_error"}) {
      rep.series.push_back(detail::summarize(rep.raw, q, p, cfg.widths));
      const auto& s = rep.series.back();
      const std::string name = std::string(q) + " slope vs m, p=" + std::to_string(p);
      if (s.fitted)
        rep.checks.push_back(detail::bracket_check(name, s.fit.slope, target - tol, target + tol));
      else
        rep.checks.push_back({name, false, "no fit (fewer than 3 positive medians)", "fit"});
    }
  }

  if (cfg.dt_audit && cfg.t_end > 0.0) {
    const auto p0 = init_params(cfg.network(cfg.widths.front(), cfg.seeds.front()));
    const Out coarse = run_one(p0, cfg.dt), fine = run_one(p0, cfg.dt / 2);
    if (!coarse.diverged && !fine.diverged)
      rep.checks.push_back(detail::dt_audit_check(
          "output error, p=" + std::to_string(cfg.p_list.front()), coarse.df.front(), fine.df.front()));
  }
  return rep;
}

struct DecayOutcome {
  double lambda = 0.0;       // lambda_min(K_0)
  double worst_ratio = 0.0;  // max_t loss(t) / (loss(0) exp(-lambda t / (2n)))
  double time_to_100 = -1.0; // first time loss <= loss(0)/100, -1 if never
  double predicted_time = 0.0;
  double min_rate_margin = 0.0;  // min_t [-(d/dt)|r|^2/|r|^2 - 2 lambda_t/n] / (2 lambda_t/n)
  bool zero_loss = false;
};

/// Exponential decay of the training loss at rate set by lambda_min(K_0).
inline DecayOutcome decay_run(const NetworkParams<double>& p0, const DataSet& data, const FlowConfig& fcfg) {
  DecayOutcome out;
  const std::size_t n = data.size();
  out.lambda = min_eigenvalue_sym(ntk_gram(p0, data).as_matrix());
  if (!(out.lambda > 0.0))
    throw std::runtime_error("decay: lambda_min(K_0) = " + fmt(out.lambda) +
                             " <= 0; inputs are not in general position for this network");
  out.predicted_time = 2.0 * static_cast<double>(n) / out.lambda * std::log(100.0 * static_cast<double>(n));
  FlowConfig f = fcfg;
  f.kernel_order = 0;
  f.record_norms = false;
  f.record_lambda_min = true;
  const auto traj = integrate_flow(p0, data, f);
  const auto& s = traj.snapshots;
  const double l0 = s.front().loss;
  if (l0 == 0.0) {
    out.zero_loss = true;
    return out;
  }
  const double nd = static_cast<double>(n);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double bound = l0 * std::exp(-out.lambda * s[k].time / (2.0 * nd));
    out.worst_ratio = std::max(out.worst_ratio, s[k].loss / bound);
    if (out.time_to_100 < 0.0 && s[k].loss <= l0 / 100.0) {
      // log-linear interpolation between the bracketing snapshots
      const double a = std::log(s[k - 1].loss), b = std::log(s[k].loss), target = std::log(l0 / 100.0);
      out.time_to_100 = s[k - 1].time + (s[k].time - s[k - 1].time) * (a - target) / (a - b);
    }
  }
  out.min_rate_margin = 1e300;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) {
    const double h1 = s[k].time - s[k - 1].time, h2 = s[k + 1].time - s[k].time;
    const Vec y{2 * s[k - 1].loss, 2 * s[k].loss, 2 * s[k + 1].loss};  // |r|^2 * (1/n) scaling cancels
    const Vec d = detail::three_point_derivative(std::span(y).subspan(0, 1), std::span(y).subspan(1, 1),
                                                 std::span(y).subspan(2, 1), h1, h2);
    const double rate = -d[0] / y[1];
    const double floor = 2.0 * s[k].lambda_min / nd;
    out.min_rate_margin = std::min(out.min_rate_margin, (rate - floor) / floor);
  }
  return out;
}

inline ScalingReport decay_experiment(const SweepConfig& cfg) {
  cfg.validate(Experiment::decay);
  const DataSet data = cfg.dataset();
  ScalingReport rep;
  rep.experiment = experiment_name(Experiment::decay);
  const auto cells = detail::grid(cfg);
  for (const auto& c : cells)
    if (c.m < 256 * cfg.n)
      rep.notes.push_back("m=" + std::to_string(c.m) + " is below the wide regime 256 n = " +
                          std::to_string(256 * cfg.n));
  const FlowConfig fcfg = detail::flow_config(cfg, 0, false, true, cfg.dt);
  const auto runs = parallel_map<DecayOutcome>(cells.size(), cfg.threads, [&](std::size_t i) {
    return decay_run(init_params(cfg.network(cells[i].m, cells[i].seed)), data, fcfg);
  });
  double worst = 0.0, worst_margin = 1e300;
  Vec time_ratios;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& r = runs[i];
    rep.raw.push_back({"lambda_min", 0, cells[i].m, cells[i].seed, r.lambda, false});
    rep.raw.push_back({"bound_ratio", 0, cells[i].m, cells[i].seed, r.worst_ratio, false});
    rep.raw.push_back({"time_to_100x", 0, cells[i].m, cells[i].seed, r.time_to_100, false});
    rep.raw.push_back({"predicted_time", 0, cells[i].m, cells[i].seed, r.predicted_time, false});
    rep.raw.push_back({"rate_margin", 0, cells[i].m, cells[i].seed, r.min_rate_margin, false});
    worst = std::max(worst, r.worst_ratio);
    if (!r.zero_loss) worst_margin = std::min(worst_margin, r.min_rate_margin);
    if (r.time_to_100 > 0.0) time_ratios.push_back(r.predicted_time / r.time_to_100);
  }
  rep.checks.push_back({"loss <= loss(0) exp(-lambda t/(2n)) * 1.05", worst <= 1.05, fmt(worst), "<= 1.05"});
  if (worst_margin < 1e300)
    rep.checks.push_back({"decay rate >= 2 lambda_min(K_t)/n", worst_margin >= -1e-3, fmt(worst_margin),
                          ">= -0.001 (relative)"});
  if (time_ratios.empty()) {
    rep.notes.push_back("loss did not fall 100x before t_end = " + fmt(cfg.t_end));
  } else {
    const double med = median(time_ratios);
    rep.checks.push_back({"(2n/lambda) ln(100 n) / measured time-to-100x", med >= 1.0 && med <= 6.0, fmt(med),
                          "[1, 6]"});
  }
  return rep;
}

inline ScalingReport run_experiment(Experiment e, const SweepConfig& cfg) {
  switch (e) {
    case Experiment::drift: return drift_scaling_experiment(cfg);
    case Experiment::init_kernel: return init_kernel_scaling_experiment(cfg);
    case Experiment::truncation: return truncation_error_experiment(cfg);
    case Experiment::decay: return decay_experiment(cfg);
  }
  throw std::invalid_argument("unknown experiment");
}

// ---------------------------------------------------------------------------
// Report files

inline void write_raw_csv(std::ostream& out, const std::vector<ScalingReport>& reports) {
  out << "experiment,quantity,p,m,seed,value,status\n";
  for (const auto& rep : reports)
    for (const auto& r : rep.raw)
      out << rep.experiment << ',' << r.quantity << ',' << r.p << ',' << r.m << ',' << r.seed << ','
          << format_double(r.value) << ',' << (r.diverged ? "diverged" : "ok") << '\n';
}

inline void write_summary_csv(std::ostream& out, const std::vector<ScalingReport>& reports) {
  out << "experiment,quantity,p,m,median,slope,intercept,residual\n";
  for (const auto& rep : reports)
    for (const auto& s : rep.series)
      for (std::size_t i = 0; i < s.widths.size(); ++i) {
        out << rep.experiment << ',' << s.quantity << ',' << s.p << ',' << s.widths[i] << ','
            << format_double(s.medians[i]) << ',';
        if (s.fitted)
          out << format_double(s.fit.slope) << ',' << format_double(s.fit.intercept) << ','
              << format_double(s.fit.residual);
        else
          out << ",,";
        out << '\n';
      }
}

inline void write_verdict(std::ostream& out, const std::vector<ScalingReport>& reports) {
  for (const auto& rep : reports) {
    out << "[" << rep.experiment << "]" << (rep.degenerate ? " degenerate" : "") << '\n';
    for (const auto& c : rep.checks)
      out << (c.passed ? "PASS " : "FAIL ") << c.name << ": measured " << c.measured << ", expected " << c.expected
          << '\n';
    for (const auto& note : rep.notes) out << "note: " << note << '\n';
  }
}

}  // namespace nthlab
