#pragma once

// Command dispatch, output directories and run manifests for the nthlab tool.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nthlab/checks.hpp"
#include "nthlab/config.hpp"

#ifndef NTHLAB_VERSION
#define NTHLAB_VERSION "0.0.0"
#endif

namespace nthlab {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_failed = 1, exit_usage = 2, exit_diverged = 3 };

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"flow", "kernels", "truncated", "compare", "scaling", "decay", "selftest"};
  return names;
}

struct RunOptions {
  std::string command;
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed_override;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Files written by one command; every path is relative to the run directory.
class RunOutput {
 public:
  explicit RunOutput(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    body(out);
    files_.push_back(name);
  }
  void adopt(const fs::path& path) { files_.push_back(fs::relative(path, dir_).string()); }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

struct CommandResult {
  std::vector<Check> checks;
  std::vector<std::string> notes;
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

class Manifest {
 public:
  Manifest(fs::path path, const RunConfig& cfg, const std::string& command) : path_(std::move(path)) {
    doc_["artifact_version"] = NTHLAB_VERSION;
    doc_["command"] = command;
    doc_["config_hash"] = cfg.hash_hex();
    doc_["config_source"] = cfg.source;
    nlohmann::json echo = nlohmann::json::object();
    for (const auto& [k, v] : cfg.canonical()) echo[k] = v;
    echo["threads"] = std::to_string(cfg.threads);
    doc_["config"] = echo;
    doc_["started"] = utc_timestamp();
    doc_["finished"] = nullptr;
    doc_["status"] = "running";
    doc_["outputs"] = nlohmann::json::array();
    flush();
  }

  void finish(const std::string& status, int exit_code, const std::vector<std::string>& outputs,
              const std::string& message = "") {
    doc_["finished"] = utc_timestamp();
    doc_["status"] = status;
    doc_["exit_code"] = exit_code;
    doc_["outputs"] = outputs;
    if (!message.empty()) doc_["message"] = message;
    flush();
  }

 private:
  void flush() {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    out << doc_.dump(2) << '\n';
  }
  fs::path path_;
  nlohmann::json doc_;
};

inline fs::path output_root(const std::optional<std::string>& out) {
  if (out) return *out;
  if (const char* env = std::getenv("NTHLAB_OUT"); env && *env) return env;
  return "nthlab-out";
}

inline fs::path run_directory(const fs::path& root, const RunConfig& cfg, const std::string& command) {
  return root / (cfg.hash_hex().substr(0, 12) + "-" + command);
}

namespace commands {

inline void write_verdict_lines(std::ostream& out, const std::string& title, const CommandResult& res) {
  out << "[" << title << "]\n";
  for (const auto& c : res.checks)
    out << (c.passed ? "PASS " : "FAIL ") << c.name << ": measured " << c.measured << ", expected " << c.expected
        << '\n';
  for (const auto& n : res.notes) out << "note: " << n << '\n';
}

inline double horizon(const RunConfig& cfg, const NetworkParams<double>& p0, const DataSet& data) {
  return cfg.t_end_auto ? auto_horizon(p0, data, cfg.dt) : cfg.t_end;
}

inline CommandResult flow(const RunConfig& cfg, RunOutput& out) {
  const DataSet data = cfg.dataset();
  const auto p0 = init_params(cfg.network(cfg.m, cfg.seed));
  FlowConfig fc;
  fc.t_end = horizon(cfg, p0, data);
  fc.dt = cfg.dt;
  fc.snapshot_times = uniform_times(fc.t_end, cfg.snapshot_every);
  fc.kernel_order = cfg.kernel_order;
  const auto traj = integrate_flow(p0, data, fc);
  out.write("trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(o, traj); });
  for (const auto& path : write_kernel_sidecars(out.dir(), traj)) out.adopt(path);

  CommandResult res;
  res.notes.push_back("t_end = " + fmt(fc.t_end) + (cfg.t_end_auto ? " (auto: loss down 100x or 50)" : ""));
  double worst = -1e300;
  for (std::size_t k = 1; k < traj.snapshots.size(); ++k)
    worst = std::max(worst, traj.snapshots[k].loss - traj.snapshots[k - 1].loss);
  if (traj.snapshots.size() > 1) {
    const double slack = 10 * std::pow(cfg.dt, 5);
    res.checks.push_back({"loss non-increasing", worst <= slack, fmt(worst), "<= " + fmt(slack)});
  }
  if (traj.snapshots.size() >= 3 && cfg.kernel_order >= 2) {
    const double d = descent_identity_check(traj).max_deviation;
    res.checks.push_back({"d/dt f vs -(1/n) K2 r", d < 1e-3, fmt(d), "< 0.001"});
  }
  if (traj.snapshots.size() >= 3 && cfg.kernel_order >= 3) {
    const double d = hierarchy_identity_check(traj, 2).max_deviation;
    res.checks.push_back({"d/dt K2 vs -(1/n) K3 r", d < 1e-3, fmt(d), "< 0.001"});
  }
  if (traj.snapshots.size() >= 3 && cfg.kernel_order >= 4) {
    const double d = hierarchy_identity_check(traj, 3).max_deviation;
    res.checks.push_back({"d/dt K3 vs -(1/n) K4 r", d < 1e-2, fmt(d), "< 0.01"});
  }
  if (cfg.kernel_order >= 2) res.notes.push_back("max kernel drift " + fmt(max_kernel_drift(traj)));
  return res;
}

inline CommandResult kernels(const RunConfig& cfg, RunOutput& out) {
  const DataSet data = cfg.dataset();
  const auto p0 = init_params(cfg.network(cfg.m, cfg.seed));
  const int top = std::max(2, cfg.kernel_order);
  const auto ks = kernel_hierarchy(p0, data, top);
  for (const auto& k : ks)
    out.write("kernel_order" + std::to_string(k.order) + ".csv", [&](std::ostream& o) { write_kernel_csv(o, k); });
  const auto layers = ntk_layerwise(p0, data);
  out.write("ntk_layers.csv", [&](std::ostream& o) {
    o << "layer,i,j,value\n";
    for (std::size_t l = 0; l < layers.contributions.size(); ++l)
      for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j = 0; j < data.size(); ++j)
          o << l + 1 << ',' << i << ',' << j << ',' << format_double(layers.contributions[l](i, j)) << '\n';
  });

  CommandResult res;
  const double e2 = relative_error_inf(layers.total.values, ntk_gram(p0, data).values);
  res.checks.push_back({"layerwise NTK = gradient Gram", e2 < 1e-12, fmt(e2), "< 1e-12"});
  if (top >= 3) {
    const double e3 = relative_error_inf(ks[1].values, kernel_fd_oracle(p0, data, 3).values);
    res.checks.push_back({"K3 vs finite-difference oracle", e3 < 1e-5, fmt(e3), "< 1e-5"});
  }
  if (top >= 4) {
    const double e4 = relative_error_inf(ks[2].values, kernel_fd_oracle(p0, data, 4).values);
    res.checks.push_back({"K4 vs finite-difference oracle", e4 < 1e-3, fmt(e4), "< 0.001"});
  }
  res.notes.push_back("lambda_min(K2) = " + fmt(min_eigenvalue_sym(layers.total.as_matrix())));
  return res;
}

inline CommandResult truncated(const RunConfig& cfg, RunOutput& out) {
  const DataSet data = cfg.dataset();
  const auto p0 = init_params(cfg.network(cfg.m, cfg.seed));
  const double t_end = horizon(cfg, p0, data);
  const Vec times = uniform_times(t_end, cfg.snapshot_every);
  CommandResult res;
  for (int p : cfg.p) {
    std::vector<HierarchyState> traj;
    std::vector<PredictionState> point;
    if (!cfg.x_new.empty()) {
      auto pred = predict_new_point(p0, data, cfg.x_new, p, t_end, cfg.dt, times, cfg.requirements());
      traj = std::move(pred.train);
      point = std::move(pred.point);
    } else {
      traj = integrate_truncated(init_state(p0, data, p), data, t_end, cfg.dt, times);
    }
    const std::string tag = "p" + std::to_string(p);
    out.write("truncated_" + tag + ".csv", [&](std::ostream& o) {
      o << "time";
      for (std::size_t i = 1; i <= data.size(); ++i) o << ",f_" << i;
      if (!point.empty()) o << ",f_x";
      o << '\n';
      for (std::size_t k = 0; k < traj.size(); ++k) {
        o << format_double(traj[k].t);
        for (double v : traj[k].f) o << ',' << format_double(v);
        if (!point.empty()) o << ',' << format_double(point[k].f_x);
        o << '\n';
      }
    });
    out.write("checkpoint_" + tag + ".csv", [&](std::ostream& o) { write_checkpoint(o, traj.back()); });

    bool frozen = true;
    for (const auto& s : traj) frozen = frozen && s.kernel(p).values == traj.front().kernel(p).values;
    res.checks.push_back({"top kernel constant, " + tag, frozen, frozen ? "constant" : "changed", "constant"});
    if (p == 2) {
      double worst = 0.0;
      for (const auto& s : traj)
        worst = std::max(worst, relative_error_inf(s.f, frozen_kernel_solution(traj.front().kernel(2), traj.front().f,
                                                                                data.labels, s.t)));
      res.checks.push_back({"p=2 vs matrix exponential", worst < 1e-8, fmt(worst), "< 1e-8"});
    }
  }
  res.notes.push_back("t_end = " + fmt(t_end));
  return res;
}

inline CommandResult compare(const RunConfig& cfg, RunOutput& out) {
  const DataSet data = cfg.dataset();
  const auto p0 = init_params(cfg.network(cfg.m, cfg.seed));
  const double t_end = horizon(cfg, p0, data);
  const Vec times = uniform_times(t_end, cfg.snapshot_every);
  FlowConfig fc;
  fc.t_end = t_end;
  fc.dt = cfg.dt;
  fc.snapshot_times = times;
  fc.kernel_order = 2;
  fc.record_norms = false;
  fc.record_lambda_min = false;
  fc.keep_params = !cfg.x_new.empty();
  const auto exact = integrate_flow(p0, data, fc);

  CommandResult res;
  double df0 = 0.0;
  out.write("compare.csv", [&](std::ostream& o) {
    o << "time,p,output_error,kernel_error" << (cfg.x_new.empty() ? "" : ",prediction_error") << '\n';
    for (int p : cfg.p) {
      std::vector<HierarchyState> traj;
      std::vector<PredictionState> point;
      if (!cfg.x_new.empty()) {
        auto pred = predict_new_point(p0, data, cfg.x_new, p, t_end, cfg.dt, times, cfg.requirements());
        traj = std::move(pred.train);
        point = std::move(pred.point);
      } else {
        traj = integrate_truncated(init_state(p0, data, p), data, t_end, cfg.dt, times);
      }
      for (std::size_t k = 0; k < traj.size(); ++k) {
        const auto& e = exact.snapshots[k];
        Vec diff(data.size());
        for (std::size_t b = 0; b < diff.size(); ++b) diff[b] = traj[k].f[b] - e.outputs[b];
        double dk = 0.0;
        for (std::size_t i = 0; i < e.kernel(2).values.size(); ++i)
          dk = std::max(dk, std::abs(e.kernel(2).values[i] - traj[k].kernel(2).values[i]));
        if (k == 0) df0 = std::max(df0, norm2(diff));
        o << format_double(e.time) << ',' << p << ',' << format_double(norm2(diff)) << ',' << format_double(dk);
        if (!point.empty()) {
          const double fx = forward(NetworkParams<double>(p0.shape(), p0.activation(), *e.params), cfg.x_new).output;
          o << ',' << format_double(std::abs(point[k].f_x - fx));
        }
        o << '\n';
      }
    }
  });
  res.checks.push_back({"output error at t=0", df0 == 0.0, fmt(df0), "0"});

  std::vector<int> taylor_orders;
  for (int p : cfg.p)
    if (p >= 3) taylor_orders.push_back(p);
  if (!taylor_orders.empty()) {
    out.write("taylor.csv", [&](std::ostream& o) {
      o << "p,eta,coefficients,relative_error\n";
      for (int p : taylor_orders)
        for (const auto mode : {TaylorCoefficients::derived, TaylorCoefficients::printed})
          for (double eta : cfg.eta)
            o << p << ',' << format_double(eta) << ',' << (mode == TaylorCoefficients::derived ? "derived" : "printed")
              << ',' << format_double(taylor_discrete_step(p0, data, eta, p, mode).relative_error) << '\n';
    });
    if (cfg.eta.size() >= 3) {
      for (int p : taylor_orders) {
        Vec errs;
        for (double eta : cfg.eta) errs.push_back(taylor_discrete_step(p0, data, eta, p).relative_error);
        bool positive = std::all_of(errs.begin(), errs.end(), [](double e) { return e > 0.0; });
        if (!positive) {
          res.notes.push_back("Taylor errors at roundoff for p=" + std::to_string(p) + "; slope not fitted");
          continue;
        }
        const double slope = fit_loglog_slope(cfg.eta, errs).slope;
        res.checks.push_back(nthlab::detail::bracket_check("Taylor step error slope, p=" + std::to_string(p), slope,
                                                           p - 1.3, p - 0.7));
      }
    }
  }
  res.notes.push_back("t_end = " + fmt(t_end));
  return res;
}

inline CommandResult scaling(const RunConfig& cfg, RunOutput& out) {
  SweepConfig sweep = cfg.sweep();
  CommandResult res;
  if (cfg.t_end_auto) {
    sweep.t_end = 2.0;
    res.notes.push_back("t_end auto resolves to 2 for width sweeps");
  }
  std::vector<ScalingReport> reports;
  for (Experiment e : sweep.experiments) reports.push_back(run_experiment(e, sweep));
  out.write("raw.csv", [&](std::ostream& o) { write_raw_csv(o, reports); });
  out.write("summary.csv", [&](std::ostream& o) { write_summary_csv(o, reports); });
  out.write("verdict.txt", [&](std::ostream& o) { write_verdict(o, reports); });
  for (const auto& r : reports) {
    for (const auto& c : r.checks) res.checks.push_back(c);
    if (r.degenerate) res.checks.push_back({r.experiment + " slope fit", false, "degenerate", "3 or more usable widths"});
  }
  return res;
}

inline CommandResult decay(const RunConfig& cfg, RunOutput& out) {
  SweepConfig sweep = cfg.sweep();
  sweep.widths = {cfg.m};
  CommandResult res;
  if (cfg.t_end_auto) {
    const auto p0 = init_params(cfg.network(cfg.m, cfg.seeds.front()));
    sweep.t_end = auto_horizon(p0, cfg.dataset(), cfg.dt);
    res.notes.push_back("t_end auto = " + fmt(sweep.t_end) + " from the first seed");
  }
  const auto rep = decay_experiment(sweep);
  out.write("raw.csv", [&](std::ostream& o) { write_raw_csv(o, {rep}); });
  out.write("verdict.txt", [&](std::ostream& o) { write_verdict(o, {rep}); });
  res.checks = rep.checks;
  res.notes.insert(res.notes.end(), rep.notes.begin(), rep.notes.end());
  return res;
}

}  // namespace commands

/// Executes one command for an already parsed config; returns the exit code.
int run_selftest(const RunConfig& cfg, RunOutput& out, std::ostream& log);

inline int run_with_config(const RunOptions& opt, RunConfig cfg, std::ostream& log) {
  if (opt.threads) cfg.threads = *opt.threads;
  if (opt.seed_override) apply_seed_override(cfg, *opt.seed_override);
  const fs::path dir = run_directory(output_root(opt.out), cfg, opt.command);
  fs::create_directories(dir);
  Manifest manifest(dir / "manifest.json", cfg, opt.command);
  RunOutput out(dir);
  try {
    if (opt.command == "selftest") {
      const int code = run_selftest(cfg, out, log);
      manifest.finish(code == exit_ok ? "ok" : "failed", code, out.files());
      return code;
    }
    CommandResult res;
    if (opt.command == "flow") res = commands::flow(cfg, out);
    else if (opt.command == "kernels") res = commands::kernels(cfg, out);
    else if (opt.command == "truncated") res = commands::truncated(cfg, out);
    else if (opt.command == "compare") res = commands::compare(cfg, out);
    else if (opt.command == "scaling") res = commands::scaling(cfg, out);
    else if (opt.command == "decay") res = commands::decay(cfg, out);
    if (opt.command != "scaling" && opt.command != "decay")
      out.write("verdict.txt", [&](std::ostream& o) { commands::write_verdict_lines(o, opt.command, res); });
    commands::write_verdict_lines(log, opt.command, res);
    log << "output: " << dir.string() << '\n';
    const int code = res.passed() ? exit_ok : exit_failed;
    manifest.finish(code == exit_ok ? "ok" : "failed", code, out.files());
    return code;
  } catch (const IntegrationDiverged& e) {
    log << "error: " << e.what() << '\n';
    manifest.finish("diverged", exit_diverged, out.files(), e.what());
    return exit_diverged;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    manifest.finish("usage", exit_usage, out.files(), e.what());
    return exit_usage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    manifest.finish("error", exit_failed, out.files(), e.what());
    return exit_failed;
  }
}

inline int run(const RunOptions& opt, std::ostream& log) {
  if (std::find(command_names().begin(), command_names().end(), opt.command) == command_names().end()) {
    log << "error: unknown command '" << opt.command << "'\n";
    return exit_usage;
  }
  RunConfig cfg;
  try {
    if (!opt.config_path.empty())
      cfg = parse_config(opt.config_path);
    else if (opt.command != "selftest")
      throw ConfigError("--config is required for '" + opt.command + "'");
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return exit_usage;
  }
  return run_with_config(opt, std::move(cfg), log);
}

/// Byte-compares every CSV in two run directories.
inline bool same_csv_outputs(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().extension() == ".csv") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    why = "no CSV outputs";
    return false;
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const auto& n : names) {
    if (!fs::exists(b / n)) {
      why = n + " missing in second run";
      return false;
    }
    if (slurp(a / n) != slurp(b / n)) {
      why = n + " differs";
      return false;
    }
  }
  why = std::to_string(names.size()) + " CSV files identical";
  return true;
}

/// Runs `command` twice on the same config into separate roots and compares.
inline Check reproducibility(const std::string& command, const RunConfig& cfg, const fs::path& scratch) {
  std::ostringstream sink;
  std::vector<fs::path> dirs;
  for (int k = 0; k < 2; ++k) {
    RunOptions opt;
    opt.command = command;
    opt.out = (scratch / ("run" + std::to_string(k))).string();
    const int code = run_with_config(opt, cfg, sink);
    if (code == exit_usage || code == exit_diverged)
      return {"reproducible " + command + " outputs", false, "run failed with exit " + std::to_string(code), "exit 0/1"};
    dirs.push_back(run_directory(*opt.out, cfg, command));
  }
  std::string why;
  const bool same = same_csv_outputs(dirs[0], dirs[1], why);
  return {"reproducible " + command + " outputs", same, why, "byte-identical CSVs"};
}

inline int run_selftest(const RunConfig& cfg, RunOutput& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Check> all;
  auto add = [&](std::vector<Check> cs) { all.insert(all.end(), cs.begin(), cs.end()); };
  add({checks::gradient(10, 5, 1)});
  add({checks::ntk_identity(10, 2)});
  add(checks::hierarchy_oracle(8, 3, 1, 3));
  add(checks::hierarchy_along_flow(32, 3, 4, 0.5, 5e-3, 0.05));
  add({checks::monotone_loss(16, 3, 2, 1.0, 1e-2)});
  add({checks::frozen_kernel(16, 3, 5, 2.0, 1e-2)});
  add(checks::taylor_order(8, 3, 6, {1e-2, 5e-3, 2.5e-3}, {3, 4}));
  add({checks::prediction_consistency(8, 3, 7, 0.5, 1e-2)});

  {
    RunConfig a = parse_config_text("n = 3\nd = 3\nm = 8\nseed = 1\n");
    RunConfig b = parse_config_text("seed = 1\nm = 8\n# reordered\nd = 3\nn = 3\n");
    all.push_back({"config hash stable under key reordering", a.hash() == b.hash(), a.hash_hex() + " / " + b.hash_hex(),
                   "equal"});
  }
  {
    RunConfig tiny = parse_config_text("n = 3\nd = 3\nH = 2\nm = 8\nseed = 3\nt_end = 0.2\ndt = 0.02\n"
                                       "snapshot_every = 0.05\nkernel_order = 3\np = 2,3\n");
    tiny.threads = cfg.threads;
    const fs::path scratch = out.dir() / "scratch";
    all.push_back(reproducibility("compare", tiny, scratch));
    fs::remove_all(scratch);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  CommandResult res;
  res.checks = all;
  res.notes.push_back("elapsed " + fmt(secs) + " s");
  out.write("selftest.txt", [&](std::ostream& o) { commands::write_verdict_lines(o, "selftest", res); });
  commands::write_verdict_lines(log, "selftest", res);
  return res.passed() ? exit_ok : exit_failed;
}

inline std::string usage_text() {
  std::string out = "usage: nthlab <command> --config <path> [--out <dir>] [--threads N] [--seed-override S]\ncommands:";
  for (const auto& c : command_names()) out += " " + c;
  out += "\nNTHLAB_OUT sets the default output root.\n";
  return out;
}

inline int cli_main(int argc, char** argv, std::ostream& log = std::cout) {
  CLI::App app{"nthlab: neural tangent hierarchy numerical lab"};
  RunOptions opt;
  std::string out;
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  app.add_option("command", opt.command, "one of: flow kernels truncated compare scaling decay selftest")->required();
  app.add_option("--config", opt.config_path, "config file (key = value)");
  auto* out_opt = app.add_option("--out", out, "output root (default $NTHLAB_OUT or ./nthlab-out)");
  auto* threads_opt = app.add_option("--threads", threads, "cap on worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed-override", seed, "replace the network seed(s)");
  app.set_version_flag("--version", std::string(NTHLAB_VERSION));
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    log << app.help() << usage_text();
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    log << NTHLAB_VERSION << '\n';
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    log << "error: " << e.what() << '\n' << usage_text();
    return exit_usage;
  }
  if (*out_opt) opt.out = out;
  if (*threads_opt) opt.threads = threads;
  if (*seed_opt) opt.seed_override = seed;
  const int code = run(opt, log);
  if (code == exit_usage) log << usage_text();
  return code;
}

}  // namespace nthlab
