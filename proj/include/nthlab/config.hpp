#pragma once

// Run configuration: flat `key = value` files, `#` comments, comma lists.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nthlab/csv.hpp"
#include "nthlab/harness.hpp"

namespace nthlab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // data and network
  std::size_t n = 4;
  std::size_t d = 4;
  std::size_t H = 2;
  std::size_t m = 256;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 2024;
  std::string data;  // optional CSV path; synthetic data when empty
  std::string activation = "tanh";
  double sharpness = 1.0;  // softplus only
  double sigma_w = 1.0;
  double sigma_a = 1.0;

  // dynamics
  bool t_end_auto = true;
  double t_end = 2.0;
  double dt = 1e-2;
  double snapshot_every = 0.1;
  int kernel_order = 3;
  std::vector<int> p{2, 3};
  Vec x_new;
  Vec eta{1e-2, 5e-3, 2.5e-3};

  // sweeps
  std::vector<std::size_t> widths{64, 128, 256, 512, 1024};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::string> experiments{"drift_scaling"};
  bool dt_audit = true;
  std::size_t threads = 0;

  std::string source;  // path it was read from

  Activation make_activation() const { return Activation::parse(activation, sharpness); }
  NetworkConfig network(std::size_t width, std::uint64_t s) const {
    return NetworkConfig{d, width, H, make_activation(), sigma_w, sigma_a, s};
  }
  DataRequirements requirements() const {
    DataRequirements req;
    req.subset_cap = std::min<std::size_t>(req.subset_cap, d);
    return req;
  }
  DataSet dataset() const {
    if (!data.empty()) {
      std::filesystem::path path(data);
      if (path.is_relative() && !source.empty()) path = std::filesystem::path(source).parent_path() / path;
      DataSet ds = load_dataset_csv(path.string(), requirements());
      if (ds.dim() != d)
        throw ConfigError("d: config says " + std::to_string(d) + " but " + data + " has " + std::to_string(ds.dim()) +
                          " input columns");
      return ds;
    }
    return synthetic_dataset(n, d, data_seed, LabelKind::gaussian, requirements());
  }
  SweepConfig sweep() const {
    SweepConfig s;
    s.widths = widths;
    s.seeds = seeds;
    s.n = n;
    s.d = d;
    s.H = H;
    s.activation = make_activation();
    s.p_list = p;
    s.t_end = t_end;
    s.dt = dt;
    s.snapshot_every = snapshot_every;
    s.data_seed = data_seed;
    s.experiments.clear();
    for (const auto& e : experiments) s.experiments.push_back(parse_experiment(e));
    s.threads = threads;
    s.dt_audit = dt_audit;
    return s;
  }
  int max_p() const { return *std::max_element(p.begin(), p.end()); }

  /// Every key with its effective value, sorted by key.
  std::map<std::string, std::string> canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(v[i]);
    else if constexpr (std::is_same_v<T, std::string>)
      out += v[i];
    else
      out += std::to_string(v[i]);
  }
  return out;
}

inline std::vector<std::string> split_list(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* b = text.data();
  const char* e = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || ptr != e || text.empty())
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<T>(key, item));
  return out;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

inline std::map<std::string, std::string> RunConfig::canonical() const {
  using detail::join;
  std::map<std::string, std::string> c;
  c["n"] = std::to_string(n);
  c["d"] = std::to_string(d);
  c["H"] = std::to_string(H);
  c["m"] = std::to_string(m);
  c["seed"] = std::to_string(seed);
  c["data_seed"] = std::to_string(data_seed);
  c["data"] = data;
  c["activation"] = activation;
  c["sharpness"] = format_double(sharpness);
  c["sigma_w"] = format_double(sigma_w);
  c["sigma_a"] = format_double(sigma_a);
  c["t_end"] = t_end_auto ? "auto" : format_double(t_end);
  c["dt"] = format_double(dt);
  c["snapshot_every"] = format_double(snapshot_every);
  c["kernel_order"] = std::to_string(kernel_order);
  c["p"] = join(p);
  c["x_new"] = join(x_new);
  c["eta"] = join(eta);
  c["widths"] = join(widths);
  c["seeds"] = join(seeds);
  c["experiment"] = join(experiments);
  c["dt_audit"] = dt_audit ? "true" : "false";
  return c;
}

// threads is not hashed.
inline std::uint64_t RunConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : canonical()) text += k + "=" + v + "\n";
  return detail::fnv1a(text);
}

inline std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "n",  "d",              "H",            "m",      "seed", "data_seed", "data",   "activation",
      "sharpness", "sigma_w", "sigma_a",      "t_end",  "dt",   "snapshot_every", "kernel_order", "p",
      "x_new", "eta",         "widths",       "seeds",  "experiment", "dt_audit", "threads"};
  return keys;
}

inline void apply_key(RunConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "n") c.n = parse_number<std::size_t>(key, v);
  else if (key == "d") c.d = parse_number<std::size_t>(key, v);
  else if (key == "H") c.H = parse_number<std::size_t>(key, v);
  else if (key == "m") c.m = parse_number<std::size_t>(key, v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "data_seed") c.data_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "data") c.data = v;
  else if (key == "activation") c.activation = v;
  else if (key == "sharpness") c.sharpness = parse_number<double>(key, v);
  else if (key == "sigma_w") c.sigma_w = parse_number<double>(key, v);
  else if (key == "sigma_a") c.sigma_a = parse_number<double>(key, v);
  else if (key == "t_end") {
    c.t_end_auto = v == "auto";
    if (!c.t_end_auto) c.t_end = parse_number<double>(key, v);
  } else if (key == "dt") c.dt = parse_number<double>(key, v);
  else if (key == "snapshot_every") c.snapshot_every = parse_number<double>(key, v);
  else if (key == "kernel_order") c.kernel_order = parse_number<int>(key, v);
  else if (key == "p") c.p = parse_list<int>(key, v);
  else if (key == "x_new") c.x_new = parse_list<double>(key, v);
  else if (key == "eta") c.eta = parse_list<double>(key, v);
  else if (key == "widths") c.widths = parse_list<std::size_t>(key, v);
  else if (key == "seeds") c.seeds = parse_list<std::uint64_t>(key, v);
  else if (key == "experiment") c.experiments = split_list(v);
  else if (key == "dt_audit") c.dt_audit = parse_bool(key, v);
  else if (key == "threads") c.threads = parse_number<std::size_t>(key, v);
  else throw ConfigError("unknown key '" + key + "'");
}

/// Field-level constraints; messages start with the offending key.
inline void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.n == 0) fail("n: must be >= 1");
  if (c.d == 0) fail("d: must be >= 1");
  if (c.H == 0) fail("H: must be >= 1");
  if (c.m == 0) fail("m: must be >= 1");
  try {
    (void)c.make_activation();
  } catch (const std::invalid_argument& e) {
    fail(std::string("activation: ") + e.what());
  }
  if (!(c.sigma_w > 0.0)) fail("sigma_w: must be > 0");
  if (!(c.sigma_a > 0.0)) fail("sigma_a: must be > 0");
  if (!c.t_end_auto && !(c.t_end >= 0.0)) fail("t_end: must be >= 0 or auto");
  if (!(c.dt > 0.0)) fail("dt: must be > 0");
  if (!(c.snapshot_every > 0.0)) fail("snapshot_every: must be > 0");
  if (c.kernel_order != 0 && (c.kernel_order < 2 || c.kernel_order > max_kernel_order))
    fail("kernel_order: must be 0 or in [2, " + std::to_string(max_kernel_order) + "]");
  if (c.p.empty()) fail("p: list must be nonempty");
  for (int p : c.p)
    if (p < 2 || p > max_kernel_order) fail("p: each order must be in [2, " + std::to_string(max_kernel_order) + "]");
  if (!c.x_new.empty() && c.x_new.size() != c.d)
    fail("x_new: has " + std::to_string(c.x_new.size()) + " entries, expected d = " + std::to_string(c.d));
  for (double e : c.eta)
    if (!(e > 0.0)) fail("eta: every step size must be > 0");
  for (std::size_t w : c.widths)
    if (w == 0) fail("widths: every width must be >= 1");
  std::set<std::string> seen;
  for (const auto& e : c.experiments) {
    Experiment ex = Experiment::drift;
    try {
      ex = parse_experiment(e);
    } catch (const std::invalid_argument& err) {
      fail(std::string("experiment: ") + err.what());
    }
    if (!seen.insert(e).second) fail("experiment: '" + e + "' listed twice");
    if (ex != Experiment::decay && c.widths.size() < 3)
      fail("widths: " + e + " needs >= 3 widths for a slope fit, got " + std::to_string(c.widths.size()));
    if (ex == Experiment::init_kernel && c.seeds.size() < 3)
      fail("seeds: " + e + " needs >= 3 seeds for the concentration check");
  }
  if (c.seeds.empty()) fail("seeds: at least one seed is required");
}

inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  RunConfig c;
  c.source = source;
  std::map<std::string, std::size_t> first_line;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (auto it = first_line.find(key); it != first_line.end())
      throw ConfigError(where + "duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
    first_line[key] = line_no;
    try {
      apply_key(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  validate_config(c);
  return c;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Replaces the network seed and rebases the seed list at `s`, keeping its length.
inline void apply_seed_override(RunConfig& c, std::uint64_t s) {
  c.seed = s;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) c.seeds[i] = s + i;
}

}  // namespace nthlab
