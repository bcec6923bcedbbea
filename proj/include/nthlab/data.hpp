#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nthlab/numerics.hpp"

namespace nthlab {

/// Training inputs x_alpha in R^d with scalar labels y_alpha.
struct DataSet {
  std::vector<Vec> inputs;
  Vec labels;

  std::size_t size() const noexcept { return inputs.size(); }
  std::size_t dim() const noexcept { return inputs.empty() ? 0 : inputs.front().size(); }

  void check_shape() const {
    if (inputs.empty()) throw std::invalid_argument("data set is empty");
    if (labels.size() != inputs.size()) throw std::invalid_argument("data set: label count differs from input count");
    for (const auto& x : inputs)
      if (x.size() != dim() || x.empty()) throw std::invalid_argument("data set: inconsistent input dimensions");
  }
};

struct DataRequirements {
  double norm_floor = 0.5;          // c < ||x|| <= 1/c
  std::size_t subset_cap = 4;       // largest subset size checked for independence
  double min_subset_singular = 1e-3;
};

struct DataViolation {
  std::vector<std::size_t> rows;
  std::string what;
};

/// Lists every violation of the input norm bracket and of the linear
/// independence of small input subsets.
inline std::vector<DataViolation> validate_dataset(const DataSet& data, const DataRequirements& req = {}) {
  data.check_shape();
  std::vector<DataViolation> out;
  const double c = req.norm_floor;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double nx = norm2(data.inputs[i]);
    if (!(nx > c && nx <= 1.0 / c)) {
      std::ostringstream msg;
      msg << "input norm " << nx << " outside (" << c << ", " << 1.0 / c << "]";
      out.push_back({{i}, msg.str()});
    }
  }

  const std::size_t n = data.size();
  const std::size_t cap = std::min(req.subset_cap, n);
  for (std::size_t r = 2; r <= cap; ++r) {
    // enumerate r-subsets in lexicographic order
    std::vector<std::size_t> idx(r);
    for (std::size_t k = 0; k < r; ++k) idx[k] = k;
    while (true) {
      Mat stacked(data.dim(), r);
      for (std::size_t k = 0; k < r; ++k)
        for (std::size_t j = 0; j < data.dim(); ++j) stacked(j, k) = data.inputs[idx[k]][j];
      const double smin = r > data.dim() ? 0.0 : min_singular_value(stacked);
      if (smin < req.min_subset_singular) {
        std::ostringstream msg;
        msg << "smallest singular value " << smin << " of stacked inputs below " << req.min_subset_singular;
        out.push_back({idx, msg.str()});
      }
      std::size_t k = r;
      while (k > 0 && idx[k - 1] == n - r + (k - 1)) --k;
      if (k == 0) break;
      ++idx[k - 1];
      for (std::size_t j = k; j < r; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return out;
}

/// Rescales every input to unit norm unless all inputs already sit inside the norm bracket.
inline void normalize_inputs(DataSet& data, const DataRequirements& req = {}) {
  const double c = req.norm_floor;
  const bool inside = std::all_of(data.inputs.begin(), data.inputs.end(), [&](const Vec& x) {
    const double nx = norm2(x);
    return nx > c && nx <= 1.0 / c;
  });
  if (inside) return;
  for (auto& x : data.inputs) {
    const double nx = norm2(x);
    if (nx == 0.0) continue;  // left for validation to report
    for (double& v : x) v /= nx;
  }
}

class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::vector<DataViolation> violations)
      : std::runtime_error(what), violations_(std::move(violations)) {}
  const std::vector<DataViolation>& violations() const noexcept { return violations_; }

 private:
  std::vector<DataViolation> violations_;
};

/// Reads `x_1,...,x_d,y` rows (header required), normalizes and validates.
/// Row indices in errors are 1-based data rows (the header is row 0).
inline DataSet load_dataset_csv(const std::string& path, const DataRequirements& req = {}) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header", {});
  std::size_t columns = std::count(line.begin(), line.end(), ',') + 1;
  if (columns < 2) throw DataError(path + ": header needs at least one input column and y", {});

  DataSet data;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError(path + ": row " + std::to_string(row) + ": cannot parse '" + cell + "'", {{{row}, "parse"}});
      }
    }
    if (fields.size() != columns)
      throw DataError(path + ": row " + std::to_string(row) + ": expected " + std::to_string(columns) + " columns",
                      {{{row}, "column count"}});
    data.labels.push_back(fields.back());
    fields.pop_back();
    data.inputs.push_back(std::move(fields));
  }
  if (data.size() == 0) throw DataError(path + ": no data rows", {});

  normalize_inputs(data, req);
  auto violations = validate_dataset(data, req);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << path << ": " << violations.size() << " data requirement violation(s)";
    for (const auto& v : violations) {
      msg << "\n  rows";
      for (auto r : v.rows) msg << ' ' << r + 1;
      msg << ": " << v.what;
    }
    for (auto& v : violations)
      for (auto& r : v.rows) ++r;
    throw DataError(msg.str(), std::move(violations));
  }
  return data;
}

enum class LabelKind { gaussian, zero };

/// n unit-norm Gaussian inputs in R^d with N(0,1) labels. Draws are redrawn
/// from fresh streams until the set satisfies the data requirements.
inline DataSet synthetic_dataset(std::size_t n, std::size_t d, std::uint64_t seed,
                                 LabelKind labels = LabelKind::gaussian, const DataRequirements& req = {}) {
  if (n == 0 || d == 0) throw std::invalid_argument("synthetic_dataset: n and d must be positive");
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    RngStream rng(seed, 0x0da7a000 + attempt);
    DataSet data;
    for (std::size_t i = 0; i < n; ++i) {
      Vec x(d);
      for (double& v : x) v = rng.gaussian();
      const double nx = norm2(x);
      for (double& v : x) v /= nx;
      data.inputs.push_back(std::move(x));
    }
    for (std::size_t i = 0; i < n; ++i) data.labels.push_back(labels == LabelKind::gaussian ? rng.gaussian() : 0.0);
    if (validate_dataset(data, req).empty()) return data;
  }
  throw std::invalid_argument("synthetic_dataset: could not satisfy data requirements (is d < subset cap?)");
}

}  // namespace nthlab
