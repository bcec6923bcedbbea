#pragma once

// Dense real linear algebra, deterministic random streams and the small
// symmetric eigen / singular value solvers used throughout the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nthlab {

/// Row-major dense matrix over an arbitrary scalar type.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_)
      throw std::invalid_argument("Matrix: value count does not match dimensions");
  }

  static Matrix identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T(1);
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Mat = Matrix<double>;
using Vec = std::vector<double>;

inline Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double out = 0.0;
  for (double v : a) out = std::max(out, std::abs(v));
  return out;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// ||a - b||_inf / ||b||_inf, falling back to the absolute difference when b is zero.
inline double relative_error_inf(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error_inf: length mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  const double scale = norm_inf(b);
  return scale > 0.0 ? diff / scale : diff;
}

// ---------------------------------------------------------------------------
// Random streams

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// A reproducible random stream keyed by (seed, stream_id). Streams with
/// different ids are seeded through independent splitmix64 hashes, so a task
/// can own its stream without depending on the order other tasks draw in.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed),
        stream_id_(stream_id),
        engine_(splitmix64(splitmix64(seed) ^ splitmix64(~stream_id))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  double gaussian() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// rows x cols matrix with i.i.d. N(0, stddev^2) entries, drawn in row-major order.
inline Mat gaussian_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double stddev) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("gaussian_matrix: dimensions must be positive");
  if (!(stddev > 0.0) || !std::isfinite(stddev))
    throw std::invalid_argument("gaussian_matrix: standard deviation must be positive");
  Mat out(rows, cols);
  for (double& v : out.values()) v = stddev * rng.gaussian();
  return out;
}

// ---------------------------------------------------------------------------
// Small dense eigen / singular value problems (cyclic Jacobi)

struct SymmetricEigen {
  Vec values;   // ascending
  Mat vectors;  // column k is the eigenvector for values[k]
};

inline Mat symmetrized(const Mat& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) throw std::invalid_argument("symmetric matrix must be square");
  if (m.empty()) throw std::invalid_argument("symmetric matrix must be non-empty");
  const double scale = std::max(1.0, norm_inf(m.values()));
  Mat out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (std::abs(m(i, j) - m(j, i)) > tol * scale)
        throw std::invalid_argument("matrix is not symmetric within tolerance");
      out(i, j) = 0.5 * (m(i, j) + m(j, i));
    }
  return out;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymmetricEigen symmetric_eigen(const Mat& m, double symmetry_tol = 1e-10) {
  Mat a = symmetrized(m, symmetry_tol);
  const std::size_t n = a.rows();
  Mat v = Mat::identity(n);

  double total = 0.0;
  for (double x : a.values()) total += x * x;
  const double threshold = 1e-12 * std::sqrt(total);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= threshold || off == 0.0) break;

    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{Vec(n), Mat(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

inline double min_eigenvalue_sym(const Mat& m) { return symmetric_eigen(m).values.front(); }

/// Singular values (descending) by one-sided Jacobi rotations on the columns.
inline Vec singular_values(const Mat& m) {
  if (m.empty()) throw std::invalid_argument("singular_values: empty matrix");
  Mat u = m.cols() > m.rows() ? transpose(m) : m;
  const std::size_t rows = u.rows(), cols = u.cols();
  constexpr double eps = std::numeric_limits<double>::epsilon();

  for (int sweep = 0; sweep < 100; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i < cols; ++i)
      for (std::size_t j = i + 1; j < cols; ++j) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < rows; ++k) {
          alpha += u(k, i) * u(k, i);
          beta += u(k, j) * u(k, j);
          gamma += u(k, i) * u(k, j);
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < rows; ++k) {
          const double ui = u(k, i), uj = u(k, j);
          u(k, i) = c * ui - s * uj;
          u(k, j) = s * ui + c * uj;
        }
      }
    if (!rotated) break;
  }

  Vec out(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < rows; ++k) s += u(k, j) * u(k, j);
    out[j] = std::sqrt(s);
  }
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

inline double min_singular_value(const Mat& m) { return singular_values(m).back(); }

/// Largest singular value of a row-major rows x cols block by power iteration
/// on A^T A, started from a fixed deterministic vector.
inline double spectral_norm(std::span<const double> a, std::size_t rows, std::size_t cols,
                            int max_iterations = 50, double tol = 1e-8) {
  if (a.size() != rows * cols || rows == 0 || cols == 0)
    throw std::invalid_argument("spectral_norm: bad dimensions");
  Vec v(cols), u(rows);
  RngStream start(0x5eed, cols);
  for (double& x : v) x = start.gaussian();
  double nv = norm2(v);
  for (double& x : v) x /= nv;

  double sigma = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      const double* r = a.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) s += r[j] * v[j];
      u[i] = s;
    }
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* r = a.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) v[j] += r[j] * u[i];
    }
    nv = norm2(v);
    if (nv == 0.0) return 0.0;
    const double next = std::sqrt(nv);
    for (double& x : v) x /= nv;
    const bool done = std::abs(next - sigma) <= tol * next;
    sigma = next;
    if (done) break;
  }
  return sigma;
}

}  // namespace nthlab
