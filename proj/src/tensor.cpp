#include "wjmix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wjmix/kernels.hpp"

namespace wjmix {
namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

// c[m×n] (+)= a[m×k] · b[k×n], all row-major with leading dimensions.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const auto& kern = kernels::active();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    const double* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) kern.axpy(arow[p], b + p * ldb, crow, n);
  }
}

// c[m×n] += aᵀ · b with a[k×m], b[k×n].
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const auto& kern = kernels::active();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * lda;
    const double* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) kern.axpy(arow[i], brow, c + i * ldc, n);
  }
}

}  // namespace

std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match shape " + to_string({rows, cols}));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::rows_slice(std::size_t first, std::size_t count) const {
  if (first + count > rows_)
    throw DimensionError("rows_slice: rows [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of " + to_string(shape()));
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
  return Matrix(count, cols_,
                std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * cols_)));
}

void Matrix::set_rows(std::size_t first, const Matrix& block) {
  if (block.cols() != cols_ || first + block.rows() > rows_)
    throw DimensionError("set_rows: block " + to_string(block.shape()) + " at row " +
                         std::to_string(first) + " does not fit " + to_string(shape()));
  std::copy(block.data_.begin(), block.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(first * cols_));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

// --- Rng --------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  for (auto& word : s_) word = splitmix64(seed);
}

std::uint64_t Rng::next_u64() {
  const auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

// --- products ---------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Matrix c(a.rows(), b.cols());
  gemm_nn(a.rows(), a.cols(), b.cols(), a.data().data(), a.cols(), b.data().data(), b.cols(),
          c.data().data(), c.cols());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: " + to_string(a.shape()) + "^T x " + to_string(b.shape()));
  Matrix c(a.cols(), b.cols());
  gemm_tn(a.cols(), a.rows(), b.cols(), a.data().data(), a.cols(), b.data().data(), b.cols(),
          c.data().data(), c.cols());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: " + to_string(a.shape()) + " x " + to_string(b.shape()) +
                         "^T");
  return matmul(a, transpose(b));
}

Matrix matmul_blocks(const Matrix& a, const Matrix& stacked) {
  const std::size_t n = a.cols();
  if (a.rows() != n || n == 0 || stacked.rows() % n != 0)
    throw DimensionError("matmul_blocks: " + to_string(a.shape()) + " over stacked " +
                         to_string(stacked.shape()));
  Matrix c(stacked.rows(), stacked.cols());
  const std::size_t cols = stacked.cols();
  for (std::size_t first = 0; first < stacked.rows(); first += n) {
    gemm_nn(n, n, cols, a.data().data(), n, stacked.data().data() + first * cols, cols,
            c.data().data() + first * cols, cols);
  }
  return c;
}

Matrix matmul_blocks_tn(const Matrix& a, const Matrix& stacked) {
  const std::size_t n = a.cols();
  if (a.rows() != n || n == 0 || stacked.rows() % n != 0)
    throw DimensionError("matmul_blocks_tn: " + to_string(a.shape()) + " over stacked " +
                         to_string(stacked.shape()));
  Matrix c(stacked.rows(), stacked.cols());
  const std::size_t cols = stacked.cols();
  for (std::size_t first = 0; first < stacked.rows(); first += n) {
    gemm_tn(n, n, cols, a.data().data(), n, stacked.data().data() + first * cols, cols,
            c.data().data() + first * cols, cols);
  }
  return c;
}

Matrix sum_blocks_nt(const Matrix& a, const Matrix& b, std::size_t block_rows) {
  if (a.shape() != b.shape() || block_rows == 0 || a.rows() % block_rows != 0)
    throw DimensionError("sum_blocks_nt: " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " in blocks of " + std::to_string(block_rows));
  const std::size_t n = block_rows;
  const std::size_t cols = a.cols();
  Matrix out(n, n);
  Matrix bt(cols, n);
  for (std::size_t first = 0; first < a.rows(); first += n) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < cols; ++c) bt(c, i) = b(first + i, c);
    gemm_nn(n, cols, n, a.data().data() + first * cols, cols, bt.data().data(), n,
            out.data().data(), n);
  }
  return out;
}

// --- elementwise ------------------------------------------------------------

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same(a, b, "hadamard");
  Matrix c(a.rows(), a.cols());
  kernels::active().mul(a.data().data(), b.data().data(), c.data().data(), a.size());
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same(a, b, "add");
  Matrix c(a.rows(), a.cols());
  kernels::active().add(a.data().data(), b.data().data(), c.data().data(), a.size());
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same(a, b, "sub");
  Matrix c(a.rows(), a.cols());
  kernels::active().sub(a.data().data(), b.data().data(), c.data().data(), a.size());
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c(a.rows(), a.cols());
  kernels::active().scale(s, a.data().data(), c.data().data(), a.size());
  return c;
}

void axpy_inplace(Matrix& a, double s, const Matrix& b) {
  require_same(a, b, "axpy_inplace");
  kernels::active().axpy(s, b.data().data(), a.data().data(), a.size());
}

Matrix uniform(Rng& rng, double lo, double hi, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

Matrix normal(Rng& rng, double stddev, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

}  // namespace wjmix
