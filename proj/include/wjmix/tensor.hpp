#pragma once

// Dense row-major matrices of doubles and the deterministic RNG.
//
// No broadcasting anywhere: every binary op requires equal shapes and throws
// DimensionError otherwise. Products accumulate left to right over the inner
// index, independent of the kernel ISA in use.

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wjmix {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File missing, unreadable, unwritable or not valid JSON.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(Shape s);

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  Shape shape() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  // Copy of rows [first, first + count).
  Matrix rows_slice(std::size_t first, std::size_t count) const;
  // Overwrite rows starting at `first` with `block` (same column count).
  void set_rows(std::size_t first, const Matrix& block);

  void fill(double value);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// xoshiro256** seeded through splitmix64. Output depends only on the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Box-Muller; consumes two uniforms per call (no cached spare).
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [0, n), by rejection.
  std::uint64_t below(std::uint64_t n);

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

// Fisher-Yates shuffle driven by Rng::below.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b without materializing aᵀ.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// `stacked` holds equal blocks of a.cols() rows; returns blocks of a·block.
Matrix matmul_blocks(const Matrix& a, const Matrix& stacked);
// Same with aᵀ.
Matrix matmul_blocks_tn(const Matrix& a, const Matrix& stacked);
// Σ_b a_b · b_bᵀ over blocks of `block_rows` rows; result is block_rows².
Matrix sum_blocks_nt(const Matrix& a, const Matrix& b, std::size_t block_rows);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// In-place accumulate: a += s * b.
void axpy_inplace(Matrix& a, double s, const Matrix& b);

Matrix uniform(Rng& rng, double lo, double hi, std::size_t rows, std::size_t cols);
Matrix normal(Rng& rng, double stddev, std::size_t rows, std::size_t cols);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);
double sum(const Matrix& a);

inline Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
inline Matrix operator-(const Matrix& a, const Matrix& b) { return sub(a, b); }
inline Matrix operator*(double s, const Matrix& a) { return scale(a, s); }

}  // namespace wjmix
