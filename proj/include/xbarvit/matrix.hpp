#pragma once

// Dense row-major matrix plus the digital-domain operations that run outside
// the crossbars (softmax, layernorm, GELU) and uniform quantization helpers.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace xbarvit {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Matrix transposed() const;
  // Copy of the block [r0, r0+nr) x [c0, c0+nc).
  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
  void set_block(std::size_t r0, std::size_t c0, const Matrix& src);

  double max_abs() const;
  double min_value() const;
  double max_value() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& m);
Matrix layernorm(const Matrix& m, const Matrix& gain, const Matrix& bias, double eps = 1e-6);
// x * Phi(x) with the exact Gaussian CDF.
Matrix gelu(const Matrix& m);

// Frobenius norm.
double frobenius(const Matrix& m);

/// Uniform affine grid with 2^bits levels over [min_val, max_val].
struct QuantSpec {
  int bits = 8;
  double min_val = 0.0;
  double max_val = 1.0;

  void validate() const;
  std::int64_t levels() const { return std::int64_t{1} << bits; }
  double step() const { return (max_val - min_val) / static_cast<double>(levels() - 1); }
  std::int64_t code(double x) const;
  double value(std::int64_t code) const { return min_val + static_cast<double>(code) * step(); }
};

Matrix quantize(const Matrix& m, const QuantSpec& spec);

/// Integer codes of a tensor quantized over its own observed [min, max].
/// A constant tensor gets every code 0 and `offset` equal to the constant.
struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> codes;
  double offset = 0.0;  // value of code 0
  double step = 1.0;

  double value(std::size_t r, std::size_t c) const {
    return offset + static_cast<double>(codes[r * cols + c]) * step;
  }
  Matrix dequantized() const;
};

QuantizedTensor quantize_observed(const Matrix& m, int bits);

}  // namespace xbarvit
