#include "xbarvit/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace xbarvit {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows_) + "x" +
                                std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
  if (r0 + nr > rows_ || c0 + nc > cols_) throw std::out_of_range("Matrix::block out of range");
  Matrix out(nr, nc);
  for (std::size_t r = 0; r < nr; ++r)
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0), nc,
                out.data_.begin() + static_cast<std::ptrdiff_t>(r * nc));
  return out;
}

void Matrix::set_block(std::size_t r0, std::size_t c0, const Matrix& src) {
  if (r0 + src.rows_ > rows_ || c0 + src.cols_ > cols_)
    throw std::out_of_range("Matrix::set_block out of range");
  for (std::size_t r = 0; r < src.rows_; ++r)
    std::copy_n(src.data_.begin() + static_cast<std::ptrdiff_t>(r * src.cols_), src.cols_,
                data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0));
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Matrix::min_value() const {
  if (data_.empty()) throw std::logic_error("Matrix::min_value on empty matrix");
  return *std::min_element(data_.begin(), data_.end());
}

double Matrix::max_value() const {
  if (data_.empty()) throw std::logic_error("Matrix::max_value on empty matrix");
  return *std::max_element(data_.begin(), data_.end());
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator+");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator-");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order; each output element still accumulates over k in increasing order.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

Matrix layernorm(const Matrix& m, const Matrix& gain, const Matrix& bias, double eps) {
  if (gain.rows() != 1 || gain.cols() != m.cols() || bias.rows() != 1 || bias.cols() != m.cols())
    throw std::invalid_argument("layernorm: gain/bias must be 1x" + std::to_string(m.cols()));
  if (!(eps > 0.0)) throw std::invalid_argument("layernorm: eps must be positive");
  Matrix out(m.rows(), m.cols());
  const auto n = static_cast<double>(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = (in[c] - mean) * inv * gain(0, c) + bias(0, c);
  }
  return out;
}

Matrix gelu(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.values()) x = 0.5 * x * std::erfc(-x / std::sqrt(2.0));
  return out;
}

double frobenius(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

void QuantSpec::validate() const {
  if (bits < 1 || bits > 30) throw std::invalid_argument("QuantSpec: bits must be in [1, 30]");
  if (!(max_val > min_val)) throw std::invalid_argument("QuantSpec: max_val must exceed min_val");
}

std::int64_t QuantSpec::code(double x) const {
  const double clipped = std::clamp(x, min_val, max_val);
  const auto q = static_cast<std::int64_t>(std::round((clipped - min_val) / step()));
  return std::clamp<std::int64_t>(q, 0, levels() - 1);
}

Matrix quantize(const Matrix& m, const QuantSpec& spec) {
  spec.validate();
  Matrix out = m;
  for (double& v : out.values()) v = spec.value(spec.code(v));
  return out;
}

Matrix QuantizedTensor::dequantized() const {
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = value(r, c);
  return out;
}

QuantizedTensor quantize_observed(const Matrix& m, int bits) {
  QuantizedTensor q;
  q.rows = m.rows();
  q.cols = m.cols();
  q.codes.assign(m.size(), 0);
  if (m.empty()) return q;
  const double lo = m.min_value();
  const double hi = m.max_value();
  q.offset = lo;
  if (!(hi > lo)) return q;
  const QuantSpec spec{bits, lo, hi};
  spec.validate();
  q.step = spec.step();
  auto v = m.values();
  for (std::size_t i = 0; i < v.size(); ++i) q.codes[i] = static_cast<std::int32_t>(spec.code(v[i]));
  return q;
}

}  // namespace xbarvit
