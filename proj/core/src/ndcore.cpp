#include "maso/ndcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maso/errors.hpp"

namespace maso {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, Vec data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape product " + std::to_string(numel(shape_)));
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, Vec data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ShapeError("matrix data length does not match rows*cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(squared_norm(m.data())); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " disagree");
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

Vec matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: matrix columns do not match vector length");
  Vec y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* row = a.values().data() + i * a.cols();
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += row[k] * x[k];
    y[i] = s;
  }
  return y;
}

Vec matvec_transposed(const Matrix& a, std::span<const double> y) {
  if (a.rows() != y.size()) throw ShapeError("matvec_transposed: matrix rows do not match vector length");
  Vec x(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* row = a.values().data() + i * a.cols();
    const double yi = y[i];
    for (std::size_t k = 0; k < a.cols(); ++k) x[k] += row[k] * yi;
  }
  return x;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.values().size(); ++i) c.values()[i] += b.values()[i];
  return c;
}

Vec softmax(std::span<const double> v, double scale) {
  Vec out(v.size());
  if (v.empty()) return out;
  double m = scale * v[0];
  for (double x : v) m = std::max(m, scale * x);
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(scale * v[i] - m);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw ShapeError("logsumexp of an empty vector");
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Matrix row_softmax(const Matrix& m, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("softmax scale must be positive and finite");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Vec row = softmax(m.row(r), scale);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

std::vector<std::size_t> row_argmax(const Matrix& m) {
  std::vector<std::size_t> idx(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) idx[r] = argmax(m.row(r));
  return idx;
}

Vec solve(Matrix a, Vec b, double pivot_tol) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw ShapeError("solve: system must be square");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) < pivot_tol) throw DegeneracyError("solve: singular system");
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a(i, c) * x[c];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace maso
