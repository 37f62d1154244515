#pragma once

// Dense row-major numeric primitives. All reductions run left to right over
// the shared index so results are bit-stable across runs.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace maso {

using Vec = std::vector<double>;
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, Vec data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  Vec& values() { return data_; }
  const Vec& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  Vec data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, Vec data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  Vec& values() { return data_; }
  const Vec& values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

bool all_finite(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double max_abs(std::span<const double> a);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
Vec matvec(const Matrix& a, std::span<const double> x);
/// aᵀ·y without materializing the transpose.
Vec matvec_transposed(const Matrix& a, std::span<const double> y);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);

/// Row-wise softmax of scale·m, stabilized by subtracting each row max.
Matrix row_softmax(const Matrix& m, double scale = 1.0);
/// Per row, the lowest index attaining the maximum.
std::vector<std::size_t> row_argmax(const Matrix& m);

Vec softmax(std::span<const double> v, double scale = 1.0);
std::size_t argmax(std::span<const double> v);
double logsumexp(std::span<const double> v);

/// Solves a·x = b for square a by Gaussian elimination with partial pivoting.
/// Throws DegeneracyError when a pivot falls below `pivot_tol`.
Vec solve(Matrix a, Vec b, double pivot_tol = 1e-14);

}  // namespace maso
