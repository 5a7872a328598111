#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "singd/errors.hpp"

namespace singd {

/// Accumulator width used inside reductions (matrix products, inner sums).
/// FP32 emulates mixed-precision kernels that accumulate in single precision.
enum class Accum { FP64, FP32 };

/// Dense row-major real matrix. The lingua franca between modules.
class Matrix {
 public:
  Matrix() = default;

  /// Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  /// Row-wise literal, mostly for tests: Matrix::of({{1, 2}, {3, 4}}).
  static Matrix of(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b, Accum accum = Accum::FP64);
Matrix transpose(const Matrix& a);
double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
Matrix symmetrize(const Matrix& a);
bool is_finite(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// y += s * x
void axpy(Matrix& y, double s, const Matrix& x);

/// Truncated matrix exponential of scale*m: order 1 gives I + scale*m,
/// order 2 adds (scale^2/2) m^2.
Matrix truncated_expm(const Matrix& m, double scale, int order);

/// Gauss-Jordan inverse with partial pivoting. Pivot tolerance is
/// 1e-12 * max|entry| of the input. Intended for reference paths and
/// test oracles, not hot loops.
Matrix dense_inverse(const Matrix& a, Accum accum = Accum::FP64);

/// Kronecker product (oracle only; shapes (a.rows*b.rows) x (a.cols*b.cols)).
Matrix kron(const Matrix& a, const Matrix& b);

}  // namespace singd
