#include "singd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace singd {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename AccT>
Matrix matmul_impl(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      AccT acc = 0;
      for (std::size_t k = 0; k < n; ++k) {
        acc += static_cast<AccT>(a(i, k)) * static_cast<AccT>(b(k, j));
      }
      out(i, j) = static_cast<double>(acc);
    }
  }
  return out;
}

template <typename AccT>
Matrix gauss_jordan_inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  const double tol = 1e-12 * std::max(max_abs(a), 1e-300);

  // Working copy [w | inv], eliminated in place.
  std::vector<std::vector<AccT>> w(n, std::vector<AccT>(2 * n, AccT(0)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i][j] = static_cast<AccT>(a(i, j));
    w[i][n + i] = AccT(1);
  }

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot_row = col;
    AccT pivot_mag = std::abs(w[col][col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(w[r][col]) > pivot_mag) {
        pivot_mag = std::abs(w[r][col]);
        pivot_row = r;
      }
    }
    if (!(static_cast<double>(pivot_mag) > tol)) {
      throw SingularError(col, "dense_inverse: pivot " + std::to_string(col) +
                                   " below tolerance");
    }
    std::swap(w[col], w[pivot_row]);

    const AccT pivot = w[col][col];
    for (std::size_t j = 0; j < 2 * n; ++j) w[col][j] /= pivot;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const AccT f = w[r][col];
      if (f == AccT(0)) continue;
      for (std::size_t j = 0; j < 2 * n; ++j) w[r][j] -= f * w[col][j];
    }
  }

  Matrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) inv(i, j) = static_cast<double>(w[i][n + j]);
  }
  return inv;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: got " + std::to_string(data_.size()) +
                     " values for shape " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
}

Matrix Matrix::of(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::of: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b, Accum accum) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " times " + shape_str(b));
  }
  return accum == Accum::FP32 ? matmul_impl<float>(a, b) : matmul_impl<double>(a, b);
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

double trace(const Matrix& a) {
  if (!a.is_square()) throw ShapeError("trace: matrix is " + shape_str(a));
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

Matrix symmetrize(const Matrix& a) {
  if (!a.is_square()) throw ShapeError("symmetrize: matrix is " + shape_str(a));
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = 0.5 * (a(i, j) + a(j, i));
  }
  return out;
}

bool is_finite(const Matrix& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out = a;
  auto ov = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("sub: " + shape_str(a) + " vs " + shape_str(b));
  Matrix out = a;
  auto ov = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

void axpy(Matrix& y, double s, const Matrix& x) {
  if (!y.same_shape(x)) throw ShapeError("axpy: " + shape_str(y) + " vs " + shape_str(x));
  auto yv = y.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += s * xv[i];
}

Matrix truncated_expm(const Matrix& m, double scale, int order) {
  if (!m.is_square()) throw ShapeError("truncated_expm: matrix is " + shape_str(m));
  if (order != 1 && order != 2) {
    throw ContractError("truncated_expm: order must be 1 or 2");
  }
  Matrix out = Matrix::identity(m.rows());
  axpy(out, scale, m);
  if (order == 2) axpy(out, 0.5 * scale * scale, matmul(m, m));
  return out;
}

Matrix dense_inverse(const Matrix& a, Accum accum) {
  if (!a.is_square()) throw ShapeError("dense_inverse: matrix is " + shape_str(a));
  return accum == Accum::FP32 ? gauss_jordan_inverse<float>(a)
                              : gauss_jordan_inverse<double>(a);
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t ia = 0; ia < a.rows(); ++ia) {
    for (std::size_t ja = 0; ja < a.cols(); ++ja) {
      const double f = a(ia, ja);
      if (f == 0.0) continue;
      for (std::size_t ib = 0; ib < b.rows(); ++ib) {
        for (std::size_t jb = 0; jb < b.cols(); ++jb) {
          out(ia * b.rows() + ib, ja * b.cols() + jb) = f * b(ib, jb);
        }
      }
    }
  }
  return out;
}

}  // namespace singd
