#include "singd/tasks.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "singd/errors.hpp"

namespace singd {

namespace {

// Orthonormal columns via modified Gram-Schmidt on a seeded gaussian matrix.
Matrix random_orthogonal(std::size_t d, Rng& rng) {
  Matrix q = rng.gaussian_matrix(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t prev = 0; prev < j; ++prev) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += q(i, j) * q(i, prev);
      for (std::size_t i = 0; i < d; ++i) q(i, j) -= dot * q(i, prev);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      // Degenerate draw; fall back to a unit vector and re-orthogonalize.
      for (std::size_t i = 0; i < d; ++i) q(i, j) = (i == j) ? 1.0 : 0.0;
      for (std::size_t prev = 0; prev < j; ++prev) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += q(i, j) * q(i, prev);
        for (std::size_t i = 0; i < d; ++i) q(i, j) -= dot * q(i, prev);
      }
      norm = 0.0;
      for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
      norm = std::sqrt(norm);
    }
    for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
  }
  return q;
}

// Q diag(eigs) Q^T.
Matrix spectral_spd(const Matrix& q, const std::vector<double>& eigs) {
  const std::size_t d = eigs.size();
  Matrix scaled = q;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < d; ++i) scaled(i, j) *= eigs[j];
  }
  return matmul(scaled, transpose(q));
}

// Geometric spectrum from lo to hi (single point when d == 1).
std::vector<double> geometric_spectrum(std::size_t d, double lo, double hi) {
  std::vector<double> eigs(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double t = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
    eigs[i] = lo * std::pow(hi / lo, t);
  }
  return eigs;
}

}  // namespace

BlobsData make_gaussian_blobs(const BlobsSpec& spec, Rng& rng) {
  if (spec.classes < 2) throw ContractError("gaussian_blobs: need at least 2 classes");
  if (spec.dim == 0) throw ContractError("gaussian_blobs: need dim >= 1");

  // Class means on a scaled sphere, separated well above the noise level.
  Matrix means = rng.gaussian_matrix(spec.classes, spec.dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < spec.dim; ++j) norm += means(c, j) * means(c, j);
    norm = std::max(std::sqrt(norm), 1e-9);
    for (std::size_t j = 0; j < spec.dim; ++j) means(c, j) /= norm;
  }

  auto sample = [&](std::size_t n) {
    LabeledData data;
    data.classes = spec.classes;
    data.x = Matrix(n, spec.dim);
    data.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(rng.integer(spec.classes));
      data.labels[i] = static_cast<int>(c);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        data.x(i, j) = means(c, j) + spec.noise * rng.gaussian();
      }
    }
    return data;
  };

  BlobsData out;
  out.train = sample(spec.train_size);
  out.test = sample(spec.test_size);
  return out;
}

double KroneckerQuadratic::loss(const Matrix& w) const {
  if (w.rows() != B.rows() || w.cols() != A.rows()) {
    throw ShapeError("quadratic loss: weights must be d_o x d_i");
  }
  const Matrix bwa = matmul(matmul(B, w), A);
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      quad += w(i, j) * bwa(i, j);
      lin += b(i, j) * w(i, j);
    }
  }
  return 0.5 * quad - lin;
}

Matrix KroneckerQuadratic::grad(const Matrix& w) const {
  if (w.rows() != B.rows() || w.cols() != A.rows()) {
    throw ShapeError("quadratic grad: weights must be d_o x d_i");
  }
  return matmul(matmul(B, w), A) - b;
}

Matrix KroneckerQuadratic::solve_oracle() const {
  return matmul(matmul(dense_inverse(B), b), dense_inverse(A));
}

std::pair<Matrix, Matrix> KroneckerQuadratic::defining_batches() const {
  // With rows sqrt(m * eig_j) * q_j (zero rows pad the smaller side), the
  // batch second moment (1/m) X^T X telescopes back to Q diag(eigs) Q^T.
  const std::size_t m = std::max(eigs_A.size(), eigs_B.size());
  auto batch_of = [m](const Matrix& basis, const std::vector<double>& eigs) {
    const std::size_t d = eigs.size();
    Matrix x(m, d);
    for (std::size_t r = 0; r < d; ++r) {
      const double s = std::sqrt(static_cast<double>(m) * eigs[r]);
      for (std::size_t j = 0; j < d; ++j) x(r, j) = s * basis(j, r);
    }
    return x;
  };
  return {batch_of(basis_A, eigs_A), batch_of(basis_B, eigs_B)};
}

QuadraticEval kronecker_quadratic_eval(const KroneckerQuadratic& task, const Matrix& w) {
  return {task.loss(w), task.grad(w), task.exact_curvature()};
}

KroneckerQuadratic make_kronecker_quadratic(std::size_t d_i, std::size_t d_o, double cond,
                                            Rng& rng, double split) {
  if (d_i == 0 || d_o == 0) throw ContractError("kronecker_quadratic: need positive dims");
  if (!(cond >= 1.0)) throw ContractError("kronecker_quadratic: need cond >= 1");
  if (!(split >= 0.0 && split <= 1.0)) {
    throw ContractError("kronecker_quadratic: need 0 <= split <= 1");
  }

  // cond(A (x) B) = cond(A) * cond(B). Capping the top eigenvalue keeps the
  // identity-initialized multiplicative factor updates inside their basin.
  const double hi = 2.0;

  KroneckerQuadratic task;
  task.basis_A = random_orthogonal(d_i, rng);
  task.basis_B = random_orthogonal(d_o, rng);
  task.eigs_A = geometric_spectrum(d_i, hi / std::pow(cond, split), hi);
  task.eigs_B = geometric_spectrum(d_o, hi / std::pow(cond, 1.0 - split), hi);
  task.A = symmetrize(spectral_spd(task.basis_A, task.eigs_A));
  task.B = symmetrize(spectral_spd(task.basis_B, task.eigs_B));

  // Choose the optimum first, then the linear term that places it there.
  const Matrix w_star = rng.gaussian_matrix(d_o, d_i);
  task.b = matmul(matmul(task.B, w_star), task.A);
  return task;
}

LabeledData load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  if (line.rfind("label", 0) != 0) {
    throw ConfigError(path + ":1: header must start with 'label'");
  }
  std::size_t features = 0;
  for (char ch : line) {
    if (ch == ',') ++features;
  }
  if (features == 0) throw ConfigError(path + ":1: no feature columns");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  int max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(row, cell, ',')) {
      try {
        if (col == 0) {
          const int label = std::stoi(cell);
          if (label < 0) throw std::invalid_argument("negative");
          labels.push_back(label);
          max_label = std::max(max_label, label);
        } else {
          values.push_back(std::stod(cell));
        }
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
      }
      ++col;
    }
    if (col != features + 1) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(features + 1) + " columns, got " + std::to_string(col));
    }
  }
  if (labels.empty()) throw ConfigError(path + ": no data rows");

  LabeledData data;
  data.x = Matrix(labels.size(), features, std::move(values));
  data.labels = std::move(labels);
  data.classes = static_cast<std::size_t>(max_label) + 1;
  return data;
}

}  // namespace singd
