// Shared fixtures and independent oracles for the test suites. The oracles
// here deliberately avoid the library's solve paths: dense factorizations and
// long power iterations on explicitly formed matrices.
#pragma once

#include "regkacz/model.hpp"
#include "regkacz/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <memory>
#include <vector>

namespace testsupport {

using regkacz::Index;
using regkacz::Matrix;
using regkacz::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  regkacz::Rng rng(seed);
  Matrix a(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) a(i, j) = rng.next_gaussian();
  return a;
}

inline Vector random_vector(Index n, std::uint64_t seed) {
  regkacz::Rng rng(seed);
  return rng.gaussian_vector(n);
}

// dense oracle for (A^T A + alpha I) h = A^T rhs
inline Vector normal_solve_oracle(const Matrix& a, const Vector& rhs, double alpha) {
  Matrix gram = a.transpose() * a;
  gram.diagonal().array() += alpha;
  return gram.ldlt().solve(a.transpose() * rhs);
}

// dense oracle for alpha (A A^T + alpha I)^{-1} w
inline Vector resolvent_oracle(const Matrix& a, const Vector& w, double alpha) {
  Matrix gram = a * a.transpose();
  gram.diagonal().array() += alpha;
  return alpha * gram.ldlt().solve(w);
}

// SVD-free spectral-norm oracle: long power iteration on the explicit A^T A
inline double operator_norm_oracle(const Matrix& a, int iters = 10000) {
  const Matrix ata = a.transpose() * a;
  Vector v = Vector::Ones(a.cols());
  v.normalize();
  double rayleigh = 0.0;
  for (int t = 0; t < iters; ++t) {
    const Vector w = ata * v;
    rayleigh = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
  }
  return std::sqrt(std::max(rayleigh, 0.0));
}

// affine system F_i(x) = A_i x + c_i with exact adjoints; eta = 0
inline regkacz::OperatorFamily affine_family(std::vector<Matrix> blocks,
                                             std::vector<Vector> offsets,
                                             std::optional<Vector> ground_truth = std::nullopt) {
  struct Data {
    std::vector<Matrix> blocks;
    std::vector<Vector> offsets;
  };
  auto data = std::make_shared<const Data>(Data{std::move(blocks), std::move(offsets)});
  double c_bound = 0.0;
  for (const Matrix& b : data->blocks) c_bound = std::max(c_bound, operator_norm_oracle(b, 2000));

  regkacz::OperatorFamily::Init init;
  init.n_equations = static_cast<int>(data->blocks.size());
  init.dim_x = data->blocks.front().cols();
  for (const Matrix& b : data->blocks) init.dim_y.push_back(b.rows());
  init.evaluate = [data](int i, const Vector& x) -> Vector {
    return data->blocks[static_cast<std::size_t>(i)] * x +
           data->offsets[static_cast<std::size_t>(i)];
  };
  init.linearize = [data](int i, const Vector&) {
    return regkacz::LinearMap::from_dense(data->blocks[static_cast<std::size_t>(i)]);
  };
  init.eta = 0.0;
  init.lipschitz_bound = c_bound;
  init.ground_truth = std::move(ground_truth);
  return regkacz::OperatorFamily(std::move(init));
}

// identity system F(x) = x in one equation
inline regkacz::OperatorFamily identity_family(Index n,
                                               std::optional<Vector> truth = std::nullopt) {
  return affine_family({Matrix::Identity(n, n)}, {Vector::Zero(n)}, std::move(truth));
}

inline regkacz::NoisyData exact_data(std::vector<Vector> y) {
  regkacz::NoisyData d;
  d.exact_y = y;
  d.delta.assign(y.size(), 0.0);
  d.y_delta = std::move(y);
  return d;
}

}  // namespace testsupport
