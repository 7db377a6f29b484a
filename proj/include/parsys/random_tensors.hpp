#pragma once

// Seeded random coefficient tensors for property runs.

#include <random>

#include <Eigen/QR>

#include "parsys/tensors.hpp"

namespace parsys::random {

/// Haar-like random unitary from the QR factorization of a complex Gaussian.
inline MatrixC unitary(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  MatrixC z(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) z(i, j) = {g(rng), g(rng)};
  Eigen::HouseholderQR<MatrixC> qr(z);
  return qr.householderQ() * MatrixC::Identity(n, n);
}

/// Constant tensor with all (m + m d)^2 entries uniform in [-1, 1] (real and
/// imaginary parts).
inline CoefficientTensor uniform(std::mt19937_64& rng, int m, int d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixC b(m + m * d, m + m * d);
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) b(i, j) = {u(rng), u(rng)};
  return CoefficientTensor::from_block(m, d, b);
}

/// Hermitian constant tensor whose principal block has spectrum in
/// [gamma, top] with smallest eigenvalue exactly gamma; lower-order blocks
/// are zero. Legendre constant = gamma, block norm = largest eigenvalue.
inline CoefficientTensor hermitian_positive(std::mt19937_64& rng, int m, int d, double gamma, double top) {
  std::uniform_real_distribution<double> u(gamma, top);
  const int n = m * d;
  Eigen::VectorXd ev(n);
  ev(0) = gamma;
  for (int k = 1; k < n; ++k) ev(k) = u(rng);
  const MatrixC q = unitary(rng, n);
  MatrixC p = q * ev.cast<Complex>().asDiagonal() * q.adjoint();
  p = 0.5 * (p + p.adjoint()).eval();
  CoefficientTensor t(m, d);
  MatrixC b = MatrixC::Zero(t.size(), t.size());
  b.bottomRightCorner(n, n) = p;
  return CoefficientTensor::from_block(m, d, b);
}

/// Tabulated family of independent hermitian_positive tensors at `times`.
inline TensorFamily hermitian_family(std::mt19937_64& rng, int m, int d, double gamma, double top,
                                     const std::vector<double>& times) {
  std::vector<std::pair<double, CoefficientTensor>> table;
  for (double t : times) table.emplace_back(t, hermitian_positive(rng, m, d, gamma, top));
  return TensorFamily::tabulated(std::move(table));
}

}  // namespace parsys::random
