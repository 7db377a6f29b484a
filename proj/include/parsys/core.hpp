#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

namespace parsys {

using Complex = std::complex<double>;
using VectorC = Eigen::VectorXcd;
using VectorR = Eigen::VectorXd;
using MatrixC = Eigen::MatrixXcd;
using MatrixR = Eigen::MatrixXd;
using SparseC = Eigen::SparseMatrix<Complex>;
using SparseR = Eigen::SparseMatrix<double>;

/// Base error. Every error carries a short machine-readable reason code
/// (e.g. "non_simple_polygon", "singular_system") next to the message.
class Error : public std::runtime_error {
 public:
  Error(std::string reason, const std::string& what)
      : std::runtime_error(what), reason_(std::move(reason)) {}

  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

/// Bad input: violated preconditions, malformed configs, inconsistent sizes.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (singular matrix, no convergence, ...).
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace parsys
