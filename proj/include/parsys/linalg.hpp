#pragma once

// Small dense Hermitian eigenvalue routines (cyclic Jacobi) and a thin
// sparse LU wrapper with residual checking.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/SparseLU>

#include "parsys/core.hpp"

namespace parsys::linalg {

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations,
/// returned in ascending order. Iterates until the off-diagonal Frobenius
/// norm drops below tol times the matrix norm.
inline std::vector<double> jacobi_eigenvalues(MatrixR a, double tol = 1e-12,
                                              int max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw InputError("not_square", "jacobi_eigenvalues: matrix is not square");
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
        // Rotation angle zeroing a(p,q); t = tan(theta), the smaller root.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// Eigenvalues of a complex Hermitian matrix (ascending). Uses the real
/// symmetric embedding [[Re H, -Im H], [Im H, Re H]], whose spectrum is that of
/// H with every eigenvalue doubled.
inline std::vector<double> hermitian_eigenvalues(const MatrixC& h, double tol = 1e-12) {
  const Eigen::Index n = h.rows();
  MatrixR big(2 * n, 2 * n);
  big.topLeftCorner(n, n) = h.real();
  big.topRightCorner(n, n) = -h.imag();
  big.bottomLeftCorner(n, n) = h.imag();
  big.bottomRightCorner(n, n) = h.real();
  big = 0.5 * (big + big.transpose()).eval();
  const auto doubled = jacobi_eigenvalues(std::move(big), tol);
  std::vector<double> ev(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = doubled[static_cast<size_t>(2 * i)];
  return ev;
}

inline MatrixC hermitian_part(const MatrixC& a) { return 0.5 * (a + a.adjoint()); }

/// Smallest eigenvalue of the Hermitian part of a square complex matrix.
inline double min_hermitian_eigenvalue(const MatrixC& a) {
  if (a.size() == 0) return std::numeric_limits<double>::infinity();
  return hermitian_eigenvalues(hermitian_part(a)).front();
}

/// Spectral norm, sqrt of the largest eigenvalue of A^H A.
inline double spectral_norm(const MatrixC& a) {
  if (a.size() == 0) return 0.0;
  const MatrixC g = a.adjoint() * a;
  return std::sqrt(std::max(0.0, hermitian_eigenvalues(g).back()));
}

/// Sparse LU factorization of a square complex matrix with a relative
/// residual check on every solve.
class SparseSolver {
 public:
  SparseSolver() = default;
  explicit SparseSolver(const SparseC& a, double residual_tol = 1e-10) { factorize(a, residual_tol); }

  void factorize(const SparseC& a, double residual_tol = 1e-10) {
    if (a.rows() != a.cols()) throw InputError("not_square", "SparseSolver: matrix is not square");
    a_ = a;
    a_.makeCompressed();
    residual_tol_ = residual_tol;
    if (a_.rows() == 0) return;
    lu_.analyzePattern(a_);
    lu_.factorize(a_);
    if (lu_.info() != Eigen::Success) {
      std::ostringstream os;
      os << "sparse LU failed: " << lu_.lastErrorMessage();
      throw SolverError("singular_system", os.str());
    }
  }

  Eigen::Index size() const { return a_.rows(); }
  const SparseC& matrix() const { return a_; }

  VectorC solve(const VectorC& b) const {
    if (b.size() != a_.rows()) throw InputError("dimension_mismatch", "SparseSolver: rhs size mismatch");
    if (a_.rows() == 0) return VectorC();
    VectorC x = lu_.solve(b);
    const double bn = b.norm();
    const double res = (a_ * x - b).norm();
    last_residual_ = bn > 0 ? res / bn : res;
    if (!std::isfinite(last_residual_) || (bn > 0 && last_residual_ > residual_tol_)) {
      std::ostringstream os;
      os << "sparse LU solve residual " << last_residual_ << " exceeds " << residual_tol_;
      throw SolverError("singular_system", os.str());
    }
    return x;
  }

  double last_relative_residual() const { return last_residual_; }

 private:
  SparseC a_;
  // SparseLU is not copyable; solvers are held by value in a single owner.
  mutable Eigen::SparseLU<SparseC, Eigen::COLAMDOrdering<int>> lu_;
  double residual_tol_ = 1e-10;
  mutable double last_residual_ = 0.0;
};

inline SparseC to_complex(const SparseR& a) { return a.cast<Complex>(); }

}  // namespace parsys::linalg
