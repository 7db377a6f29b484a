#pragma once

// Coefficient tensors [[d, c^T], [b, A]] of divergence-form systems and the
// pointwise ellipticity constants of their principal part.
//
// Layout of the (m + m d) block matrix acting on [u; grad u]:
//   index j            -> u_j
//   index m + j d + k  -> d_k u_j
// so A^{ij}_{kl} sits at (m + i d + k, m + j d + l), b^{ij}_k at (m + i d + k, j),
// c^{ij}_l at (i, m + j d + l) and d^{ij} at (i, j).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "parsys/core.hpp"
#include "parsys/linalg.hpp"

namespace parsys {

/// A spatial point at which a coefficient field is evaluated. During FE
/// assembly `cell` and `bary` identify the quadrature point so that
/// state-dependent fields can evaluate P1 functions without point location.
struct EvalPoint {
  Eigen::VectorXd x;
  int cell = -1;
  std::array<double, 3> bary{};
};

using TensorField = std::function<MatrixC(const EvalPoint&)>;

class CoefficientTensor {
 public:
  CoefficientTensor() = default;

  /// Zero constant tensor.
  CoefficientTensor(int m, int d) : m_(m), d_(d), constant_(MatrixC::Zero(m + m * d, m + m * d)) {
    if (m < 1 || d < 1) throw InputError("invalid_tensor", "tensor needs m >= 1 and d >= 1");
  }

  static CoefficientTensor identity(int m, int d) {
    CoefficientTensor t(m, d);
    t.constant_.bottomRightCorner(m * d, m * d).setIdentity();
    return t;
  }

  static CoefficientTensor from_block(int m, int d, MatrixC block) {
    CoefficientTensor t(m, d);
    if (block.rows() != t.size() || block.cols() != t.size())
      throw InputError("invalid_tensor", "block matrix must be (m+md)x(m+md)");
    t.constant_ = std::move(block);
    return t;
  }

  /// Spatially varying tensor; `f` must return (m+md)x(m+md) matrices.
  static CoefficientTensor field(int m, int d, TensorField f) {
    CoefficientTensor t(m, d);
    t.field_ = std::move(f);
    return t;
  }

  int m() const { return m_; }
  int d() const { return d_; }
  int size() const { return m_ + m_ * d_; }
  bool is_constant() const { return !field_; }

  const MatrixC& block() const {
    if (field_) throw InputError("not_constant", "tensor is a spatial field; evaluate it at a point");
    return constant_;
  }

  MatrixC block(const EvalPoint& x) const {
    if (!field_) return constant_;
    MatrixC b = field_(x);
    if (b.rows() != size() || b.cols() != size())
      throw SolverError("tensor_evaluation", "tensor field returned a block of the wrong shape");
    if (!b.allFinite()) throw SolverError("tensor_evaluation", "tensor field returned non-finite entries");
    return b;
  }

  int grad_index(int j, int k) const { return m_ + j * d_ + k; }

  // Element access for constant tensors.
  MatrixC A(int i, int j) const { return block().block(grad_index(i, 0), grad_index(j, 0), d_, d_); }
  VectorC b(int i, int j) const { return block().block(grad_index(i, 0), j, d_, 1); }
  VectorC c(int i, int j) const { return block().block(i, grad_index(j, 0), 1, d_).transpose(); }
  Complex dd(int i, int j) const { return block()(i, j); }

  CoefficientTensor& set_A(int i, int j, const MatrixC& a) {
    mutable_block().block(grad_index(i, 0), grad_index(j, 0), d_, d_) = a;
    return *this;
  }
  CoefficientTensor& set_b(int i, int j, const VectorC& v) {
    mutable_block().block(grad_index(i, 0), j, d_, 1) = v;
    return *this;
  }
  CoefficientTensor& set_c(int i, int j, const VectorC& v) {
    mutable_block().block(i, grad_index(j, 0), 1, d_) = v.transpose();
    return *this;
  }
  CoefficientTensor& set_dd(int i, int j, Complex v) {
    mutable_block()(i, j) = v;
    return *this;
  }

  /// The md x md principal block (second-order coefficients only).
  static MatrixC principal(const MatrixC& block, int m, int d) {
    return block.bottomRightCorner(m * d, m * d);
  }

  friend CoefficientTensor operator+(const CoefficientTensor& x, const CoefficientTensor& y) {
    check_same_shape(x, y);
    if (x.is_constant() && y.is_constant()) return from_block(x.m_, x.d_, x.constant_ + y.constant_);
    return field(x.m_, x.d_, [x, y](const EvalPoint& p) { return MatrixC(x.block(p) + y.block(p)); });
  }

  friend CoefficientTensor operator*(Complex s, const CoefficientTensor& x) {
    if (x.is_constant()) return from_block(x.m_, x.d_, s * x.constant_);
    return field(x.m_, x.d_, [s, x](const EvalPoint& p) { return MatrixC(s * x.block(p)); });
  }

 private:
  MatrixC& mutable_block() {
    if (field_) throw InputError("not_constant", "cannot set entries of a field tensor");
    return constant_;
  }

  static void check_same_shape(const CoefficientTensor& x, const CoefficientTensor& y) {
    if (x.m_ != y.m_ || x.d_ != y.d_) throw InputError("dimension_mismatch", "tensor shapes differ");
  }

  int m_ = 0;
  int d_ = 0;
  MatrixC constant_;
  TensorField field_;
};

/// Matrix M(eta) with entries eta . A^{ij} eta (eta real).
inline MatrixC rank_one_symbol(const MatrixC& principal, int m, int d, const Eigen::VectorXd& eta) {
  MatrixC sym(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Complex s = 0.0;
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) s += eta(k) * principal(i * d + k, j * d + l) * eta(l);
      sym(i, j) = s;
    }
  return sym;
}

namespace detail {

inline std::vector<EvalPoint> default_samples(const CoefficientTensor& t, const std::vector<EvalPoint>& pts) {
  if (t.is_constant() && pts.empty()) return {EvalPoint{Eigen::VectorXd::Zero(t.d())}};
  if (pts.empty()) throw InputError("empty_samples", "need at least one sample point for a field tensor");
  return pts;
}

/// Unit directions for the rank-one search in d >= 3: a Fibonacci lattice on
/// S^2 for d = 3, a fixed-seed Gaussian sample otherwise.
inline std::vector<Eigen::VectorXd> sphere_directions(int d, int n) {
  std::vector<Eigen::VectorXd> dirs;
  if (d == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n; ++k) {
      const double z = 1.0 - 2.0 * (k + 0.5) / n;
      const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
      Eigen::VectorXd e(3);
      e << rad * std::cos(golden * k), rad * std::sin(golden * k), z;
      dirs.push_back(e);
    }
    return dirs;
  }
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> g;
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd e(d);
    for (int i = 0; i < d; ++i) e(i) = g(rng);
    dirs.push_back(e.normalized());
  }
  return dirs;
}

}  // namespace detail

/// Smallest eigenvalue of the Hermitian part of the principal block, minimized
/// over the sample points. Positive values certify the Legendre condition on
/// the samples. Constant tensors may pass an empty sample list.
inline double legendre_constant(const CoefficientTensor& t, const std::vector<EvalPoint>& samples = {}) {
  double gamma = std::numeric_limits<double>::infinity();
  for (const auto& p : detail::default_samples(t, samples)) {
    const MatrixC pr = CoefficientTensor::principal(t.block(p), t.m(), t.d());
    gamma = std::min(gamma, linalg::min_hermitian_eigenvalue(pr));
  }
  return gamma;
}

struct RankOneMinimizer {
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd eta;
  VectorC zeta;
};

/// Minimizes lambda_min(Re M(eta)) over unit eta at one principal block.
/// d = 2: `grid` equally spaced angles on [0, 2pi) followed by a golden-section
/// pass in the two grid cells around the best angle. d = 1: eta = 1.
/// d >= 3: grid^(d-1) quasi-uniform directions (capped at 20000) followed by a
/// shrinking coordinate pattern search.
inline RankOneMinimizer minimize_rank_one(const MatrixC& principal, int m, int d, int grid) {
  auto evaluate = [&](const Eigen::VectorXd& eta) {
    return linalg::min_hermitian_eigenvalue(rank_one_symbol(principal, m, d, eta));
  };
  RankOneMinimizer best;
  auto consider = [&](const Eigen::VectorXd& eta) {
    const double v = evaluate(eta);
    if (v < best.value) {
      best.value = v;
      best.eta = eta;
    }
    return v;
  };

  if (d == 1) {
    consider(Eigen::VectorXd::Ones(1));
  } else if (d == 2) {
    auto dir = [](double th) {
      Eigen::VectorXd e(2);
      e << std::cos(th), std::sin(th);
      return e;
    };
    const double step = 2.0 * std::numbers::pi / grid;
    int kbest = 0;
    double vbest = std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid; ++k) {
      const double v = consider(dir(k * step));
      if (v < vbest) {
        vbest = v;
        kbest = k;
      }
    }
    // Golden-section refinement on [theta_best - step, theta_best + step].
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = (kbest - 1) * step, hi = (kbest + 1) * step;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = consider(dir(x1)), f2 = consider(dir(x2));
    for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - phi * (hi - lo);
        f1 = consider(dir(x1));
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + phi * (hi - lo);
        f2 = consider(dir(x2));
      }
    }
  } else {
    const double n = std::min(20000.0, std::pow(static_cast<double>(grid), d - 1));
    for (const auto& e : detail::sphere_directions(d, static_cast<int>(n))) consider(e);
    double h = 1.0 / std::sqrt(n);
    for (int it = 0; it < 60 && h > 1e-10; ++it) {
      bool improved = false;
      const Eigen::VectorXd center = best.eta;
      for (int i = 0; i < d; ++i)
        for (double s : {-h, h}) {
          Eigen::VectorXd e = center;
          e(i) += s;
          const double before = best.value;
          consider(e.normalized());
          improved = improved || best.value < before;
        }
      if (!improved) h *= 0.5;
    }
  }

  const MatrixC herm = linalg::hermitian_part(rank_one_symbol(principal, m, d, best.eta));
  Eigen::SelfAdjointEigenSolver<MatrixC> es(herm);
  best.zeta = es.eigenvectors().col(0);
  return best;
}

/// Legendre–Hadamard constant: min over samples and unit eta of the smallest
/// eigenvalue of Re M(eta). Never smaller than legendre_constant (up to
/// round-off) since it minimizes over rank-one matrices only.
inline double legendre_hadamard_constant(const CoefficientTensor& t, const std::vector<EvalPoint>& samples = {},
                                         int eta_grid_size = 720) {
  if (eta_grid_size < 8) throw InputError("invalid_grid", "eta_grid_size must be at least 8");
  double gamma = std::numeric_limits<double>::infinity();
  for (const auto& p : detail::default_samples(t, samples)) {
    const MatrixC pr = CoefficientTensor::principal(t.block(p), t.m(), t.d());
    gamma = std::min(gamma, minimize_rank_one(pr, t.m(), t.d(), eta_grid_size).value);
  }
  return gamma;
}

/// Time-dependent coefficient tensor family on [t0, t1].
class TensorFamily {
 public:
  enum class Mode { constant, tabulated, time_function, nonlocal };

  static TensorFamily constant(CoefficientTensor t) {
    TensorFamily f;
    f.mode_ = Mode::constant;
    f.m_ = t.m();
    f.d_ = t.d();
    f.table_.push_back({0.0, std::move(t)});
    return f;
  }

  /// Tensors at increasing times. Evaluation between table times
  /// interpolates linearly for constant tensors and takes the right
  /// endpoint for field tensors.
  static TensorFamily tabulated(std::vector<std::pair<double, CoefficientTensor>> table) {
    if (table.empty()) throw InputError("invalid_family", "tabulated family needs at least one entry");
    for (size_t k = 1; k < table.size(); ++k)
      if (!(table[k].first > table[k - 1].first))
        throw InputError("invalid_family", "tabulated times must be strictly increasing");
    TensorFamily f;
    f.mode_ = Mode::tabulated;
    f.m_ = table.front().second.m();
    f.d_ = table.front().second.d();
    for (const auto& [t, ten] : table)
      if (ten.m() != f.m_ || ten.d() != f.d_) throw InputError("dimension_mismatch", "family tensors differ in shape");
    f.table_ = std::move(table);
    return f;
  }

  static TensorFamily time_function(int m, int d, std::function<CoefficientTensor(double)> fn) {
    TensorFamily f;
    f.mode_ = Mode::time_function;
    f.m_ = m;
    f.d_ = d;
    f.fn_ = std::move(fn);
    return f;
  }

  /// Frozen evaluation of a nonlocal (Volterra) coefficient map: one tensor
  /// per time node, computed from a trajectory prefix.
  static TensorFamily frozen_nonlocal(std::vector<std::pair<double, CoefficientTensor>> per_node) {
    TensorFamily f = tabulated(std::move(per_node));
    f.mode_ = Mode::nonlocal;
    return f;
  }

  Mode mode() const { return mode_; }
  int m() const { return m_; }
  int d() const { return d_; }
  bool is_constant() const { return mode_ == Mode::constant; }

  std::optional<double> declared_sup_norm;

  CoefficientTensor at(double t) const {
    switch (mode_) {
      case Mode::constant:
        return table_.front().second;
      case Mode::time_function: {
        CoefficientTensor v = fn_(t);
        if (v.m() != m_ || v.d() != d_) throw SolverError("family_evaluation", "family returned wrong shape");
        return v;
      }
      case Mode::tabulated:
      case Mode::nonlocal:
        break;
    }
    const double scale = std::max(1.0, std::abs(table_.back().first));
    for (const auto& [tk, ten] : table_)
      if (std::abs(tk - t) <= 1e-12 * scale) return ten;
    if (t <= table_.front().first) return table_.front().second;
    if (t >= table_.back().first) return table_.back().second;
    const auto hi = std::upper_bound(table_.begin(), table_.end(), t,
                                     [](double x, const auto& e) { return x < e.first; });
    const auto lo = hi - 1;
    if (!lo->second.is_constant() || !hi->second.is_constant()) return hi->second;
    const double w = (t - lo->first) / (hi->first - lo->first);
    return CoefficientTensor::from_block(m_, d_, (1.0 - w) * lo->second.block() + w * hi->second.block());
  }

  const std::vector<std::pair<double, CoefficientTensor>>& table() const { return table_; }

 private:
  Mode mode_ = Mode::constant;
  int m_ = 0;
  int d_ = 0;
  std::vector<std::pair<double, CoefficientTensor>> table_;
  std::function<CoefficientTensor(double)> fn_;
};

/// Spectral norm of the full block matrix, maximized over sample points.
inline double tensor_norm(const CoefficientTensor& t, const std::vector<EvalPoint>& samples = {}) {
  double n = 0.0;
  for (const auto& p : detail::default_samples(t, samples)) n = std::max(n, linalg::spectral_norm(t.block(p)));
  return n;
}

/// max over time samples (and spatial samples for field tensors) of the
/// spectral norm of the (m+md)x(m+md) block matrix.
inline double tensor_sup_norm(const TensorFamily& f, const std::vector<double>& t_samples,
                              const std::vector<EvalPoint>& spatial = {}) {
  double n = 0.0;
  for (double t : t_samples) n = std::max(n, tensor_norm(f.at(t), spatial));
  return n;
}

}  // namespace parsys
