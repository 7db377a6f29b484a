#pragma once

// Implicit Euler for u' + A(t) u + Lambda u = f with discrete maximal
// regularity norms, the Lions constant check, the scalar shift transform and
// restriction/extension of trajectories.

#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "parsys/elliptic.hpp"

namespace parsys {

/// Uniform grid t_n = t0 + n tau, n = 0..N, tau = (T - t0)/N.
struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int N = 1;

  TimeGrid() = default;
  TimeGrid(double t0_, double T_, int N_) : t0(t0_), T(T_), N(N_) { validate(); }

  void validate() const {
    if (N < 1) throw InputError("invalid_grid", "time grid needs N >= 1");
    if (!(T > t0) || !std::isfinite(T) || !std::isfinite(t0)) throw InputError("invalid_grid", "time grid needs T > t0");
  }
  double tau() const { return (T - t0) / N; }
  double node(int n) const { return n == N ? T : t0 + n * tau(); }
  /// Index of the node equal to t (within 1e-9 tau), or -1.
  int index_of(double t) const {
    const double k = (t - t0) / tau();
    const double r = std::round(k);
    return (std::abs(k - r) <= 1e-9 && r >= 0 && r <= N) ? static_cast<int>(r) : -1;
  }
};

/// FE coefficient vectors u_0..u_N on a time grid.
struct Trajectory {
  TimeGrid grid;
  std::vector<VectorC> values;
  double r = 2.0;
  double q = 2.0;

  int steps() const { return grid.N; }
  /// Backward difference (u_n - u_{n-1}) / tau for n >= 1.
  VectorC derivative(int n) const {
    return (values[static_cast<size_t>(n)] - values[static_cast<size_t>(n - 1)]) / grid.tau();
  }

  Trajectory operator-(const Trajectory& o) const {
    Trajectory d = *this;
    for (size_t k = 0; k < values.size(); ++k) d.values[k] -= o.values[k];
    return d;
  }
  friend Trajectory operator*(Complex s, Trajectory t) {
    for (auto& v : t.values) v *= s;
    return t;
  }
};

/// Dual-vector time series f_0..f_N; f_0 is never used by the scheme.
using LoadSeries = std::vector<VectorC>;

inline LoadSeries zero_loads(const FESpace& sp, const TimeGrid& grid) {
  return LoadSeries(static_cast<size_t>(grid.N + 1), VectorC::Zero(sp.size()));
}

/// Loads from a pointwise source f(t, component, x).
inline LoadSeries sample_loads(const FESpace& sp, const TimeGrid& grid,
                               const std::function<Complex(double, int, const EvalPoint&)>& f) {
  LoadSeries out(static_cast<size_t>(grid.N + 1));
  for (int n = 0; n <= grid.N; ++n) {
    const double t = grid.node(n);
    out[static_cast<size_t>(n)] = sp.load([&](int i, const EvalPoint& p) { return f(t, i, p); });
  }
  return out;
}

/// Stiffness matrices at the nodes of a grid, assembled on demand. Constant
/// families are assembled once.
class StiffnessSequence {
 public:
  StiffnessSequence(std::shared_ptr<const FESpace> space, const TensorFamily& family, const TimeGrid& grid)
      : space_(std::move(space)), family_(&family), grid_(grid) {}

  /// Precomputed matrices, one per node 0..N (entry 0 may be empty).
  StiffnessSequence(std::shared_ptr<const FESpace> space, std::vector<SparseC> per_node, const TimeGrid& grid)
      : space_(std::move(space)), grid_(grid), per_node_(std::move(per_node)) {}

  bool constant() const { return family_ != nullptr && family_->is_constant(); }

  const SparseC& at(int n) const {
    if (!per_node_.empty()) return per_node_.at(static_cast<size_t>(n));
    const int key = constant() ? 0 : n;
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(key, space_->assemble_stiffness(family_->at(grid_.node(n)))).first;
      if (!constant() && cache_.size() > 2) cache_.erase(cache_.begin() == it ? std::next(it) : cache_.begin());
    }
    return it->second;
  }

 private:
  std::shared_ptr<const FESpace> space_;
  const TensorFamily* family_ = nullptr;
  TimeGrid grid_;
  std::vector<SparseC> per_node_;
  mutable std::map<int, SparseC> cache_;
};

/// Implicit Euler on nodes first+1..last of the grid (last = -1 means N):
///   (M + tau (K_n + Lambda M)) u_n = M u_{n-1} + tau f_n,
/// starting from u_first = u0. Values outside [first, last] are left zero.
inline Trajectory step_solve(const FESpace& sp, const StiffnessSequence& stiff, Complex shift, const LoadSeries& f,
                             const VectorC& u0, const TimeGrid& grid, int first = 0, int last = -1) {
  grid.validate();
  if (last < 0) last = grid.N;
  if (first < 0 || first > last || last > grid.N) throw InputError("invalid_window", "step window out of range");
  if (static_cast<int>(f.size()) != grid.N + 1) throw InputError("dimension_mismatch", "load series needs N+1 entries");
  if (u0.size() != sp.size()) throw InputError("dimension_mismatch", "initial value has wrong size");
  Trajectory u;
  u.grid = grid;
  u.values.assign(static_cast<size_t>(grid.N + 1), VectorC::Zero(sp.size()));
  u.values[static_cast<size_t>(first)] = u0;
  if (sp.size() == 0) return u;
  const double tau = grid.tau();
  const SparseC mass = sp.mass().cast<Complex>();
  const SparseC base = mass + (tau * shift) * mass;
  linalg::SparseSolver lu;
  bool factored = false;
  for (int n = first + 1; n <= last; ++n) {
    if (!factored || !stiff.constant()) {
      lu.factorize(SparseC(base + tau * stiff.at(n)));
      factored = true;
    }
    const VectorC rhs = mass * u.values[static_cast<size_t>(n - 1)] + tau * f[static_cast<size_t>(n)];
    u.values[static_cast<size_t>(n)] = lu.solve(rhs);
  }
  return u;
}

inline Trajectory step_solve(std::shared_ptr<const FESpace> sp, const TensorFamily& family, Complex shift,
                             const LoadSeries& f, const VectorC& u0, const TimeGrid& grid) {
  StiffnessSequence stiff(sp, family, grid);
  return step_solve(*sp, stiff, shift, f, u0, grid);
}

struct MaxRegNorm {
  double value = 0.0;
  double solution_part = 0.0;
  double derivative_part = 0.0;
  bool exact = true;  // false if some W^{-1,q} norm did not converge
};

/// (tau sum_{n=1}^N ||u_n||_{W^{1,q}}^r)^{1/r} + (tau sum_{n=1}^N ||(u_n - u_{n-1})/tau||_{W^{-1,q}}^r)^{1/r}.
/// The derivative is measured as the dual vector M (u_n - u_{n-1}) / tau.
inline MaxRegNorm maxreg_norm(const FESpace& sp, const Trajectory& u, double r, double q, int first = 0,
                              int last = -1) {
  if (last < 0) last = u.grid.N;
  if (!(r > 1.0) || !(q > 1.0) || !std::isfinite(r) || !std::isfinite(q))
    throw InputError("invalid_exponent", "maxreg_norm: r and q must lie in (1, inf)");
  MaxRegNorm out;
  const double tau = u.grid.tau();
  const SparseC mass = sp.mass().cast<Complex>();
  double s1 = 0.0, s2 = 0.0;
  for (int n = first + 1; n <= last; ++n) {
    const VectorC& un = u.values[static_cast<size_t>(n)];
    const double a = q == 2.0 ? sp.w12_norm(un) : w1p_norm(sp, un, q);
    s1 += tau * std::pow(a, r);
    const VectorC df = mass * u.derivative(n);
    const DualNormResult b = dual_norm(sp, df, q);
    out.exact = out.exact && b.converged;
    s2 += tau * std::pow(b.value, r);
  }
  out.solution_part = std::pow(s1, 1.0 / r);
  out.derivative_part = std::pow(s2, 1.0 / r);
  out.value = out.solution_part + out.derivative_part;
  return out;
}

/// (tau sum_{n=1}^N ||f_n||_{W^{-1,2}}^2)^{1/2}.
inline double load_l2_dual_norm(const FESpace& sp, const LoadSeries& f, const TimeGrid& grid, int first = 0) {
  double s = 0.0;
  for (int n = first + 1; n <= grid.N; ++n) s += grid.tau() * std::pow(sp.riesz_dual_norm(f[static_cast<size_t>(n)]), 2);
  return std::sqrt(s);
}

/// max_n ||u_n||_{L^2}: the computable surrogate for the trace-space norm.
inline double max_l2_norm(const FESpace& sp, const Trajectory& u) {
  double m = 0.0;
  for (const auto& v : u.values) m = std::max(m, sp.l2_norm(v));
  return m;
}

/// (tau sum_{n=1}^N ||e_n||_{W^{1,2}}^2)^{1/2}, the discrete L^2(W^{1,2}) norm.
inline double l2_w12_norm(const FESpace& sp, const Trajectory& u) {
  double s = 0.0;
  for (int n = 1; n <= u.grid.N; ++n) s += u.grid.tau() * std::pow(sp.w12_norm(u.values[static_cast<size_t>(n)]), 2);
  return std::sqrt(s);
}

inline double lions_constant(double lambda, double gamma, double M, double Lambda) {
  if (!(Lambda > lambda)) throw InputError("invalid_shift", "need Lambda > lambda");
  if (!(gamma > 0)) throw InputError("invalid_gamma", "need gamma > 0");
  const double mn = std::min(Lambda - lambda, gamma);
  return (mn + M + Lambda) / mn;
}

struct LionsReport {
  double c_theoretical = 0.0;
  double c_observed = 0.0;
  double lambda = 0.0, gamma = 0.0, M = 0.0, Lambda = 0.0;
  double min_garding = 0.0;  // smallest discrete Gårding constant over the nodes
  double tolerance = 0.05;
  bool precondition_ok = true;
  bool pass = false;
};

/// Solves with u0 = 0 and compares maxreg_norm(u, 2, 2) / ||f||_{L^2(W^{-1,2})}
/// against (min(Lambda - lambda, gamma) + M + Lambda) / min(Lambda - lambda, gamma).
/// The Gårding precondition is checked at every node; a violation is
/// reported in the result rather than thrown.
inline LionsReport lions_verify(std::shared_ptr<const FESpace> sp, const TensorFamily& family, double lambda,
                                double gamma, double M, double Lambda, const LoadSeries& f, const TimeGrid& grid,
                                double tol = 0.05) {
  LionsReport rep;
  rep.lambda = lambda;
  rep.gamma = gamma;
  rep.M = M;
  rep.Lambda = Lambda;
  rep.tolerance = tol;
  rep.c_theoretical = lions_constant(lambda, gamma, M, Lambda);

  StiffnessSequence stiff(sp, family, grid);
  rep.min_garding = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= grid.N; ++n) {
    DiscreteSystemOperator op{sp, family.at(grid.node(n)), stiff.at(n)};
    rep.min_garding = std::min(rep.min_garding, garding_constant(op, lambda).value);
    if (family.is_constant()) break;
  }
  rep.precondition_ok = rep.min_garding >= gamma - 1e-9;

  const double fn = load_l2_dual_norm(*sp, f, grid);
  if (fn == 0.0) {
    rep.c_observed = 0.0;
  } else {
    const Trajectory u = step_solve(*sp, stiff, Lambda, f, VectorC::Zero(sp->size()), grid);
    rep.c_observed = maxreg_norm(*sp, u, 2.0, 2.0).value / fn;
  }
  rep.pass = rep.precondition_ok && rep.c_observed <= rep.c_theoretical * (1.0 + tol);
  return rep;
}

struct ShiftTransformReport {
  Complex mu;
  double error_coarse = 0.0;  // max_n ||u_n - u~_n||_{L^2} at tau
  double error_fine = 0.0;    // same at tau / 2
  double ratio = 0.0;
};

/// Compares the shifted solve (shift mu) with e^{-mu t_n} v_n, where v solves
/// the unshifted problem with data e^{mu t_n} f_n, on grid and on the grid
/// with half the step. `f` is a pointwise source f(t, component, x).
inline ShiftTransformReport shift_transform_check(std::shared_ptr<const FESpace> sp, const TensorFamily& family,
                                                  Complex mu,
                                                  const std::function<Complex(double, int, const EvalPoint&)>& f,
                                                  const VectorC& u0, const TimeGrid& grid) {
  ShiftTransformReport rep;
  rep.mu = mu;
  auto error_on = [&](const TimeGrid& g) {
    const LoadSeries fs = sample_loads(*sp, g, f);
    LoadSeries fw(fs.size());
    for (int n = 0; n <= g.N; ++n) fw[static_cast<size_t>(n)] = std::exp(mu * (g.node(n) - g.t0)) * fs[static_cast<size_t>(n)];
    const Trajectory u = step_solve(sp, family, mu, fs, u0, g);
    const Trajectory v = step_solve(sp, family, 0.0, fw, u0, g);
    double e = 0.0;
    for (int n = 0; n <= g.N; ++n) {
      const VectorC ut = std::exp(-mu * (g.node(n) - g.t0)) * v.values[static_cast<size_t>(n)];
      e = std::max(e, sp->l2_norm(u.values[static_cast<size_t>(n)] - ut));
    }
    return e;
  };
  rep.error_coarse = error_on(grid);
  rep.error_fine = error_on(TimeGrid(grid.t0, grid.T, 2 * grid.N));
  rep.ratio = rep.error_fine > 0 ? rep.error_coarse / rep.error_fine : std::numeric_limits<double>::infinity();
  return rep;
}

/// Truncates a trajectory to the nodes 0..index_of(S).
inline Trajectory restrict(const Trajectory& u, double S) {
  const int k = u.grid.index_of(S);
  if (k < 1) throw InputError("not_a_node", "restrict: S must be a positive grid node");
  Trajectory out;
  out.grid = TimeGrid(u.grid.t0, u.grid.node(k), k);
  out.r = u.r;
  out.q = u.q;
  out.values.assign(u.values.begin(), u.values.begin() + k + 1);
  return out;
}

/// Extends a trajectory given on (t0, S) to `full` by solving
/// v' + (-Delta + 1) v = chi_(t0,S) [u' + (-Delta + 1) u], v(t0) = u(t0),
/// with the same implicit Euler scheme; the forcing is built so that each
/// step up to S reproduces u_n.
inline Trajectory extend(const FESpace& sp, const Trajectory& u, const TimeGrid& full) {
  const int k = full.index_of(u.grid.T);
  if (k < 0 || std::abs(full.tau() - u.grid.tau()) > 1e-12 * full.tau() || std::abs(full.t0 - u.grid.t0) > 1e-12)
    throw InputError("not_a_node", "extend: trajectory grid must be a prefix of the target grid");
  if (k == full.N) return u;
  const SparseC mass = sp.mass().cast<Complex>();
  const SparseC ref = sp.grad_mass().cast<Complex>() + mass;
  LoadSeries f(static_cast<size_t>(full.N + 1), VectorC::Zero(sp.size()));
  for (int n = 1; n <= k; ++n)
    f[static_cast<size_t>(n)] = mass * u.derivative(n) + ref * u.values[static_cast<size_t>(n)];
  auto space = std::shared_ptr<const FESpace>(&sp, [](const FESpace*) {});
  StiffnessSequence stiff(space, std::vector<SparseC>(static_cast<size_t>(full.N + 1), sp.grad_mass().cast<Complex>()),
                          full);
  return step_solve(sp, stiff, 1.0, f, u.values.front(), full);
}

/// CSV with one row per node: t, then re/im of every dof.
inline void write_trajectory_csv(const Trajectory& u, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InputError("io_error", "cannot open " + path);
  os << std::setprecision(17) << "t";
  const Eigen::Index n = u.values.empty() ? 0 : u.values.front().size();
  for (Eigen::Index k = 0; k < n; ++k) os << ",re" << k << ",im" << k;
  os << '\n';
  for (int j = 0; j <= u.grid.N; ++j) {
    os << u.grid.node(j);
    for (Eigen::Index k = 0; k < n; ++k)
      os << ',' << u.values[static_cast<size_t>(j)](k).real() << ',' << u.values[static_cast<size_t>(j)](k).imag();
    os << '\n';
  }
}

/// Discrete W^{1,2} error ||u_h - u||_{W^{1,2}} of a P1 function against an
/// exact solution given by values and gradients (edge-midpoint rule).
inline double w12_error(const FESpace& sp, const VectorC& uh,
                        const std::function<Complex(int, const Point2&)>& value,
                        const std::function<std::array<Complex, 2>(int, const Point2&)>& grad) {
  double s = 0.0;
  for (const auto& q : sp.quadrature())
    for (int i = 0; i < sp.num_components(); ++i) {
      const auto gh = sp.gradient(uh, i, q.cell);
      const auto ge = grad(i, q.x);
      s += q.weight * (std::norm(sp.value(uh, i, q.cell, q.bary) - value(i, q.x)) + std::norm(gh[0] - ge[0]) +
                       std::norm(gh[1] - ge[1]));
    }
  return std::sqrt(s);
}

/// (tau sum_{n=1}^N ||u_h(t_n) - u(t_n)||_{W^{1,2}}^2)^{1/2}.
inline double l2_w12_error(const FESpace& sp, const Trajectory& u,
                           const std::function<Complex(double, int, const Point2&)>& value,
                           const std::function<std::array<Complex, 2>(double, int, const Point2&)>& grad) {
  double s = 0.0;
  for (int n = 1; n <= u.grid.N; ++n) {
    const double t = u.grid.node(n);
    const double e = w12_error(
        sp, u.values[static_cast<size_t>(n)], [&](int i, const Point2& x) { return value(t, i, x); },
        [&](int i, const Point2& x) { return grad(t, i, x); });
    s += u.grid.tau() * e * e;
  }
  return std::sqrt(s);
}

/// Hölder/trace embedding thresholds for the maximal regularity space:
/// requires q > d and r > 2 / (1 - d/q); the Hölder exponent is any
/// alpha < 1 - 2/r - d/q.
struct ThresholdDiagnostic {
  bool q_above_d = false;
  double r_threshold = std::numeric_limits<double>::infinity();
  bool r_above_threshold = false;
  double alpha_sup = 0.0;
  bool admissible = false;
};

inline ThresholdDiagnostic threshold_diagnostic(double r, double q, int d = 2) {
  ThresholdDiagnostic t;
  t.q_above_d = q > d;
  if (t.q_above_d) t.r_threshold = 2.0 / (1.0 - d / q);
  t.r_above_threshold = t.q_above_d && r > t.r_threshold;
  t.alpha_sup = t.r_above_threshold ? 1.0 - 2.0 / r - d / q : 0.0;
  t.admissible = t.r_above_threshold;
  return t;
}

}  // namespace parsys
