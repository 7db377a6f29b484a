#pragma once

// Quasilinear problems u' + L(u)_t u = Phi(u), u(0) = u0, with coefficient
// and right-hand-side maps of Volterra type: frozen-coefficient Picard
// iteration, the cut-off around the initial tensor, and window-by-window
// continuation for sublinear right-hand sides.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "parsys/parabolic.hpp"

namespace parsys {

/// Read-only view of a trajectory up to node n. Maps evaluated through a
/// prefix cannot see later nodes.
class TrajectoryPrefix {
 public:
  TrajectoryPrefix(const FESpace& sp, const TimeGrid& grid, const std::vector<VectorC>& values, int n)
      : sp_(&sp), grid_(grid), values_(&values), n_(n) {}

  const FESpace& space() const { return *sp_; }
  const TimeGrid& grid() const { return grid_; }
  int node() const { return n_; }
  double time() const { return grid_.node(n_); }
  const VectorC& at(int k) const {
    if (k < 0 || k > n_) throw InputError("causality", "prefix access beyond the current node");
    return (*values_)[static_cast<size_t>(k)];
  }
  const VectorC& current() const { return at(n_); }

 private:
  const FESpace* sp_;
  TimeGrid grid_;
  const std::vector<VectorC>* values_;
  int n_;
};

/// Map from trajectory prefixes to a per-node output (a coefficient tensor or
/// a dual vector). `at` evaluates one prefix; `apply_all` evaluates the nodes
/// first..last of a trajectory in one sweep and must agree with `at`.
template <class Output>
class VolterraMap {
 public:
  using PrefixFn = std::function<Output(const TrajectoryPrefix&)>;
  using BatchFn = std::function<std::vector<Output>(const FESpace&, const Trajectory&, int first, int last)>;

  VolterraMap() = default;
  VolterraMap(std::string name, PrefixFn fn, bool state_dependent = true)
      : name_(std::move(name)), fn_(std::move(fn)), state_dependent_(state_dependent) {}

  const std::string& name() const { return name_; }
  bool state_dependent() const { return state_dependent_; }

  VolterraMap& with_batch(BatchFn b) {
    batch_ = std::move(b);
    return *this;
  }

  Output at(const TrajectoryPrefix& p) const { return fn_(p); }

  std::vector<Output> apply_all(const FESpace& sp, const Trajectory& u, int first, int last) const {
    if (batch_) return batch_(sp, u, first, last);
    std::vector<Output> out;
    out.reserve(static_cast<size_t>(last - first + 1));
    for (int n = first; n <= last; ++n) out.push_back(fn_(TrajectoryPrefix(sp, u.grid, u.values, n)));
    return out;
  }

  std::optional<double> declared_lipschitz;
  // Sublinear growth data ||Phi(u) - Phi(0)|| <= C (1 + ||u||) with
  // integrability exponent s; only meaningful for right-hand sides.
  double growth_constant = 0.0;
  double growth_exponent = std::numeric_limits<double>::infinity();

 private:
  std::string name_;
  PrefixFn fn_;
  BatchFn batch_;
  bool state_dependent_ = true;
};

using CoefficientMap = VolterraMap<CoefficientTensor>;
using ForcingMap = VolterraMap<VectorC>;

struct CutoffConfig {
  double eps = 1.0;
  CoefficientTensor A0;
};

/// A0 + kappa_eps(raw - A0) entrywise, kappa_eps(s) = s for |s| <= eps and
/// eps s/|s| otherwise.
inline MatrixC cutoff_block(double eps, const MatrixC& a0, const MatrixC& raw) {
  MatrixC out = raw;
  for (Eigen::Index i = 0; i < raw.rows(); ++i)
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const Complex s = raw(i, j) - a0(i, j);
      const double a = std::abs(s);
      if (a > eps) out(i, j) = a0(i, j) + eps * (s / a);
    }
  return out;
}

inline CoefficientTensor cutoff_apply(const CutoffConfig& cfg, const CoefficientTensor& raw) {
  if (!(cfg.eps > 0)) throw InputError("invalid_eps", "cut-off eps must be positive");
  if (raw.m() != cfg.A0.m() || raw.d() != cfg.A0.d()) throw InputError("dimension_mismatch", "cut-off anchor shape");
  if (raw.is_constant() && cfg.A0.is_constant())
    return CoefficientTensor::from_block(raw.m(), raw.d(), cutoff_block(cfg.eps, cfg.A0.block(), raw.block()));
  const double eps = cfg.eps;
  const CoefficientTensor a0 = cfg.A0;
  return CoefficientTensor::field(raw.m(), raw.d(), [eps, a0, raw](const EvalPoint& p) {
    return cutoff_block(eps, a0.block(p), raw.block(p));
  });
}

/// Entrywise sup |A - B| over the quadrature points of the space.
inline double componentwise_distance(const FESpace& sp, const CoefficientTensor& a, const CoefficientTensor& b) {
  if (a.is_constant() && b.is_constant()) return (a.block() - b.block()).cwiseAbs().maxCoeff();
  double mx = 0.0;
  for (const auto& q : sp.quadrature()) {
    const EvalPoint p = FESpace::make_eval_point(q);
    mx = std::max(mx, (a.block(p) - b.block(p)).cwiseAbs().maxCoeff());
  }
  return mx;
}

struct PicardOptions {
  double tol = 1e-8;
  int max_iter = 50;
  Complex shift = 0.0;
  std::optional<CutoffConfig> cutoff;
};

struct PicardResult {
  Trajectory u;
  int iterations = 0;
  std::vector<double> residuals;  // relative maxreg(2,2) increments
  bool converged = false;
};

/// Frozen-coefficient fixed-point iteration on the window (first, last]:
///   u^{k+1} solves u' + L(u^k) u = Phi(u^k) with u(t_first) = start(t_first).
/// `start` provides the history at nodes <= first; the initial iterate is
/// `guess` if given, else the constant continuation of u(t_first). Stops when
/// maxreg(u^{k+1} - u^k) <= tol (1 + maxreg(u^{k+1})) on the window.
inline PicardResult picard_solve(std::shared_ptr<const FESpace> sp, const CoefficientMap& a_map,
                                 const ForcingMap* phi, const Trajectory& start, int first, int last,
                                 const PicardOptions& opt = {}, const Trajectory* guess = nullptr) {
  const TimeGrid& grid = start.grid;
  if (last < 0) last = grid.N;
  if (first < 0 || first >= last || last > grid.N) throw InputError("invalid_window", "Picard window out of range");
  if (static_cast<int>(start.values.size()) != grid.N + 1) throw InputError("dimension_mismatch", "history size");
  PicardResult res;
  res.u = guess ? *guess : start;
  for (int n = 0; n <= first; ++n) res.u.values[static_cast<size_t>(n)] = start.values[static_cast<size_t>(n)];
  if (!guess)
    for (int n = first + 1; n <= grid.N; ++n) res.u.values[static_cast<size_t>(n)] = start.values[static_cast<size_t>(first)];

  for (int it = 1; it <= opt.max_iter; ++it) {
    res.iterations = it;
    const std::vector<CoefficientTensor> tensors = a_map.apply_all(*sp, res.u, first + 1, last);
    std::vector<SparseC> stiff(static_cast<size_t>(grid.N + 1));
    for (int n = first + 1; n <= last; ++n) {
      const CoefficientTensor& raw = tensors[static_cast<size_t>(n - first - 1)];
      stiff[static_cast<size_t>(n)] = sp->assemble_stiffness(opt.cutoff ? cutoff_apply(*opt.cutoff, raw) : raw);
    }
    LoadSeries f = zero_loads(*sp, grid);
    if (phi) {
      const std::vector<VectorC> loads = phi->apply_all(*sp, res.u, first + 1, last);
      for (int n = first + 1; n <= last; ++n) f[static_cast<size_t>(n)] = loads[static_cast<size_t>(n - first - 1)];
    }
    StiffnessSequence seq(sp, std::move(stiff), grid);
    Trajectory next = step_solve(*sp, seq, opt.shift, f, res.u.values[static_cast<size_t>(first)], grid, first, last);
    for (int n = 0; n < first; ++n) next.values[static_cast<size_t>(n)] = res.u.values[static_cast<size_t>(n)];
    for (int n = last + 1; n <= grid.N; ++n) next.values[static_cast<size_t>(n)] = next.values[static_cast<size_t>(last)];

    const double diff = maxreg_norm(*sp, next - res.u, 2.0, 2.0, first, last).value;
    const double size = maxreg_norm(*sp, next, 2.0, 2.0, first, last).value;
    res.u = std::move(next);
    res.residuals.push_back(diff / (1.0 + size));
    if (diff <= opt.tol * (1.0 + size)) {
      res.converged = true;
      return res;
    }
  }
  std::ostringstream os;
  os << "Picard iteration did not converge in " << opt.max_iter << " iterations; last relative increment "
     << res.residuals.back();
  throw SolverError("no_convergence", os.str());
}

inline PicardResult picard_solve(std::shared_ptr<const FESpace> sp, const CoefficientMap& a_map,
                                 const ForcingMap* phi, const VectorC& u0, const TimeGrid& grid,
                                 const PicardOptions& opt = {}) {
  Trajectory start;
  start.grid = grid;
  start.values.assign(static_cast<size_t>(grid.N + 1), u0);
  return picard_solve(std::move(sp), a_map, phi, start, 0, grid.N, opt);
}

/// Window length l with (1 + C_E C_Phi l^e) C_L l^e <= 1/2, e = 1/r - 1/s.
inline double continuation_window_length(double lions, double c_e, double c_phi, double r, double s) {
  if (!(s > r)) throw InputError("invalid_exponent", "continuation needs s > r");
  const double e = 1.0 / r - (std::isfinite(s) ? 1.0 / s : 0.0);
  const double k = c_e * c_phi;
  const double a = k > 0 ? (-lions + std::sqrt(lions * lions + 2.0 * k * lions)) / (2.0 * k * lions) : 0.5 / lions;
  return std::pow(a, 1.0 / e);
}

struct ContinuationOptions {
  double lambda = 0.0;
  double gamma = 1.0;
  double M = 1.0;
  std::optional<double> Lambda;  // shift in the Lions constant; default lambda + gamma
  double r = 2.0;
  double C_E = 1.0;
  double tol = 1e-8;
  int max_iter = 50;
  bool check_ellipticity = true;
};

struct WindowRecord {
  int first = 0;
  int last = 0;
  int iterations = 0;
  double residual = 0.0;
  double garding = 0.0;  // smallest sampled discrete Gårding constant
  double maxreg = 0.0;
};

struct QLSolveReport {
  double S = 0.0;  // end of the solved interval
  bool global = false;
  double lions_constant = 0.0;
  double window_length = 0.0;
  int nodes_per_window = 0;
  std::vector<WindowRecord> windows;
  Trajectory u;
};

/// Marches in windows of nodes_per_window steps, running picard_solve on each
/// window from the previous endpoint. The window length follows
/// continuation_window_length with the Lions constant of (lambda, gamma, M).
/// If neither map depends on the state a single window covers the interval.
/// `history` (optional) supplies the solution up to node `first` to restart
/// at an interior node.
inline QLSolveReport continuation_solve(std::shared_ptr<const FESpace> sp, const CoefficientMap& a_map,
                                        const ForcingMap* phi, const VectorC& u0, const TimeGrid& grid,
                                        const ContinuationOptions& opt = {}, const Trajectory* history = nullptr,
                                        int first = 0) {
  QLSolveReport rep;
  const double Lambda = opt.Lambda.value_or(opt.lambda + opt.gamma);
  rep.lions_constant = lions_constant(opt.lambda, opt.gamma, opt.M, Lambda);
  const bool linear = !a_map.state_dependent() && (!phi || !phi->state_dependent());
  if (linear) {
    rep.window_length = grid.T - grid.t0;
    rep.nodes_per_window = grid.N - first;
  } else {
    const double c_phi = phi ? phi->growth_constant : 0.0;
    const double s = phi ? phi->growth_exponent : std::numeric_limits<double>::infinity();
    rep.window_length = continuation_window_length(rep.lions_constant, opt.C_E, c_phi, opt.r, s);
    rep.nodes_per_window = static_cast<int>(std::floor(rep.window_length / grid.tau() * (1.0 + 1e-12)));
    if (rep.nodes_per_window < 1) {
      std::ostringstream os;
      os << "window under-resolved: admissible window length " << rep.window_length << " is below the step "
         << grid.tau();
      throw SolverError("window_under_resolved", os.str());
    }
  }

  Trajectory cur;
  if (history) {
    cur = *history;
  } else {
    cur.grid = grid;
    cur.values.assign(static_cast<size_t>(grid.N + 1), u0);
  }
  if (history && first > 0 && (cur.values[static_cast<size_t>(first)] - u0).norm() != 0.0)
    throw InputError("inconsistent_restart", "u0 must equal the history value at the restart node");
  cur.values[static_cast<size_t>(first)] = u0;

  PicardOptions popt;
  popt.tol = opt.tol;
  popt.max_iter = opt.max_iter;
  int a = first;
  while (a < grid.N) {
    const int b = std::min(grid.N, a + rep.nodes_per_window);
    PicardResult pr = picard_solve(sp, a_map, phi, cur, a, b, popt);
    WindowRecord w;
    w.first = a;
    w.last = b;
    w.iterations = pr.iterations;
    w.residual = pr.residuals.back();
    w.maxreg = maxreg_norm(*sp, pr.u, 2.0, 2.0, a, b).value;
    w.garding = std::numeric_limits<double>::infinity();
    if (opt.check_ellipticity) {
      const auto tens = a_map.apply_all(*sp, pr.u, a + 1, b);
      for (int n : {a + 1, b}) {
        DiscreteSystemOperator op = assemble(sp, tens[static_cast<size_t>(n - a - 1)]);
        const double g = garding_constant(op, opt.lambda).value;
        w.garding = std::min(w.garding, g);
        if (g < opt.gamma * (1.0 - 1e-8)) {
          std::ostringstream os;
          os << "ellipticity check failed at node " << n << " (t = " << grid.node(n) << "): Gårding constant " << g
             << " below declared gamma " << opt.gamma;
          rep.u = pr.u;
          rep.S = grid.node(a);
          throw SolverError("ellipticity_lost", os.str());
        }
      }
    }
    rep.windows.push_back(w);
    cur = std::move(pr.u);
    a = b;
  }
  rep.S = grid.node(a);
  rep.global = a == grid.N;
  rep.u = std::move(cur);
  return rep;
}

struct ContinuityWindow {
  double delta = 0.0;
  int node = 0;
  PicardResult solution;  // cut-off solution
};

/// Solves the cut-off problem around A0 = A(u0)_0 and returns the largest
/// node time delta such that |A(u)_t - A0| <= eps entrywise at every node
/// t <= delta, i.e. the cut-off never acts on (0, delta).
inline ContinuityWindow continuity_window_check(std::shared_ptr<const FESpace> sp, const CoefficientMap& a_map,
                                                const ForcingMap* phi, const VectorC& u0, double eps,
                                                const TimeGrid& grid, PicardOptions opt = {}) {
  if (!(eps > 0)) throw InputError("invalid_eps", "eps must be positive");
  Trajectory constant;
  constant.grid = grid;
  constant.values.assign(static_cast<size_t>(grid.N + 1), u0);
  const CoefficientTensor a0 = a_map.at(TrajectoryPrefix(*sp, grid, constant.values, 0));
  opt.cutoff = CutoffConfig{eps, a0};
  ContinuityWindow out;
  out.solution = picard_solve(sp, a_map, phi, constant, 0, grid.N, opt);
  const auto tens = a_map.apply_all(*sp, out.solution.u, 1, grid.N);
  int last_ok = 0;
  for (int n = 1; n <= grid.N; ++n) {
    if (componentwise_distance(*sp, tens[static_cast<size_t>(n - 1)], a0) > eps) break;
    last_ok = n;
  }
  if (last_ok == 0)
    throw SolverError("cutoff_active", "cut-off is active from the first step (delta < tau); refine the grid");
  out.node = last_ok;
  out.delta = grid.node(last_ok);
  return out;
}

// ---- Registered maps ------------------------------------------------------

/// Integral of component i of a P1 function.
inline Complex integral(const FESpace& sp, const VectorC& u, int component) {
  Complex s = 0.0;
  for (const auto& q : sp.quadrature()) s += q.weight * sp.value(u, component, q.cell, q.bary);
  return s;
}

namespace maps {

inline CoefficientMap constant(CoefficientTensor t) {
  return CoefficientMap("constant", [t](const TrajectoryPrefix&) { return t; }, false);
}

/// (1 + slope t) * base.
inline CoefficientMap time_linear(CoefficientTensor base, double slope = 1.0) {
  return CoefficientMap(
      "time_linear", [base, slope](const TrajectoryPrefix& p) { return Complex(1.0 + slope * p.time()) * base; },
      false);
}

/// Scalar (m = 1) diffusion kappa(u) I with kappa(u) = 2 + clamp(Re u, -1, 1).
inline CoefficientMap local_state(const FESpace& sp) {
  if (sp.num_components() != 1) throw InputError("dimension_mismatch", "local_state map needs m = 1");
  const FESpace* spp = &sp;
  return CoefficientMap("local_state", [spp](const TrajectoryPrefix& p) {
    const VectorC un = p.current();
    return CoefficientTensor::field(1, 2, [spp, un](const EvalPoint& x) {
      const double v = std::clamp(spp->value(un, 0, x.cell, x.bary).real(), -1.0, 1.0);
      MatrixC b = MatrixC::Zero(3, 3);
      b(1, 1) = b(2, 2) = 2.0 + v;
      return b;
    });
  });
}

/// (1 + scale * int_0^t mean(u) ds) * identity, with mean(u) the average over
/// components of int Re u_i / |Omega| and a right-endpoint time sum.
inline CoefficientMap nonlocal_mean(int m, double scale = 1.0) {
  return CoefficientMap("nonlocal_mean", [m, scale](const TrajectoryPrefix& p) {
    const FESpace& sp = p.space();
    const double area = sp.mesh().area();
    double s = 0.0;
    for (int k = 1; k <= p.node(); ++k) {
      double mean = 0.0;
      for (int i = 0; i < m; ++i) mean += integral(sp, p.at(k), i).real();
      s += p.grid().tau() * mean / (m * area);
    }
    return Complex(1.0 + scale * s) * CoefficientTensor::identity(m, 2);
  });
}

inline ForcingMap zero(const FESpace& sp) {
  const int n = sp.size();
  return ForcingMap("zero", [n](const TrajectoryPrefix&) { return VectorC(VectorC::Zero(n)); }, false);
}

/// Phi(u)_t = c M u(t); sublinear with C_Phi = |c| and s = infinity.
inline ForcingMap linear_mass(double c) {
  ForcingMap f("linear_mass", [c](const TrajectoryPrefix& p) {
    return VectorC(c * (p.space().mass().cast<Complex>() * p.current()));
  });
  f.growth_constant = std::abs(c);
  return f;
}

/// A fixed load series (state independent).
inline ForcingMap loads(LoadSeries f) {
  return ForcingMap("loads", [f = std::move(f)](const TrajectoryPrefix& p) { return f[static_cast<size_t>(p.node())]; },
                    false);
}

}  // namespace maps

/// Manufactured solution u(t, x, y) = t sin(pi x) sin(pi y) on the unit square.
struct ManufacturedSolution {
  static double value(double t, const Point2& x) {
    return t * std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]);
  }
  static std::array<Complex, 2> gradient(double t, const Point2& x) {
    const double pi = std::numbers::pi;
    return {t * pi * std::cos(pi * x[0]) * std::sin(pi * x[1]), t * pi * std::sin(pi * x[0]) * std::cos(pi * x[1])};
  }
  /// u_t - Delta u.
  static double heat_source(double t, const Point2& x) {
    const double pi = std::numbers::pi;
    const double s = std::sin(pi * x[0]) * std::sin(pi * x[1]);
    return s + 2.0 * pi * pi * t * s;
  }
  /// u_t - div((2 + u) grad u) for |u| <= 1.
  static double quasilinear_source(double t, const Point2& x) {
    const double pi = std::numbers::pi;
    const double s = std::sin(pi * x[0]) * std::sin(pi * x[1]);
    const auto g = gradient(t, x);
    return s + (2.0 + t * s) * 2.0 * pi * pi * t * s - (std::norm(g[0]) + std::norm(g[1]));
  }
};

}  // namespace parsys
