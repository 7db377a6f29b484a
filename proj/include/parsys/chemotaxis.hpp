#pragma once

// Two-species Keller-Segel system with chemo-attractants v_1, v_2:
//   d_t u_1 - div(kappa_1 grad u_1) = div(sigma_1 (grad v_1 - grad u_2))
//   d_t v_1 - alpha_1 Lap v_1       = g_1(u_1, v_1, u_2, v_2)
// and the same with indices 1 <-> 2. Unknowns are ordered (u1, v1, u2, v2).
//
// full4 solves the four-field quasilinear system directly. reduced2 solves
// for (u1, u2) only: v = S(u) is produced by a causal sweep of the linear
// v-equations, the principal part is [[kappa_1, -sigma_1], [-sigma_2, kappa_2]]
// and the sigma_i grad v_i terms enter as right-hand sides.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "parsys/quasilinear.hpp"
#include "parsys/sawtooth.hpp"

namespace parsys::chemo {

/// c0 + c1 u + c2 v for a species state (u, v).
struct AffineCoefficient {
  double c0 = 1.0;
  double cu = 0.0;
  double cv = 0.0;
  double operator()(double u, double v) const { return c0 + cu * u + cv * v; }
  bool constant() const { return cu == 0.0 && cv == 0.0; }
};

/// Quadratic polynomial c + l . w + w^T Q w in w = (u1, v1, u2, v2).
struct QuadraticReaction {
  double c = 0.0;
  std::array<double, 4> l{};
  std::array<std::array<double, 4>, 4> q{};

  double operator()(const std::array<double, 4>& w) const {
    double s = c;
    for (size_t i = 0; i < 4; ++i) {
      s += l[i] * w[i];
      for (size_t j = 0; j < 4; ++j) s += q[i][j] * w[i] * w[j];
    }
    return s;
  }
  bool zero() const {
    if (c != 0.0) return false;
    for (size_t i = 0; i < 4; ++i) {
      if (l[i] != 0.0) return false;
      for (size_t j = 0; j < 4; ++j)
        if (q[i][j] != 0.0) return false;
    }
    return true;
  }
};

/// Initial profile: mean + amplitude * bump (exp bump of given radius) or
/// mean + amplitude * cos(pi x) cos(pi y).
struct InitialProfile {
  enum class Kind { constant, bump, cosine };
  Kind kind = Kind::constant;
  double mean = 0.0;
  double amplitude = 0.0;
  Point2 center{0.5, 0.5};
  double radius = 0.3;

  double operator()(const Point2& x) const {
    switch (kind) {
      case Kind::constant:
        return mean;
      case Kind::bump:
        return mean + amplitude * Bump{center, radius}(x);
      case Kind::cosine:
        return mean + amplitude * std::cos(std::numbers::pi * x[0]) * std::cos(std::numbers::pi * x[1]);
    }
    return mean;
  }
};

struct ChemotaxisParams {
  std::array<AffineCoefficient, 2> kappa{};
  std::array<AffineCoefficient, 2> sigma{AffineCoefficient{0, 0, 0}, AffineCoefficient{0, 0, 0}};
  std::array<double, 2> alpha{1.0, 1.0};
  std::array<QuadraticReaction, 2> g{};
  std::array<InitialProfile, 4> initial{};  // u1, v1, u2, v2
  // Dirichlet segments per field (u1, v1, u2, v2); empty = homogeneous Neumann.
  std::array<std::vector<int>, 4> dirichlet{};

  void validate() const {
    for (double a : alpha)
      if (!(a > 0)) throw InputError("invalid_parameter", "alpha_i must be positive");
    // kappa is affine, so positivity on [0,1]^2 follows from the corners.
    for (const auto& k : kappa)
      for (double u : {0.0, 1.0})
        for (double v : {0.0, 1.0})
          if (!(k(u, v) > 0)) throw InputError("invalid_parameter", "kappa_i must be positive on [0,1]^2");
  }
};

/// The 4x4 grid of scalar * I_d blocks at one state.
inline CoefficientTensor full_tensor(const ChemotaxisParams& p, const std::array<double, 4>& w, int d = 2) {
  const double k1 = p.kappa[0](w[0], w[1]), k2 = p.kappa[1](w[2], w[3]);
  const double s1 = p.sigma[0](w[0], w[1]), s2 = p.sigma[1](w[2], w[3]);
  if (!(k1 > 0) || !(k2 > 0)) throw InputError("invalid_parameter", "kappa must be positive");
  if (!(p.alpha[0] > 0) || !(p.alpha[1] > 0)) throw InputError("invalid_parameter", "alpha must be positive");
  const double rows[4][4] = {{k1, s1, -s1, 0.0}, {0.0, p.alpha[0], 0.0, 0.0}, {-s2, 0.0, k2, s2}, {0.0, 0.0, 0.0, p.alpha[1]}};
  CoefficientTensor t(4, d);
  const MatrixC id = MatrixC::Identity(d, d);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (rows[i][j] != 0.0) t.set_A(i, j, rows[i][j] * id);
  return t;
}

inline CoefficientTensor reduced_tensor(double k1, double s1, double k2, double s2, int d = 2) {
  CoefficientTensor t(2, d);
  const MatrixC id = MatrixC::Identity(d, d);
  t.set_A(0, 0, k1 * id).set_A(0, 1, -s1 * id).set_A(1, 0, -s2 * id).set_A(1, 1, k2 * id);
  return t;
}

struct ConditionReport {
  bool lh_fails_full = false;
  std::string witness;  // which species and values trigger the failure
  double legendre_reduced = 0.0;   // smallest eigenvalue of the reduced principal part
  double reduced_inequality = 0.0; // min(kappa_1, kappa_2) - |sigma_1 + sigma_2| / 2
  bool reduced_ok = false;
  double kappa1 = 0, kappa2 = 0, sigma1 = 0, sigma2 = 0, alpha1 = 0, alpha2 = 0;
};

/// Conditions at one state.
inline ConditionReport condition_report(const ChemotaxisParams& p, const std::array<double, 4>& w) {
  ConditionReport r;
  r.kappa1 = p.kappa[0](w[0], w[1]);
  r.kappa2 = p.kappa[1](w[2], w[3]);
  r.sigma1 = p.sigma[0](w[0], w[1]);
  r.sigma2 = p.sigma[1](w[2], w[3]);
  r.alpha1 = p.alpha[0];
  r.alpha2 = p.alpha[1];
  const bool f1 = std::abs(r.sigma1) >= 2.0 * std::sqrt(r.kappa1 * r.alpha1);
  const bool f2 = std::abs(r.sigma2) >= 2.0 * std::sqrt(r.kappa2 * r.alpha2);
  r.lh_fails_full = f1 || f2;
  if (f1) r.witness = "species 1: |sigma_1| >= 2 sqrt(kappa_1 alpha_1)";
  if (f2) r.witness += std::string(f1 ? "; " : "") + "species 2: |sigma_2| >= 2 sqrt(kappa_2 alpha_2)";
  r.legendre_reduced = legendre_constant(reduced_tensor(r.kappa1, r.sigma1, r.kappa2, r.sigma2));
  r.reduced_inequality = std::min(r.kappa1, r.kappa2) - std::abs(r.sigma1 + r.sigma2) / 2.0;
  r.reduced_ok = r.reduced_inequality > 0.0;
  return r;
}

/// Worst case over the mesh vertices of a field state (u1, v1, u2, v2):
/// any failing vertex sets lh_fails_full; constants are minimized.
inline ConditionReport condition_report(const ChemotaxisParams& p, const std::vector<std::array<double, 4>>& states) {
  if (states.empty()) throw InputError("empty_samples", "no states to evaluate");
  ConditionReport worst = condition_report(p, states.front());
  for (size_t k = 1; k < states.size(); ++k) {
    ConditionReport r = condition_report(p, states[k]);
    if (r.lh_fails_full && !worst.lh_fails_full) {
      worst.lh_fails_full = true;
      worst.witness = r.witness;
      worst.kappa1 = r.kappa1;
      worst.kappa2 = r.kappa2;
      worst.sigma1 = r.sigma1;
      worst.sigma2 = r.sigma2;
    }
    worst.legendre_reduced = std::min(worst.legendre_reduced, r.legendre_reduced);
    worst.reduced_inequality = std::min(worst.reduced_inequality, r.reduced_inequality);
  }
  worst.reduced_ok = worst.reduced_inequality > 0.0;
  return worst;
}

/// Meshes and spaces for both modes, built from one domain and step.
struct ChemotaxisSpaces {
  Mesh2D mesh4, mesh_u, mesh_v;
  std::shared_ptr<const FESpace> full, u, v;
};

inline std::unique_ptr<ChemotaxisSpaces> make_spaces(const ChemotaxisParams& p, const DomainSpec& dom, double h) {
  auto s = std::make_unique<ChemotaxisSpaces>();
  BoundarySpec b4{{p.dirichlet[0], p.dirichlet[1], p.dirichlet[2], p.dirichlet[3]}};
  BoundarySpec bu{{p.dirichlet[0], p.dirichlet[2]}};
  BoundarySpec bv{{p.dirichlet[1], p.dirichlet[3]}};
  s->mesh4 = build_mesh(dom, h, b4);
  s->mesh_u = build_mesh(dom, h, bu);
  s->mesh_v = build_mesh(dom, h, bv);
  s->full = std::make_shared<const FESpace>(s->mesh4);
  s->u = std::make_shared<const FESpace>(s->mesh_u);
  s->v = std::make_shared<const FESpace>(s->mesh_v);
  return s;
}

namespace detail {

inline std::array<double, 4> state_at(const FESpace& sp4, const VectorC& w, int cell, const std::array<double, 3>& b) {
  return {sp4.value(w, 0, cell, b).real(), sp4.value(w, 1, cell, b).real(), sp4.value(w, 2, cell, b).real(),
          sp4.value(w, 3, cell, b).real()};
}

inline std::array<double, 4> split_state_at(const FESpace& spu, const VectorC& u, const FESpace& spv, const VectorC& v,
                                            int cell, const std::array<double, 3>& b) {
  return {spu.value(u, 0, cell, b).real(), spv.value(v, 0, cell, b).real(), spu.value(u, 1, cell, b).real(),
          spv.value(v, 1, cell, b).real()};
}

/// Load of g_i at quadrature points into component i of the v-space (or
/// component 2i+1 of the four-field space via `component`).
template <class StateFn>
VectorC reaction_load(const FESpace& target, const ChemotaxisParams& p, const std::array<int, 2>& component,
                      StateFn state) {
  VectorC b = VectorC::Zero(target.size());
  const auto& mesh = target.mesh();
  for (const auto& q : target.quadrature()) {
    const std::array<double, 4> w = state(q.cell, q.bary);
    const auto& tri = mesh.triangles()[static_cast<size_t>(q.cell)];
    for (int s = 0; s < 2; ++s) {
      if (p.g[static_cast<size_t>(s)].zero()) continue;
      const double gv = p.g[static_cast<size_t>(s)](w);
      for (int a = 0; a < 3; ++a) {
        const int k = target.dof(component[static_cast<size_t>(s)], tri[static_cast<size_t>(a)]);
        if (k >= 0) b(k) += q.weight * gv * q.bary[static_cast<size_t>(a)];
      }
    }
  }
  return b;
}

}  // namespace detail

/// Coefficient map of the four-field system at the current state.
inline CoefficientMap full_map(const ChemotaxisParams& p) {
  return CoefficientMap("chemotaxis_full", [p](const TrajectoryPrefix& pre) {
    const FESpace* sp = &pre.space();
    const VectorC w = pre.current();
    return CoefficientTensor::field(4, 2, [p, sp, w](const EvalPoint& x) {
      return full_tensor(p, detail::state_at(*sp, w, x.cell, x.bary)).block();
    });
  });
}

/// Reactions g_i as loads on the v-rows of the four-field system.
inline ForcingMap full_reaction_map(const ChemotaxisParams& p) {
  return ForcingMap("chemotaxis_reaction", [p](const TrajectoryPrefix& pre) {
    const FESpace& sp = pre.space();
    const VectorC& w = pre.current();
    return detail::reaction_load(sp, p, {1, 3},
                                 [&](int c, const std::array<double, 3>& b) { return detail::state_at(sp, w, c, b); });
  });
}

/// The implicit reduction S: u-prefix -> attractants (v1, v2), computed by
/// implicit Euler on the v-equations with an inner fixed point for g.
class Reduction {
 public:
  Reduction(ChemotaxisParams p, std::shared_ptr<const FESpace> spu, std::shared_ptr<const FESpace> spv, VectorC v0,
            TimeGrid grid, double inner_tol = 1e-10, int inner_max = 200)
      : p_(std::move(p)), spu_(std::move(spu)), spv_(std::move(spv)), v0_(std::move(v0)), grid_(grid),
        inner_tol_(inner_tol), inner_max_(inner_max) {
    const SparseR& m = spv_->mass();
    // Per-component alpha: scale the gradient block of component i by alpha_i.
    std::vector<Eigen::Triplet<double>> trip;
    const SparseR& g = spv_->grad_mass();
    for (int c = 0; c < g.outerSize(); ++c)
      for (SparseR::InnerIterator it(g, c); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                          p_.alpha[static_cast<size_t>(spv_->component_of(static_cast<int>(it.row())))] * it.value());
    SparseR k(g.rows(), g.cols());
    k.setFromTriplets(trip.begin(), trip.end());
    mass_ = m.cast<Complex>();
    if (spv_->size() > 0) lu_ = std::make_shared<linalg::SparseSolver>(SparseC(mass_ + grid_.tau() * k.cast<Complex>()));
  }

  const FESpace& u_space() const { return *spu_; }
  const FESpace& v_space() const { return *spv_; }
  const VectorC& v0() const { return v0_; }

  /// v_0..v_last from u_0..u_last; u_at(n) must return u at node n.
  template <class UAt>
  std::vector<VectorC> attractants(UAt&& u_at, int last) const {
    std::vector<VectorC> v;
    v.reserve(static_cast<size_t>(last + 1));
    v.push_back(v0_);
    const bool reactive = !p_.g[0].zero() || !p_.g[1].zero();
    for (int n = 1; n <= last; ++n) {
      const VectorC& un = u_at(n);
      const VectorC base = mass_ * v.back();
      VectorC cur = v.back();
      if (!reactive) {
        cur = lu_->solve(base);
      } else {
        for (int it = 0;; ++it) {
          const VectorC load = detail::reaction_load(*spv_, p_, {0, 1}, [&](int c, const std::array<double, 3>& b) {
            return detail::split_state_at(*spu_, un, *spv_, cur, c, b);
          });
          VectorC next = lu_->solve(base + grid_.tau() * load);
          const double change = (next - cur).norm();
          cur = std::move(next);
          if (change <= inner_tol_ * (1.0 + cur.norm())) break;
          if (it + 1 >= inner_max_) throw SolverError("inner_no_convergence", "attractant fixed point did not converge");
        }
      }
      v.push_back(std::move(cur));
    }
    return v;
  }

  /// Reduced principal part at state (u, v).
  CoefficientTensor tensor(const VectorC& u, const VectorC& v) const {
    const ChemotaxisParams p = p_;
    const FESpace* su = spu_.get();
    const FESpace* sv = spv_.get();
    return CoefficientTensor::field(2, 2, [p, su, sv, u, v](const EvalPoint& x) {
      const auto w = detail::split_state_at(*su, u, *sv, v, x.cell, x.bary);
      return reduced_tensor(p.kappa[0](w[0], w[1]), p.sigma[0](w[0], w[1]), p.kappa[1](w[2], w[3]),
                            p.sigma[1](w[2], w[3]))
          .block();
    });
  }

  /// Drift loads <Phi_i, phi> = -int sigma_i grad v_i . grad phi on component i.
  VectorC drift(const VectorC& u, const VectorC& v) const {
    VectorC b = VectorC::Zero(spu_->size());
    const auto& mesh = spu_->mesh();
    for (const auto& q : spu_->quadrature()) {
      const auto w = detail::split_state_at(*spu_, u, *spv_, v, q.cell, q.bary);
      const auto& tri = mesh.triangles()[static_cast<size_t>(q.cell)];
      const auto& gphi = spu_->gradients(q.cell);
      for (int s = 0; s < 2; ++s) {
        const double sig = p_.sigma[static_cast<size_t>(s)](w[static_cast<size_t>(2 * s)], w[static_cast<size_t>(2 * s + 1)]);
        if (sig == 0.0) continue;
        const auto gv = spv_->gradient(v, s, q.cell);
        for (int a = 0; a < 3; ++a) {
          const int k = spu_->dof(s, tri[static_cast<size_t>(a)]);
          if (k < 0) continue;
          b(k) -= q.weight * sig * (gv[0] * gphi[static_cast<size_t>(a)][0] + gv[1] * gphi[static_cast<size_t>(a)][1]);
        }
      }
    }
    return b;
  }

  /// Coefficient map u -> reduced tensor at each node (Volterra).
  CoefficientMap tensor_map(std::shared_ptr<const Reduction> self) const {
    CoefficientMap m("chemotaxis_reduced", [self](const TrajectoryPrefix& pre) {
      const auto v = self->attractants([&](int k) -> const VectorC& { return pre.at(k); }, pre.node());
      return self->tensor(pre.current(), v.back());
    });
    m.with_batch([self](const FESpace&, const Trajectory& u, int first, int last) {
      const auto v = self->attractants([&](int k) -> const VectorC& { return u.values[static_cast<size_t>(k)]; }, last);
      std::vector<CoefficientTensor> out;
      for (int n = first; n <= last; ++n)
        out.push_back(self->tensor(u.values[static_cast<size_t>(n)], v[static_cast<size_t>(n)]));
      return out;
    });
    return m;
  }

  /// Right-hand side map u -> drift loads at each node (Volterra).
  ForcingMap drift_map(std::shared_ptr<const Reduction> self) const {
    ForcingMap m("chemotaxis_drift", [self](const TrajectoryPrefix& pre) {
      const auto v = self->attractants([&](int k) -> const VectorC& { return pre.at(k); }, pre.node());
      return self->drift(pre.current(), v.back());
    });
    m.with_batch([self](const FESpace&, const Trajectory& u, int first, int last) {
      const auto v = self->attractants([&](int k) -> const VectorC& { return u.values[static_cast<size_t>(k)]; }, last);
      std::vector<VectorC> out;
      for (int n = first; n <= last; ++n) out.push_back(self->drift(u.values[static_cast<size_t>(n)], v[static_cast<size_t>(n)]));
      return out;
    });
    return m;
  }

 private:
  ChemotaxisParams p_;
  std::shared_ptr<const FESpace> spu_, spv_;
  VectorC v0_;
  TimeGrid grid_;
  double inner_tol_;
  int inner_max_;
  SparseC mass_;
  std::shared_ptr<linalg::SparseSolver> lu_;
};

inline std::shared_ptr<const Reduction> reduction_map(const ChemotaxisParams& p, const ChemotaxisSpaces& s,
                                                      const TimeGrid& grid) {
  const VectorC v0 = s.v->interpolate([&](int c, const Point2& x) { return Complex(p.initial[static_cast<size_t>(2 * c + 1)](x)); });
  return std::make_shared<const Reduction>(p, s.u, s.v, v0, grid);
}

enum class Mode { full4, reduced2 };

struct SimulationResult {
  Mode mode = Mode::full4;
  Trajectory fields;  // four fields on the space `spaces->full`
  ConditionReport conditions;
  int picard_iterations = 0;
  std::vector<double> picard_residuals;
  std::optional<double> full_garding;  // full4 only: Gårding constant at the initial state with lambda = 1
  bool non_coercive = false;
  std::array<double, 4> min_values{};
  std::array<std::vector<double>, 2> mass;  // int u_i per node
  std::vector<std::string> warnings;
};

namespace detail {

/// Four-field vector on the full space from the (u1, u2) and (v1, v2) spaces.
inline VectorC merge(const ChemotaxisSpaces& s, const VectorC& u, const VectorC& v) {
  VectorC w = VectorC::Zero(s.full->size());
  const int nv = s.mesh4.num_vertices();
  for (int c = 0; c < 4; ++c) {
    const FESpace& part = (c % 2 == 0) ? *s.u : *s.v;
    const VectorC& src = (c % 2 == 0) ? u : v;
    for (int vert = 0; vert < nv; ++vert) {
      const int k = s.full->dof(c, vert);
      const int ks = part.dof(c / 2, vert);
      if (k >= 0 && ks >= 0) w(k) = src(ks);
    }
  }
  return w;
}

}  // namespace detail

inline SimulationResult simulate(const ChemotaxisParams& p, Mode mode, const ChemotaxisSpaces& s, const TimeGrid& grid,
                                 double tol = 1e-8, int max_iter = 50) {
  p.validate();
  SimulationResult res;
  res.mode = mode;
  const VectorC w0 = s.full->interpolate([&](int c, const Point2& x) { return Complex(p.initial[static_cast<size_t>(c)](x)); });

  std::vector<std::array<double, 4>> states;
  for (const auto& x : s.mesh4.vertices()) states.push_back({p.initial[0](x), p.initial[1](x), p.initial[2](x), p.initial[3](x)});
  res.conditions = condition_report(p, states);

  PicardOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  if (mode == Mode::full4) {
    const CoefficientMap a = full_map(p);
    Trajectory start;
    start.grid = grid;
    start.values.assign(static_cast<size_t>(grid.N + 1), w0);
    const CoefficientTensor t0 = a.at(TrajectoryPrefix(*s.full, grid, start.values, 0));
    res.full_garding = garding_constant(assemble(s.full, t0), 1.0).value;
    if (!(*res.full_garding > 0)) {
      res.non_coercive = true;
      res.warnings.push_back("non-coercive - expect failure diagnostics");
    }
    const ForcingMap g = full_reaction_map(p);
    PicardResult pr = picard_solve(s.full, a, &g, w0, grid, opt);
    res.fields = std::move(pr.u);
    res.picard_iterations = pr.iterations;
    res.picard_residuals = pr.residuals;
  } else {
    if (res.conditions.lh_fails_full) res.warnings.push_back("full tensor fails Legendre-Hadamard; using the reduction");
    if (!res.conditions.reduced_ok) res.warnings.push_back("reduced inequality fails at the initial state");
    const auto red = reduction_map(p, s, grid);
    const VectorC u0 = s.u->interpolate([&](int c, const Point2& x) { return Complex(p.initial[static_cast<size_t>(2 * c)](x)); });
    const CoefficientMap a = red->tensor_map(red);
    const ForcingMap phi = red->drift_map(red);
    PicardResult pr = picard_solve(s.u, a, &phi, u0, grid, opt);
    res.picard_iterations = pr.iterations;
    res.picard_residuals = pr.residuals;
    const auto v = red->attractants([&](int k) -> const VectorC& { return pr.u.values[static_cast<size_t>(k)]; }, grid.N);
    res.fields.grid = grid;
    for (int n = 0; n <= grid.N; ++n)
      res.fields.values.push_back(detail::merge(s, pr.u.values[static_cast<size_t>(n)], v[static_cast<size_t>(n)]));
  }

  for (int c = 0; c < 4; ++c) res.min_values[static_cast<size_t>(c)] = std::numeric_limits<double>::infinity();
  for (const auto& w : res.fields.values) {
    for (int k = 0; k < s.full->size(); ++k) {
      auto& mn = res.min_values[static_cast<size_t>(s.full->component_of(k))];
      mn = std::min(mn, w(k).real());
    }
    res.mass[0].push_back(integral(*s.full, w, 0).real());
    res.mass[1].push_back(integral(*s.full, w, 2).real());
  }
  return res;
}

/// Nodal values of field c (0..3) of a four-field vector; constrained
/// vertices are zero.
inline std::vector<double> field_values(const FESpace& sp4, const VectorC& w, int c) {
  std::vector<double> out(static_cast<size_t>(sp4.mesh().num_vertices()), 0.0);
  for (int v = 0; v < sp4.mesh().num_vertices(); ++v) {
    const int k = sp4.dof(c, v);
    if (k >= 0) out[static_cast<size_t>(v)] = w(k).real();
  }
  return out;
}

}  // namespace parsys::chemo
