#pragma once

// P1 finite elements for m-component systems on a Mesh2D: the discrete
// system operator <L u, v>, shifted solves, the discrete Gårding constant and
// discrete dual (negative Sobolev) norms.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "parsys/core.hpp"
#include "parsys/geometry.hpp"
#include "parsys/linalg.hpp"
#include "parsys/tensors.hpp"

namespace parsys {

struct QuadPoint {
  int cell = 0;
  Point2 x{};
  std::array<double, 3> bary{};
  double weight = 0.0;
};

/// P1 space per component with the Dirichlet dofs of each component removed.
/// Free dofs are numbered component-major. Holds the mass and gradient mass
/// matrices and a factorization of (grad_mass + mass) for Riesz solves.
/// The space keeps its own copy of the mesh.
class FESpace {
 public:
  explicit FESpace(Mesh2D mesh_in) : mesh_(std::make_shared<const Mesh2D>(std::move(mesh_in))) {
    const Mesh2D& mesh = *mesh_;
    const int m = mesh.num_components();
    const int nv = mesh.num_vertices();
    dof_.assign(static_cast<size_t>(m * nv), -1);
    for (int i = 0; i < m; ++i)
      for (int v = 0; v < nv; ++v)
        if (!mesh.is_dirichlet_vertex(i, v)) {
          dof_[static_cast<size_t>(i * nv + v)] = static_cast<int>(comp_.size());
          comp_.push_back(i);
          vert_.push_back(v);
        }
    build_geometry();
    assemble_reference_matrices();
    SparseC riesz = linalg::to_complex(mass_ + grad_mass_);
    if (size() > 0) riesz_.factorize(riesz);
  }

  FESpace(const FESpace&) = delete;
  FESpace& operator=(const FESpace&) = delete;

  const Mesh2D& mesh() const { return *mesh_; }
  int num_components() const { return mesh_->num_components(); }
  int size() const { return static_cast<int>(comp_.size()); }

  /// Free dof of (component, vertex), or -1 when constrained.
  int dof(int component, int vertex) const {
    return dof_[static_cast<size_t>(component * mesh_->num_vertices() + vertex)];
  }
  int component_of(int dof) const { return comp_[static_cast<size_t>(dof)]; }
  int vertex_of(int dof) const { return vert_[static_cast<size_t>(dof)]; }

  const SparseR& mass() const { return mass_; }
  const SparseR& grad_mass() const { return grad_mass_; }

  const std::vector<QuadPoint>& quadrature() const { return quad_; }
  /// Constant gradients of the three barycentric functions of triangle t.
  const std::array<Point2, 3>& gradients(int t) const { return grads_[static_cast<size_t>(t)]; }
  double triangle_area(int t) const { return areas_[static_cast<size_t>(t)]; }

  std::vector<EvalPoint> eval_points() const {
    std::vector<EvalPoint> pts;
    pts.reserve(quad_.size());
    for (const auto& q : quad_) pts.push_back(make_eval_point(q));
    return pts;
  }

  static EvalPoint make_eval_point(const QuadPoint& q) {
    EvalPoint p;
    p.x = Eigen::Vector2d(q.x[0], q.x[1]);
    p.cell = q.cell;
    p.bary = q.bary;
    return p;
  }

  /// Nodal interpolant; Dirichlet values are dropped (homogeneous data).
  VectorC interpolate(const std::function<Complex(int component, const Point2&)>& f) const {
    VectorC u(size());
    for (int k = 0; k < size(); ++k) u(k) = f(component_of(k), mesh_->vertices()[static_cast<size_t>(vertex_of(k))]);
    return u;
  }

  /// Value of component i of the FE function u in cell t at barycentric point.
  Complex value(const VectorC& u, int component, int t, const std::array<double, 3>& bary) const {
    const auto& tri = mesh_->triangles()[static_cast<size_t>(t)];
    Complex s = 0.0;
    for (int a = 0; a < 3; ++a) {
      const int k = dof(component, tri[static_cast<size_t>(a)]);
      if (k >= 0) s += bary[static_cast<size_t>(a)] * u(k);
    }
    return s;
  }

  /// Constant gradient of component i of u in cell t.
  std::array<Complex, 2> gradient(const VectorC& u, int component, int t) const {
    const auto& tri = mesh_->triangles()[static_cast<size_t>(t)];
    const auto& g = grads_[static_cast<size_t>(t)];
    std::array<Complex, 2> s{0.0, 0.0};
    for (int a = 0; a < 3; ++a) {
      const int k = dof(component, tri[static_cast<size_t>(a)]);
      if (k < 0) continue;
      s[0] += g[static_cast<size_t>(a)][0] * u(k);
      s[1] += g[static_cast<size_t>(a)][1] * u(k);
    }
    return s;
  }

  /// Load vector <f, phi_k> = int f_i phi_k for a pointwise source, by the
  /// same quadrature as the operators.
  VectorC load(const std::function<Complex(int component, const EvalPoint&)>& f) const {
    VectorC b = VectorC::Zero(size());
    for (const auto& q : quad_) {
      const EvalPoint p = make_eval_point(q);
      const auto& tri = mesh_->triangles()[static_cast<size_t>(q.cell)];
      for (int i = 0; i < num_components(); ++i) {
        const Complex fv = f(i, p);
        if (fv == Complex(0.0)) continue;
        for (int a = 0; a < 3; ++a) {
          const int k = dof(i, tri[static_cast<size_t>(a)]);
          if (k >= 0) b(k) += q.weight * fv * q.bary[static_cast<size_t>(a)];
        }
      }
    }
    return b;
  }

  /// Discrete W^{1,2} norm sqrt(u^H (G + M) u).
  double w12_norm(const VectorC& u) const {
    if (size() == 0) return 0.0;
    const VectorC r = (grad_mass_ + mass_).cast<Complex>() * u;
    return std::sqrt(std::max(0.0, u.dot(r).real()));
  }

  double l2_norm(const VectorC& u) const {
    if (size() == 0) return 0.0;
    return std::sqrt(std::max(0.0, u.dot(mass_.cast<Complex>() * u).real()));
  }

  /// Riesz representative w with (G + M) w = f.
  VectorC riesz(const VectorC& f) const {
    if (size() == 0) return VectorC();
    return riesz_.solve(f);
  }

  /// Exact discrete W^{-1,2} norm sqrt(f^H (G + M)^{-1} f).
  double riesz_dual_norm(const VectorC& f) const {
    if (size() == 0 || f.norm() == 0.0) return 0.0;
    const VectorC w = riesz(f);
    return std::sqrt(std::max(0.0, f.dot(w).real()));
  }

  /// Assembles <L phi_beta, phi_alpha> over free dofs with the 3-point
  /// edge-midpoint rule (exact for P1 x P1 products with constant tensors).
  SparseC assemble_stiffness(const CoefficientTensor& tensor) const {
    const int m = num_components();
    if (tensor.m() != m)
      throw InputError("dimension_mismatch", "tensor has m=" + std::to_string(tensor.m()) + " but the mesh has " +
                                                 std::to_string(m) + " components");
    if (tensor.d() != 2) throw InputError("dimension_mismatch", "assembly needs a d=2 tensor");
    const int d = 2;
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(static_cast<size_t>(mesh_->num_triangles()) * 9u * static_cast<size_t>(m * m));
    MatrixC blk = tensor.is_constant() ? tensor.block() : MatrixC();
    for (int t = 0; t < mesh_->num_triangles(); ++t) {
      const auto& tri = mesh_->triangles()[static_cast<size_t>(t)];
      const auto& g = grads_[static_cast<size_t>(t)];
      for (int qi = 0; qi < 3; ++qi) {
        const QuadPoint& q = quad_[static_cast<size_t>(3 * t + qi)];
        if (!tensor.is_constant()) blk = tensor.block(make_eval_point(q));
        for (int i = 0; i < m; ++i)
          for (int a = 0; a < 3; ++a) {
            const int row = dof(i, tri[static_cast<size_t>(a)]);
            if (row < 0) continue;
            const double pa = q.bary[static_cast<size_t>(a)];
            const auto& ga = g[static_cast<size_t>(a)];
            for (int j = 0; j < m; ++j)
              for (int b = 0; b < 3; ++b) {
                const int col = dof(j, tri[static_cast<size_t>(b)]);
                if (col < 0) continue;
                const double pb = q.bary[static_cast<size_t>(b)];
                const auto& gb = g[static_cast<size_t>(b)];
                Complex v = blk(i, j) * pb * pa;
                for (int l = 0; l < d; ++l) v += blk(i, m + j * d + l) * gb[static_cast<size_t>(l)] * pa;
                for (int k = 0; k < d; ++k) v += blk(m + i * d + k, j) * pb * ga[static_cast<size_t>(k)];
                for (int k = 0; k < d; ++k)
                  for (int l = 0; l < d; ++l)
                    v += blk(m + i * d + k, m + j * d + l) * gb[static_cast<size_t>(l)] * ga[static_cast<size_t>(k)];
                if (v != Complex(0.0)) trip.emplace_back(row, col, q.weight * v);
              }
          }
      }
    }
    SparseC k(size(), size());
    k.setFromTriplets(trip.begin(), trip.end());
    k.makeCompressed();
    return k;
  }

 private:
  void build_geometry() {
    const auto& mesh = *mesh_;
    grads_.resize(static_cast<size_t>(mesh.num_triangles()));
    areas_.resize(static_cast<size_t>(mesh.num_triangles()));
    quad_.clear();
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const auto& tri = mesh.triangles()[static_cast<size_t>(t)];
      const auto& p0 = mesh.vertices()[static_cast<size_t>(tri[0])];
      const auto& p1 = mesh.vertices()[static_cast<size_t>(tri[1])];
      const auto& p2 = mesh.vertices()[static_cast<size_t>(tri[2])];
      const double area = mesh.signed_area(t);
      areas_[static_cast<size_t>(t)] = area;
      const double inv = 1.0 / (2.0 * area);
      grads_[static_cast<size_t>(t)] = {Point2{(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv},
                                        Point2{(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv},
                                        Point2{(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv}};
      const std::array<std::array<double, 3>, 3> bary{{{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}}};
      for (const auto& b : bary) {
        QuadPoint q;
        q.cell = t;
        q.bary = b;
        q.x = {b[0] * p0[0] + b[1] * p1[0] + b[2] * p2[0], b[0] * p0[1] + b[1] * p1[1] + b[2] * p2[1]};
        q.weight = area / 3.0;
        quad_.push_back(q);
      }
    }
  }

  void assemble_reference_matrices() {
    std::vector<Eigen::Triplet<double>> tm, tg;
    const int m = num_components();
    for (int t = 0; t < mesh_->num_triangles(); ++t) {
      const auto& tri = mesh_->triangles()[static_cast<size_t>(t)];
      const auto& g = grads_[static_cast<size_t>(t)];
      const double area = areas_[static_cast<size_t>(t)];
      for (int i = 0; i < m; ++i)
        for (int a = 0; a < 3; ++a) {
          const int row = dof(i, tri[static_cast<size_t>(a)]);
          if (row < 0) continue;
          for (int b = 0; b < 3; ++b) {
            const int col = dof(i, tri[static_cast<size_t>(b)]);
            if (col < 0) continue;
            double mv = 0.0;
            for (int qi = 0; qi < 3; ++qi) {
              const auto& q = quad_[static_cast<size_t>(3 * t + qi)];
              mv += q.weight * q.bary[static_cast<size_t>(a)] * q.bary[static_cast<size_t>(b)];
            }
            tm.emplace_back(row, col, mv);
            tg.emplace_back(row, col,
                            area * (g[static_cast<size_t>(a)][0] * g[static_cast<size_t>(b)][0] +
                                    g[static_cast<size_t>(a)][1] * g[static_cast<size_t>(b)][1]));
          }
        }
    }
    mass_.resize(size(), size());
    grad_mass_.resize(size(), size());
    mass_.setFromTriplets(tm.begin(), tm.end());
    grad_mass_.setFromTriplets(tg.begin(), tg.end());
    mass_.makeCompressed();
    grad_mass_.makeCompressed();
  }

  std::shared_ptr<const Mesh2D> mesh_;
  std::vector<int> dof_;
  std::vector<int> comp_;
  std::vector<int> vert_;
  std::vector<std::array<Point2, 3>> grads_;
  std::vector<double> areas_;
  std::vector<QuadPoint> quad_;
  SparseR mass_;
  SparseR grad_mass_;
  linalg::SparseSolver riesz_;
};

/// Assembled <L u, v> on the constrained P1 space for one (time-frozen) tensor.
struct DiscreteSystemOperator {
  std::shared_ptr<const FESpace> space;
  CoefficientTensor tensor;
  SparseC stiffness;

  const Mesh2D& mesh() const { return space->mesh(); }
  const SparseR& mass() const { return space->mass(); }
  const SparseR& grad_mass() const { return space->grad_mass(); }
};

inline DiscreteSystemOperator assemble(std::shared_ptr<const FESpace> space, const CoefficientTensor& tensor) {
  DiscreteSystemOperator op{space, tensor, space->assemble_stiffness(tensor)};
  return op;
}

inline DiscreteSystemOperator assemble(const Mesh2D& mesh, const CoefficientTensor& tensor) {
  return assemble(std::make_shared<const FESpace>(mesh), tensor);
}

struct ShiftedSolve {
  VectorC u;
  double relative_residual = 0.0;
  std::vector<std::string> warnings;
};

/// Solves (stiffness + Lambda mass) u = f by sparse LU. When a certified
/// shift lambda is supplied and Re Lambda <= lambda the solve still runs but
/// carries a warning.
inline ShiftedSolve solve_shifted(const DiscreteSystemOperator& op, Complex shift, const VectorC& f,
                                  std::optional<double> certified_lambda = std::nullopt) {
  ShiftedSolve out;
  if (f.size() != op.space->size()) throw InputError("dimension_mismatch", "solve_shifted: load has wrong size");
  if (certified_lambda && !(shift.real() > *certified_lambda))
    out.warnings.push_back("Re Lambda does not exceed the certified lambda; solve is best-effort");
  if (f.norm() == 0.0) {
    out.u = VectorC::Zero(f.size());
    return out;
  }
  const SparseC a = op.stiffness + shift * op.mass().cast<Complex>();
  linalg::SparseSolver lu(a);
  out.u = lu.solve(f);
  out.relative_residual = lu.last_relative_residual();
  return out;
}

struct GardingResult {
  double value = 0.0;        // best Rayleigh quotient (upper end of the bracket)
  double lower_bound = 0.0;  // largest shift with a positive definite H - sigma G
  int iterations = 0;
  int factorizations = 0;
  bool converged = false;
  bool unbounded = false;    // quotient unbounded below
  std::vector<int> pinned_dofs;
};

namespace detail {

inline double max_abs(const SparseC& a) {
  double mx = 0.0;
  for (int c = 0; c < a.outerSize(); ++c)
    for (SparseC::InnerIterator it(a, c); it; ++it) mx = std::max(mx, std::abs(it.value()));
  return mx;
}

/// Rows/columns `keep` of a sparse matrix.
inline SparseC submatrix(const SparseC& a, const std::vector<int>& keep) {
  std::vector<int> map(static_cast<size_t>(a.rows()), -1);
  for (size_t k = 0; k < keep.size(); ++k) map[static_cast<size_t>(keep[k])] = static_cast<int>(k);
  std::vector<Eigen::Triplet<Complex>> trip;
  for (int c = 0; c < a.outerSize(); ++c)
    for (SparseC::InnerIterator it(a, c); it; ++it) {
      const int r = map[static_cast<size_t>(it.row())], cc = map[static_cast<size_t>(it.col())];
      if (r >= 0 && cc >= 0) trip.emplace_back(r, cc, it.value());
    }
  SparseC s(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

}  // namespace detail

/// Discrete Gårding constant
///   min_u (Re u^H K u + lambda u^H M u) / (u^H G u)
/// i.e. the smallest finite eigenvalue of the Hermitian pencil
/// (Herm(K) + lambda M, G).
///
/// A shift sigma lies strictly below the minimum exactly when H - sigma G is
/// positive definite, which a sparse Cholesky factorization decides. The
/// minimum is bracketed between such a certified shift and the Rayleigh
/// quotients of inverse-iteration vectors (H - sigma G)^{-1} G x; the G
/// multiplication removes any kernel component of G from the iterates.
/// Components without Dirichlet part whose constants lie in the kernel of H
/// too (the quotient is then invariant under adding constants) are deflated
/// by pinning one dof, which picks a representative modulo constants.
inline GardingResult garding_constant(const DiscreteSystemOperator& op, double lambda, double tol = 1e-10,
                                      int max_iter = 500) {
  const FESpace& sp = *op.space;
  const int n = sp.size();
  GardingResult res;
  if (n == 0) throw InputError("empty_space", "garding_constant: no free dofs");

  SparseC h = SparseC(0.5 * (op.stiffness + SparseC(op.stiffness.adjoint()))) + lambda * op.mass().cast<Complex>();
  SparseC g = op.grad_mass().cast<Complex>();

  std::vector<int> keep(static_cast<size_t>(n));
  std::iota(keep.begin(), keep.end(), 0);
  const double hscale = std::max(1e-300, detail::max_abs(h));
  for (int i = 0; i < sp.num_components(); ++i) {
    if (sp.mesh().has_dirichlet(i)) continue;
    VectorC ones = VectorC::Zero(n);
    int first = -1;
    for (int k = 0; k < n; ++k)
      if (sp.component_of(k) == i) {
        ones(k) = 1.0;
        if (first < 0) first = k;
      }
    if (first < 0) continue;
    const VectorC hv = h * ones;
    if (hv.cwiseAbs().maxCoeff() <= 1e-12 * hscale) res.pinned_dofs.push_back(first);
  }
  if (!res.pinned_dofs.empty()) {
    keep.erase(std::remove_if(keep.begin(), keep.end(),
                              [&](int k) {
                                return std::find(res.pinned_dofs.begin(), res.pinned_dofs.end(), k) !=
                                       res.pinned_dofs.end();
                              }),
               keep.end());
    h = detail::submatrix(h, keep);
    g = detail::submatrix(g, keep);
  }
  const Eigen::Index nr = h.rows();
  if (nr == 0) throw InputError("empty_space", "garding_constant: nothing left after deflation");

  Eigen::SimplicialLLT<SparseC> llt;
  auto positive_definite = [&](double sigma) {
    ++res.factorizations;
    const SparseC a = h - sigma * g;
    llt.compute(a);
    return llt.info() == Eigen::Success;
  };
  auto rayleigh = [&](const VectorC& x) {
    const double num = x.dot(h * x).real();
    const double den = x.dot(g * x).real();
    return den > 0 ? num / den : std::numeric_limits<double>::infinity();
  };

  const double gscale = std::max(1e-300, detail::max_abs(g));
  double lo = -std::max(1.0, hscale / gscale);
  int tries = 0;
  while (!positive_definite(lo)) {
    lo *= 4.0;
    if (++tries > 40) {
      res.unbounded = true;
      res.value = -std::numeric_limits<double>::infinity();
      res.lower_bound = res.value;
      res.converged = true;
      return res;
    }
  }
  // Factorization currently held by llt corresponds to `lo`.
  double llt_shift = lo;

  VectorC x(nr);
  for (Eigen::Index k = 0; k < nr; ++k) x(k) = 1.0 + 0.3 * std::sin(1.7 * static_cast<double>(k) + 0.2);
  double hi = std::numeric_limits<double>::infinity();
  VectorC best = x;

  auto inverse_step = [&]() {
    if (llt_shift != lo) {
      positive_definite(lo);
      llt_shift = lo;
    }
    VectorC y = llt.solve(g * x);
    const double gn = std::sqrt(std::max(0.0, y.dot(g * y).real()));
    if (!(gn > 0) || !y.allFinite()) return;
    x = y / gn;
    const double rq = rayleigh(x);
    if (rq < hi) {
      hi = rq;
      best = x;
    }
  };

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    for (int s = 0; s < 4; ++s) inverse_step();
    const double width = hi - lo;
    if (width <= tol * std::max(1.0, std::abs(hi))) {
      res.converged = true;
      break;
    }
    // Residual test on the current best vector.
    const VectorC r = h * best - hi * (g * best);
    const double rn = std::sqrt(std::abs(r.dot(llt.solve(r)).real()));
    if (rn <= 1e-3 * tol * std::max(1.0, std::abs(hi)) && it > 2) {
      res.converged = true;
      break;
    }
    const double mid = lo + 0.5 * width;
    if (positive_definite(mid)) {
      lo = mid;
      llt_shift = mid;
    } else {
      hi = std::min(hi, mid);
      positive_definite(lo);
      llt_shift = lo;
    }
  }
  res.value = hi;
  res.lower_bound = lo;
  if (!res.converged) {
    std::ostringstream os;
    os << std::setprecision(17) << "garding_constant: no convergence after " << max_iter
       << " iterations; last Rayleigh quotient " << hi << ", lower bound " << lo;
    throw SolverError("no_convergence", os.str());
  }
  return res;
}

struct DualNormResult {
  double value = 0.0;
  bool converged = true;  // false means `value` is only a lower bound
  int iterations = 0;
};

/// Discrete W^{1,p} norm (int |v|^p + int |grad v|^p)^{1/p}; |.| is the
/// Euclidean norm over components (Frobenius for gradients). The value part
/// uses the edge-midpoint rule, gradients are exact.
inline double w1p_norm(const FESpace& sp, const VectorC& v, double p) {
  const int m = sp.num_components();
  double s = 0.0;
  for (const auto& q : sp.quadrature()) {
    double a2 = 0.0;
    for (int i = 0; i < m; ++i) a2 += std::norm(sp.value(v, i, q.cell, q.bary));
    s += q.weight * std::pow(a2, 0.5 * p);
  }
  for (int t = 0; t < sp.mesh().num_triangles(); ++t) {
    double g2 = 0.0;
    for (int i = 0; i < m; ++i) {
      const auto gr = sp.gradient(v, i, t);
      g2 += std::norm(gr[0]) + std::norm(gr[1]);
    }
    s += sp.triangle_area(t) * std::pow(g2, 0.5 * p);
  }
  return std::pow(s, 1.0 / p);
}

namespace detail {

/// Gradient of S(v) = sum_q w |v|^p + sum_T |T| |grad v|^p, as the complex
/// vector g with dS = Re(g^H dv).
inline VectorC w1p_power_gradient(const FESpace& sp, const VectorC& v, double p) {
  const int m = sp.num_components();
  VectorC g = VectorC::Zero(sp.size());
  const auto& mesh = sp.mesh();
  for (const auto& q : sp.quadrature()) {
    std::vector<Complex> val(static_cast<size_t>(m));
    double a2 = 0.0;
    for (int i = 0; i < m; ++i) {
      val[static_cast<size_t>(i)] = sp.value(v, i, q.cell, q.bary);
      a2 += std::norm(val[static_cast<size_t>(i)]);
    }
    if (a2 == 0.0) continue;
    const double c = q.weight * p * std::pow(a2, 0.5 * p - 1.0);
    const auto& tri = mesh.triangles()[static_cast<size_t>(q.cell)];
    for (int i = 0; i < m; ++i)
      for (int a = 0; a < 3; ++a) {
        const int k = sp.dof(i, tri[static_cast<size_t>(a)]);
        if (k >= 0) g(k) += c * val[static_cast<size_t>(i)] * q.bary[static_cast<size_t>(a)];
      }
  }
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    std::vector<std::array<Complex, 2>> gr(static_cast<size_t>(m));
    double g2 = 0.0;
    for (int i = 0; i < m; ++i) {
      gr[static_cast<size_t>(i)] = sp.gradient(v, i, t);
      g2 += std::norm(gr[static_cast<size_t>(i)][0]) + std::norm(gr[static_cast<size_t>(i)][1]);
    }
    if (g2 == 0.0) continue;
    const double c = sp.triangle_area(t) * p * std::pow(g2, 0.5 * p - 1.0);
    const auto& tri = mesh.triangles()[static_cast<size_t>(t)];
    const auto& gphi = sp.gradients(t);
    for (int i = 0; i < m; ++i)
      for (int a = 0; a < 3; ++a) {
        const int k = sp.dof(i, tri[static_cast<size_t>(a)]);
        if (k < 0) continue;
        g(k) += c * (gr[static_cast<size_t>(i)][0] * gphi[static_cast<size_t>(a)][0] +
                     gr[static_cast<size_t>(i)][1] * gphi[static_cast<size_t>(a)][1]);
      }
  }
  return g;
}

}  // namespace detail

/// Discrete W^{-1,q} norm of a dual vector f over the free-dof space:
///   sup_v |<f, v>| / ||v||_{W^{1,q'}}.
/// q = 2 is the exact Riesz norm. Otherwise the quotient is maximized by
/// Riesz-preconditioned gradient ascent with Armijo backtracking, started at
/// the q = 2 maximizer, until the relative first-order optimality measure
/// drops below rel_tol.
inline DualNormResult dual_norm(const FESpace& sp, const VectorC& f, double q, double rel_tol = 1e-6,
                                int max_iter = 2000) {
  if (!(q > 1.0) || !std::isfinite(q)) throw InputError("invalid_exponent", "dual_norm: q must lie in (1, inf)");
  if (f.size() != sp.size()) throw InputError("dimension_mismatch", "dual_norm: functional has wrong size");
  DualNormResult out;
  if (f.norm() == 0.0) return out;
  if (q == 2.0) {
    out.value = sp.riesz_dual_norm(f);
    return out;
  }
  const double p = q / (q - 1.0);
  auto objective = [&](const VectorC& v) { return v.dot(f).real() / w1p_norm(sp, v, p); };

  VectorC v = sp.riesz(f);
  v /= w1p_norm(sp, v, p);
  double j = objective(v);
  double step = 1.0;
  out.converged = false;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    const double nv = w1p_norm(sp, v, p);  // == 1 up to round-off
    const double lin = v.dot(f).real();
    // grad J = f / N - lin / N^2 * grad N,  grad N = N^{1-p}/p * grad S
    const VectorC gs = detail::w1p_power_gradient(sp, v, p);
    const VectorC grad = f / nv - (lin / (nv * nv)) * (std::pow(nv, 1.0 - p) / p) * gs;
    const VectorC dir = sp.riesz(grad);
    const double slope = grad.dot(dir).real();
    const double optimality = std::sqrt(std::max(0.0, slope)) * sp.w12_norm(v) / std::max(j, 1e-300);
    if (optimality <= rel_tol) {
      out.converged = true;
      break;
    }
    step = std::min(step * 4.0, 1e6);
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      VectorC trial = v + step * dir;
      const double jt = objective(trial);
      if (jt >= j + 1e-4 * step * slope) {
        v = trial / w1p_norm(sp, trial, p);
        j = jt;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No ascent possible at double precision: treat as stationary.
      out.converged = optimality <= 1e3 * rel_tol;
      break;
    }
  }
  out.value = std::abs(j);
  return out;
}

/// Writes a sparse matrix in Matrix Market coordinate format (complex general,
/// or real general when every entry is real).
inline void write_matrix_market(const SparseC& a, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InputError("io_error", "cannot open " + path);
  bool real = true;
  for (int c = 0; c < a.outerSize(); ++c)
    for (SparseC::InnerIterator it(a, c); it; ++it)
      if (it.value().imag() != 0.0) real = false;
  os << "%%MatrixMarket matrix coordinate " << (real ? "real" : "complex") << " general\n";
  os << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  os << std::setprecision(17);
  for (int c = 0; c < a.outerSize(); ++c)
    for (SparseC::InnerIterator it(a, c); it; ++it) {
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value().real();
      if (!real) os << ' ' << it.value().imag();
      os << '\n';
    }
}

}  // namespace parsys
