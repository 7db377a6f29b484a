// Time stepping, maximal-regularity norms, quasilinear solvers, Volterra maps
// and the chemotaxis system.

#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "parsys/chemotaxis.hpp"
#include "parsys/random_tensors.hpp"

using namespace parsys;

namespace {

Mesh2D square(int n, int m = 1) { return unit_square_mesh(n, BoundarySpec::full_dirichlet(DomainSpec::unit_square(), m)); }

std::shared_ptr<const FESpace> space(int n, int m = 1) { return std::make_shared<const FESpace>(square(n, m)); }

VectorC sine_mode(const FESpace& sp) {
  return sp.interpolate([](int i, const Point2& x) {
    return Complex((1.0 + i) * std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]));
  });
}

LoadSeries smooth_loads(const FESpace& sp, const TimeGrid& grid, double a = 1.0) {
  return sample_loads(sp, grid, [a](double t, int i, const EvalPoint& x) {
    return Complex(a * (1.0 + std::cos(3.0 * t)) * x.x(0), 0.5 * i + t * x.x(1));
  });
}

Trajectory constant_trajectory(const VectorC& v, const TimeGrid& grid) {
  Trajectory u;
  u.grid = grid;
  u.values.assign(static_cast<size_t>(grid.N + 1), v);
  return u;
}

bool same_bits(const VectorC& a, const VectorC& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index k = 0; k < a.size(); ++k)
    if (a(k).real() != b(k).real() || a(k).imag() != b(k).imag()) return false;
  return true;
}

bool same_bits(const FESpace& sp, const CoefficientTensor& a, const CoefficientTensor& b) {
  for (const auto& q : sp.quadrature()) {
    const EvalPoint p = FESpace::make_eval_point(q);
    const MatrixC x = a.block(p), y = b.block(p);
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x(i).real() != y(i).real() || x(i).imag() != y(i).imag()) return false;
  }
  return true;
}

/// Evaluates `map` on u and on a copy of u perturbed after node n, through
/// both apply_all and single prefixes, and checks that nodes <= n agree
/// bitwise.
template <class Output, class Equal>
void expect_causal(const VolterraMap<Output>& map, const FESpace& sp, const Trajectory& u, int n, Equal equal) {
  Trajectory w = u;
  std::mt19937_64 rng(n);
  std::normal_distribution<double> g;
  for (int k = n + 1; k <= u.grid.N; ++k)
    for (Eigen::Index i = 0; i < w.values[static_cast<size_t>(k)].size(); ++i)
      w.values[static_cast<size_t>(k)](i) += Complex(g(rng), g(rng));
  const auto a = map.apply_all(sp, u, 1, u.grid.N);
  const auto b = map.apply_all(sp, w, 1, u.grid.N);
  for (int k = 1; k <= n; ++k) {
    EXPECT_TRUE(equal(a[static_cast<size_t>(k - 1)], b[static_cast<size_t>(k - 1)])) << map.name() << " node " << k;
    const Output pa = map.at(TrajectoryPrefix(sp, u.grid, u.values, k));
    const Output pb = map.at(TrajectoryPrefix(sp, w.grid, w.values, k));
    EXPECT_TRUE(equal(pa, pb)) << map.name() << " prefix node " << k;
  }
}

Trajectory random_trajectory(const FESpace& sp, const TimeGrid& grid, unsigned seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Trajectory t;
  t.grid = grid;
  for (int n = 0; n <= grid.N; ++n) {
    VectorC v(sp.size());
    for (int k = 0; k < v.size(); ++k) v(k) = 0.5 + u(rng);
    t.values.push_back(v);
  }
  return t;
}

}  // namespace

// ---- parabolic ----

TEST(Parabolic, ZeroDataGivesZero) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 8);
  const auto u = step_solve(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0.0, zero_loads(*sp, grid),
                            VectorC::Zero(sp->size()), grid);
  for (const auto& v : u.values) EXPECT_EQ(v.norm(), 0.0);
}

TEST(Parabolic, EigenvectorDecaysGeometrically) {
  auto sp = space(6);
  // Oracle: dense generalized eigenpair of (grad_mass, mass).
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixR> es(MatrixR(sp->grad_mass()), MatrixR(sp->mass()));
  const double mu = es.eigenvalues()(0);
  const VectorC phi = es.eigenvectors().col(0).cast<Complex>();
  const TimeGrid grid(0, 0.5, 10);
  const auto u = step_solve(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0.0, zero_loads(*sp, grid),
                            phi, grid);
  for (int n = 0; n <= grid.N; ++n) {
    const VectorC ref = std::pow(1.0 + grid.tau() * mu, -n) * phi;
    EXPECT_LE((u.values[static_cast<size_t>(n)] - ref).norm(), 1e-12 * ref.norm());
  }
}

TEST(Parabolic, ManufacturedHeatSolutionConverges) {
  double prev = 0.0;
  for (int n : {8, 16}) {
    auto sp = space(n);
    const TimeGrid grid(0, 1, n);
    const auto f = sample_loads(*sp, grid, [](double t, int, const EvalPoint& x) {
      return Complex(ManufacturedSolution::heat_source(t, {x.x(0), x.x(1)}));
    });
    const auto u = step_solve(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0.0, f,
                              VectorC::Zero(sp->size()), grid);
    const double e = l2_w12_error(
        *sp, u, [](double t, int, const Point2& x) { return Complex(ManufacturedSolution::value(t, x)); },
        [](double t, int, const Point2& x) { return ManufacturedSolution::gradient(t, x); });
    if (prev > 0) {
      EXPECT_GE(prev / e, 1.7);
    }
    prev = e;
  }
}

TEST(Parabolic, Superposition) {
  auto sp = space(5, 2);
  std::mt19937_64 rng(1);
  const TimeGrid grid(0, 1, 6);
  std::vector<double> times;
  for (int n = 0; n <= grid.N; ++n) times.push_back(grid.node(n));
  const auto fam = random::hermitian_family(rng, 2, 2, 0.5, 2.0, times);
  const auto f1 = smooth_loads(*sp, grid, 1.0), f2 = smooth_loads(*sp, grid, -2.5);
  const VectorC a0 = sine_mode(*sp), b0 = VectorC::Constant(sp->size(), Complex(0.1, 0.2));
  LoadSeries fs(f1.size());
  for (size_t k = 0; k < fs.size(); ++k) fs[k] = f1[k] + f2[k];
  const Complex shift(0.5, 0.3);
  const auto ua = step_solve(sp, fam, shift, f1, a0, grid);
  const auto ub = step_solve(sp, fam, shift, f2, b0, grid);
  const auto us = step_solve(sp, fam, shift, fs, a0 + b0, grid);
  for (int n = 0; n <= grid.N; ++n) {
    const VectorC diff = us.values[static_cast<size_t>(n)] - ua.values[static_cast<size_t>(n)] - ub.values[static_cast<size_t>(n)];
    EXPECT_LE(diff.norm(), 1e-12 * (1.0 + us.values[static_cast<size_t>(n)].norm()));
  }
}

TEST(Parabolic, EnergyDissipation) {
  auto sp = space(6, 2);
  std::mt19937_64 rng(2);
  const TimeGrid grid(0, 1, 12);
  std::vector<double> times;
  for (int n = 0; n <= grid.N; ++n) times.push_back(grid.node(n));
  const auto fam = random::hermitian_family(rng, 2, 2, 0.5, 2.0, times);
  const auto u = step_solve(sp, fam, 0.0, zero_loads(*sp, grid), sine_mode(*sp), grid);
  for (int n = 1; n <= grid.N; ++n)
    EXPECT_LE(sp->l2_norm(u.values[static_cast<size_t>(n)]), sp->l2_norm(u.values[static_cast<size_t>(n - 1)]) + 1e-14);
}

TEST(Parabolic, MaxRegNormBasics) {
  auto sp = space(4);
  const TimeGrid grid(0, 2, 5);
  EXPECT_EQ(maxreg_norm(*sp, constant_trajectory(VectorC::Zero(sp->size()), grid), 2, 2).value, 0.0);

  const VectorC v = sine_mode(*sp);
  const auto c = maxreg_norm(*sp, constant_trajectory(v, grid), 3.0, 2.0);
  EXPECT_EQ(c.derivative_part, 0.0);
  EXPECT_NEAR(c.value, std::pow(2.0, 1.0 / 3.0) * sp->w12_norm(v), 1e-12);
  const auto cq = maxreg_norm(*sp, constant_trajectory(v, grid), 2.0, 2.5);
  EXPECT_NEAR(cq.value, std::sqrt(2.0) * w1p_norm(*sp, v, 2.5), 1e-12);

  const auto u = step_solve(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0.0,
                            smooth_loads(*sp, grid), v, grid);
  const auto base = maxreg_norm(*sp, u, 2, 2);
  EXPECT_TRUE(base.exact);
  EXPECT_NEAR(maxreg_norm(*sp, Complex(5.0) * u, 2, 2).value, 5.0 * base.value, 1e-12 * base.value);
}

TEST(Parabolic, LionsConstant) {
  EXPECT_DOUBLE_EQ(lions_constant(0, 1, 1, 1), 3.0);
  EXPECT_THROW(lions_constant(1, 1, 1, 1), InputError);
  auto sp = space(4);
  const TimeGrid grid(0, 1, 4);
  const auto rep = lions_verify(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0, 1, 1, 1,
                                zero_loads(*sp, grid), grid);
  EXPECT_EQ(rep.c_observed, 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(Parabolic, LionsBoundOnRandomFamilies) {
  auto sp = space(8);
  const TimeGrid grid(0, 1, 16);
  std::vector<double> times;
  for (int n = 0; n <= grid.N; ++n) times.push_back(grid.node(n));
  std::mt19937_64 rng(77);
  for (int k = 0; k < 3; ++k) {
    const auto fam = random::hermitian_family(rng, 1, 2, 0.5, 2.0, times);
    const auto rep = lions_verify(sp, fam, 0.0, 0.5, tensor_sup_norm(fam, times), 1.0, smooth_loads(*sp, grid), grid);
    EXPECT_TRUE(rep.precondition_ok);
    EXPECT_TRUE(rep.pass) << rep.c_observed << " vs " << rep.c_theoretical;
  }
}

TEST(Parabolic, ShiftTransform) {
  auto sp = space(4);
  const auto fam = TensorFamily::constant(CoefficientTensor::identity(1, 2));
  auto f = [](double t, int, const EvalPoint& x) { return Complex(std::cos(t) * x.x(0)); };
  const auto zero = shift_transform_check(sp, fam, 0.0, f, sine_mode(*sp), TimeGrid(0, 1, 8));
  EXPECT_EQ(zero.error_coarse, 0.0);
  EXPECT_EQ(zero.error_fine, 0.0);
  const auto one = shift_transform_check(sp, fam, 1.0, f, sine_mode(*sp), TimeGrid(0, 1, 32));
  EXPECT_GE(one.ratio, 1.7);
  EXPECT_LE(one.ratio, 2.3);
}

TEST(Parabolic, RestrictAndExtend) {
  auto sp = space(5);
  const TimeGrid grid(0, 1, 10);
  const auto u = step_solve(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0.0,
                            smooth_loads(*sp, grid), sine_mode(*sp), grid);
  const auto same = extend(*sp, u, grid);
  for (int n = 0; n <= grid.N; ++n) EXPECT_TRUE(same_bits(same.values[static_cast<size_t>(n)], u.values[static_cast<size_t>(n)]));

  const auto zero = extend(*sp, restrict(constant_trajectory(VectorC::Zero(sp->size()), grid), 0.5), grid);
  for (const auto& v : zero.values) EXPECT_EQ(v.norm(), 0.0);

  const auto half = restrict(u, 0.5);
  EXPECT_EQ(half.grid.N, 5);
  const auto ext = extend(*sp, half, grid);
  ASSERT_EQ(ext.values.size(), 11u);
  for (int n = 0; n <= 5; ++n)
    EXPECT_LE((ext.values[static_cast<size_t>(n)] - u.values[static_cast<size_t>(n)]).norm(),
              1e-12 * (1.0 + u.values[static_cast<size_t>(n)].norm()));
  EXPECT_THROW(restrict(u, 0.55), InputError);
}

TEST(Parabolic, TraceRatioStaysBounded) {
  std::vector<double> ratios;
  for (int n : {4, 8, 16}) {
    auto sp = space(n);
    const TimeGrid grid(0, 1, n);
    const auto f = sample_loads(*sp, grid, [](double t, int, const EvalPoint& x) {
      return Complex(ManufacturedSolution::heat_source(t, {x.x(0), x.x(1)}));
    });
    const auto u = step_solve(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0.0, f,
                              VectorC::Zero(sp->size()), grid);
    ratios.push_back(max_l2_norm(*sp, u) / maxreg_norm(*sp, u, 3.0, 2.0).value);
  }
  for (size_t k = 1; k < ratios.size(); ++k) {
    EXPECT_LT(ratios[k] / ratios[k - 1], 10.0);
    EXPECT_GT(ratios[k] / ratios[k - 1], 0.1);
  }
}

TEST(Parabolic, ThresholdDiagnostic) {
  EXPECT_FALSE(threshold_diagnostic(2, 2).admissible);
  const auto t = threshold_diagnostic(6, 4);
  EXPECT_TRUE(t.q_above_d);
  EXPECT_DOUBLE_EQ(t.r_threshold, 4.0);
  EXPECT_TRUE(t.admissible);
  EXPECT_DOUBLE_EQ(t.alpha_sup, 1.0 - 2.0 / 6 - 0.5);
  EXPECT_FALSE(threshold_diagnostic(3, 4).admissible);
}

TEST(Parabolic, RejectsBadGrids) {
  EXPECT_THROW(TimeGrid(0, 1, 0), InputError);
  EXPECT_THROW(TimeGrid(1, 1, 4), InputError);
  auto sp = space(2);
  const TimeGrid grid(0, 1, 4);
  EXPECT_THROW(step_solve(sp, TensorFamily::constant(CoefficientTensor::identity(1, 2)), 0.0, LoadSeries(2),
                          VectorC::Zero(sp->size()), grid),
               InputError);
}

// ---- cut-off ----

TEST(Cutoff, Examples) {
  const double eps = 0.1;
  MatrixC a0 = MatrixC::Identity(3, 3);
  EXPECT_EQ((cutoff_block(eps, a0, a0) - a0).norm(), 0.0);

  MatrixC raw = a0;
  raw(1, 2) += 2 * eps;
  const MatrixC c = cutoff_block(eps, a0, raw);
  EXPECT_NEAR(std::abs(c(1, 2) - (a0(1, 2) + eps)), 0.0, 1e-15);

  const Complex phase = std::polar(1.0, std::numbers::pi / 4);
  raw = a0;
  raw(2, 1) += 2 * eps * phase;
  const MatrixC d = cutoff_block(eps, a0, raw);
  EXPECT_NEAR(std::abs(d(2, 1) - eps * phase), 0.0, 1e-15);
}

TEST(Cutoff, IdempotentContractiveAndBounded) {
  std::mt19937_64 rng(21);
  const double eps = 0.3;
  for (int k = 0; k < 50; ++k) {
    const MatrixC a0 = random::uniform(rng, 2, 2).block();
    const MatrixC x = random::uniform(rng, 2, 2).block(), y = random::uniform(rng, 2, 2).block();
    const MatrixC cx = cutoff_block(eps, a0, x), cy = cutoff_block(eps, a0, y);
    EXPECT_LE((cutoff_block(eps, a0, cx) - cx).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((cx - a0).cwiseAbs().maxCoeff(), eps + 1e-15);
    for (Eigen::Index i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(cx(i) - cy(i)), std::abs(x(i) - y(i)) + 1e-15);
  }
}

// ---- Picard and continuation ----

TEST(Picard, StateIndependentMapsConvergeInTwoIterations) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 8);
  const auto a = maps::constant(CoefficientTensor::identity(1, 2));
  const auto phi = maps::loads(smooth_loads(*sp, grid));
  const auto r = picard_solve(sp, a, &phi, sine_mode(*sp), grid);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 2);
}

TEST(Picard, QuasilinearManufacturedSolution) {
  auto sp = space(8);
  const TimeGrid grid(0, 1, 8);
  const auto phi = maps::loads(sample_loads(*sp, grid, [](double t, int, const EvalPoint& x) {
    return Complex(ManufacturedSolution::quasilinear_source(t, {x.x(0), x.x(1)}));
  }));
  const auto r = picard_solve(sp, maps::local_state(*sp), &phi, VectorC::Zero(sp->size()), grid);
  EXPECT_TRUE(r.converged);
  const double e = l2_w12_error(
      *sp, r.u, [](double t, int, const Point2& x) { return Complex(ManufacturedSolution::value(t, x)); },
      [](double t, int, const Point2& x) { return ManufacturedSolution::gradient(t, x); });
  EXPECT_LT(e, 0.35);
}

TEST(Picard, WindowIgnoresGuessBeyondWindow) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 10);
  const auto a = maps::nonlocal_mean(1, 0.5);
  const auto start = constant_trajectory(sine_mode(*sp), grid);
  Trajectory g1 = start, g2 = start;
  for (int n = 7; n <= grid.N; ++n) g2.values[static_cast<size_t>(n)] *= 3.0;
  const auto r1 = picard_solve(sp, a, nullptr, start, 0, 6, {}, &g1);
  const auto r2 = picard_solve(sp, a, nullptr, start, 0, 6, {}, &g2);
  for (int n = 0; n <= 6; ++n) EXPECT_TRUE(same_bits(r1.u.values[static_cast<size_t>(n)], r2.u.values[static_cast<size_t>(n)]));
}

TEST(Picard, DifferentGuessesGiveTheSameSolution) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 8);
  PicardOptions opt;
  opt.tol = 1e-9;
  const auto a = maps::local_state(*sp);
  const auto phi = maps::loads(smooth_loads(*sp, grid));
  const auto start = constant_trajectory(sine_mode(*sp), grid);
  const auto other = random_trajectory(*sp, grid, 4);
  const auto r1 = picard_solve(sp, a, &phi, start, 0, grid.N, opt);
  const auto r2 = picard_solve(sp, a, &phi, start, 0, grid.N, opt, &other);
  EXPECT_LE(maxreg_norm(*sp, r1.u - r2.u, 2, 2).value, 10 * opt.tol * (1.0 + maxreg_norm(*sp, r1.u, 2, 2).value));
}

TEST(Picard, ReportsNonConvergence) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 4);
  PicardOptions opt;
  opt.max_iter = 1;
  try {
    picard_solve(sp, maps::local_state(*sp), nullptr, sine_mode(*sp), grid, opt);
    FAIL();
  } catch (const SolverError& e) {
    EXPECT_EQ(e.reason(), "no_convergence");
  }
}

TEST(Continuation, LinearProblemIsOneWindow) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 8);
  const auto fam = TensorFamily::constant(CoefficientTensor::identity(1, 2));
  const LoadSeries f = smooth_loads(*sp, grid);
  const auto phi = maps::loads(f);
  const auto rep = continuation_solve(sp, maps::constant(CoefficientTensor::identity(1, 2)), &phi, sine_mode(*sp), grid);
  EXPECT_TRUE(rep.global);
  EXPECT_EQ(rep.windows.size(), 1u);
  const auto ref = step_solve(sp, fam, 0.0, f, sine_mode(*sp), grid);
  for (int n = 0; n <= grid.N; ++n)
    EXPECT_LE((rep.u.values[static_cast<size_t>(n)] - ref.values[static_cast<size_t>(n)]).norm(),
              1e-12 * (1.0 + ref.values[static_cast<size_t>(n)].norm()));
}

TEST(Continuation, WindowCountFollowsHalfRule) {
  auto sp = space(4);
  const TimeGrid grid(0, 0.5, 64);
  const auto phi = maps::linear_mass(0.1);
  ContinuationOptions opt;
  opt.tol = 1e-10;
  const auto rep = continuation_solve(sp, maps::constant(CoefficientTensor::identity(1, 2)), &phi, sine_mode(*sp), grid, opt);
  // (1 + 0.1 a) 3 a = 1/2 with a = l^{1/2}.
  const double a = (-3.0 + std::sqrt(9.0 + 4.0 * 0.3 * 0.5)) / (2.0 * 0.3);
  const int per = static_cast<int>(std::floor(a * a / grid.tau()));
  EXPECT_NEAR(rep.window_length, a * a, 1e-14);
  EXPECT_EQ(rep.nodes_per_window, per);
  EXPECT_EQ(static_cast<int>(rep.windows.size()), (grid.N + per - 1) / per);
  EXPECT_TRUE(rep.global);
}

TEST(Continuation, RestartReproducesTail) {
  auto sp = space(4);
  const TimeGrid grid(0, 0.5, 32);
  const auto phi = maps::linear_mass(0.1);
  const auto a = maps::nonlocal_mean(1, 0.5);
  ContinuationOptions opt;
  opt.tol = 1e-10;
  opt.check_ellipticity = false;
  const auto full = continuation_solve(sp, a, &phi, sine_mode(*sp), grid, opt);
  const int k = 13;
  const auto tail = continuation_solve(sp, a, &phi, full.u.values[static_cast<size_t>(k)], grid, opt, &full.u, k);
  const double diff = maxreg_norm(*sp, tail.u - full.u, 2, 2, k).value;
  EXPECT_LE(diff, 10 * opt.tol * (1.0 + maxreg_norm(*sp, full.u, 2, 2, k).value));
}

TEST(Continuation, UnderResolvedWindowIsAnError) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 4);
  const auto phi = maps::linear_mass(1e4);
  try {
    continuation_solve(sp, maps::constant(CoefficientTensor::identity(1, 2)), &phi, sine_mode(*sp), grid);
    FAIL();
  } catch (const SolverError& e) {
    EXPECT_EQ(e.reason(), "window_under_resolved");
  }
}

TEST(Continuity, ConstantMapGivesWholeInterval) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 10);
  const auto w = continuity_window_check(sp, maps::constant(CoefficientTensor::identity(1, 2)), nullptr, sine_mode(*sp),
                                         0.25, grid);
  EXPECT_DOUBLE_EQ(w.delta, 1.0);
}

TEST(Continuity, TimeLinearMap) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 10);
  const auto w = continuity_window_check(sp, maps::time_linear(CoefficientTensor::identity(1, 2)), nullptr,
                                         sine_mode(*sp), 0.25, grid);
  EXPECT_EQ(w.node, 2);
  EXPECT_DOUBLE_EQ(w.delta, grid.node(2));
}

TEST(Continuity, ContinuousMapGetsAtLeastOneStep) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 40);
  const auto w = continuity_window_check(sp, maps::nonlocal_mean(1), nullptr, sine_mode(*sp), 0.05, grid);
  EXPECT_GE(w.delta, grid.tau());
}

// ---- Volterra causality ----

TEST(Volterra, ShippedMapsAreCausal) {
  auto sp = space(4);
  const TimeGrid grid(0, 1, 8);
  const auto u = random_trajectory(*sp, grid, 3);
  auto teq = [&](const CoefficientTensor& a, const CoefficientTensor& b) { return same_bits(*sp, a, b); };
  auto veq = [](const VectorC& a, const VectorC& b) { return same_bits(a, b); };
  for (int n : {1, 4, 7}) {
    expect_causal(maps::constant(CoefficientTensor::identity(1, 2)), *sp, u, n, teq);
    expect_causal(maps::time_linear(CoefficientTensor::identity(1, 2)), *sp, u, n, teq);
    expect_causal(maps::local_state(*sp), *sp, u, n, teq);
    expect_causal(maps::nonlocal_mean(1), *sp, u, n, teq);
    expect_causal(maps::zero(*sp), *sp, u, n, veq);
    expect_causal(maps::linear_mass(0.1), *sp, u, n, veq);
    expect_causal(maps::loads(smooth_loads(*sp, grid)), *sp, u, n, veq);
  }
}

TEST(Volterra, ChemotaxisMapsAreCausal) {
  chemo::ChemotaxisParams p;
  p.kappa = {chemo::AffineCoefficient{1.0, 0.1, 0.0}, chemo::AffineCoefficient{1.2, 0.0, 0.1}};
  p.sigma = {chemo::AffineCoefficient{0.3, 0.1, 0.0}, chemo::AffineCoefficient{0.2, 0.0, 0.0}};
  p.g[0].l = {0.5, -1.0, 0.0, 0.0};
  p.g[1].q[2][2] = 0.1;
  p.initial[1] = {chemo::InitialProfile::Kind::constant, 0.4};
  p.initial[3] = {chemo::InitialProfile::Kind::cosine, 0.5, 0.1};
  const auto s = chemo::make_spaces(p, DomainSpec::unit_square(), 0.25);
  const TimeGrid grid(0, 0.5, 8);
  auto teq4 = [&](const CoefficientTensor& a, const CoefficientTensor& b) { return same_bits(*s->full, a, b); };
  auto teq2 = [&](const CoefficientTensor& a, const CoefficientTensor& b) { return same_bits(*s->u, a, b); };
  auto veq = [](const VectorC& a, const VectorC& b) { return same_bits(a, b); };
  const auto w = random_trajectory(*s->full, grid, 5);
  const auto u = random_trajectory(*s->u, grid, 6);
  const auto red = chemo::reduction_map(p, *s, grid);
  for (int n : {2, 5}) {
    expect_causal(chemo::full_map(p), *s->full, w, n, teq4);
    expect_causal(chemo::full_reaction_map(p), *s->full, w, n, veq);
    expect_causal(red->tensor_map(red), *s->u, u, n, teq2);
    expect_causal(red->drift_map(red), *s->u, u, n, veq);
  }
}

TEST(Volterra, PrefixRefusesFutureNodes) {
  auto sp = space(2);
  const TimeGrid grid(0, 1, 4);
  const auto u = random_trajectory(*sp, grid, 1);
  const TrajectoryPrefix p(*sp, grid, u.values, 2);
  EXPECT_NO_THROW(p.at(2));
  EXPECT_THROW(p.at(3), InputError);
}

// ---- chemotaxis ----

namespace {

chemo::ChemotaxisParams coercive_params() {
  chemo::ChemotaxisParams p;
  p.kappa = {chemo::AffineCoefficient{1, 0, 0}, chemo::AffineCoefficient{1, 0, 0}};
  p.sigma = {chemo::AffineCoefficient{0.5, 0, 0}, chemo::AffineCoefficient{0.5, 0, 0}};
  p.g[0].l = {0.5, -1.0, 0.0, 0.0};
  p.g[0].q[0][0] = -0.1;
  p.g[1].l = {0.0, 0.0, 0.5, -1.0};
  p.g[1].q[2][1] = 0.05;
  p.initial[0] = {chemo::InitialProfile::Kind::bump, 1.0, 0.5};
  p.initial[1] = {chemo::InitialProfile::Kind::constant, 0.5};
  p.initial[2] = {chemo::InitialProfile::Kind::cosine, 1.0, 0.2};
  p.initial[3] = {chemo::InitialProfile::Kind::constant, 0.5};
  return p;
}

}  // namespace

TEST(Chemotaxis, DecoupledTensorIsIdentity) {
  chemo::ChemotaxisParams p;
  const auto t = chemo::full_tensor(p, {0, 0, 0, 0});
  EXPECT_NEAR(legendre_constant(t), 1.0, 1e-14);
}

TEST(Chemotaxis, ConditionExamples) {
  chemo::ChemotaxisParams p;
  p.sigma[0] = {2.0, 0, 0};
  const auto r = chemo::condition_report(p, {0, 0, 0, 0});
  EXPECT_TRUE(r.lh_fails_full);
  EXPECT_FALSE(r.witness.empty());
  EXPECT_LT(legendre_hadamard_constant(chemo::full_tensor(p, {0, 0, 0, 0})), 0.0);

  chemo::ChemotaxisParams q;
  q.sigma = {chemo::AffineCoefficient{0.5, 0, 0}, chemo::AffineCoefficient{0.5, 0, 0}};
  const auto s = chemo::condition_report(q, {0, 0, 0, 0});
  EXPECT_NEAR(s.legendre_reduced, 0.5, 1e-12);
  EXPECT_EQ(s.reduced_inequality, 0.5);
  EXPECT_TRUE(s.reduced_ok);
  EXPECT_FALSE(s.lh_fails_full);
}

TEST(Chemotaxis, ConditionBooleansMatchDirectEvaluation) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.1, 3.0), sg(-3.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    chemo::ChemotaxisParams p;
    p.kappa = {chemo::AffineCoefficient{u(rng), 0, 0}, chemo::AffineCoefficient{u(rng), 0, 0}};
    p.sigma = {chemo::AffineCoefficient{sg(rng), 0, 0}, chemo::AffineCoefficient{sg(rng), 0, 0}};
    p.alpha = {u(rng), u(rng)};
    const auto r = chemo::condition_report(p, {0, 0, 0, 0});
    const double k1 = p.kappa[0].c0, k2 = p.kappa[1].c0, s1 = p.sigma[0].c0, s2 = p.sigma[1].c0;
    const bool fails = std::abs(s1) >= 2 * std::sqrt(k1 * p.alpha[0]) || std::abs(s2) >= 2 * std::sqrt(k2 * p.alpha[1]);
    EXPECT_EQ(r.lh_fails_full, fails);
    EXPECT_EQ(r.reduced_ok, std::min(k1, k2) - std::abs(s1 + s2) / 2 > 0);
  }
}

TEST(Chemotaxis, ZeroAttractantReduction) {
  chemo::ChemotaxisParams p;
  p.kappa = {chemo::AffineCoefficient{1.0, 0.5, 0}, chemo::AffineCoefficient{2.0, 0, 0}};
  p.sigma = {chemo::AffineCoefficient{0.3, 0, 0}, chemo::AffineCoefficient{0.4, 0, 0}};
  const auto s = chemo::make_spaces(p, DomainSpec::unit_square(), 0.25);
  const TimeGrid grid(0, 1, 4);
  const auto red = chemo::reduction_map(p, *s, grid);
  const auto u = random_trajectory(*s->u, grid, 2);
  const auto v = red->attractants([&](int k) -> const VectorC& { return u.values[static_cast<size_t>(k)]; }, grid.N);
  for (const auto& x : v) EXPECT_EQ(x.norm(), 0.0);
  const auto t = red->tensor(u.values[2], v[2]);
  const auto& q = s->u->quadrature().front();
  const double u1 = s->u->value(u.values[2], 0, q.cell, q.bary).real();
  const MatrixC pr = CoefficientTensor::principal(t.block(FESpace::make_eval_point(q)), 2, 2);
  EXPECT_NEAR(pr(0, 0).real(), 1.0 + 0.5 * u1, 1e-14);
  EXPECT_NEAR(pr(0, 2).real(), -0.3, 1e-14);
  EXPECT_NEAR(pr(2, 0).real(), -0.4, 1e-14);
  EXPECT_NEAR(pr(2, 2).real(), 2.0, 1e-14);
}

TEST(Chemotaxis, ConstantCoefficientsGiveConstantReducedTensor) {
  auto p = coercive_params();
  const auto s = chemo::make_spaces(p, DomainSpec::unit_square(), 0.25);
  const TimeGrid grid(0, 1, 4);
  const auto red = chemo::reduction_map(p, *s, grid);
  const auto u = random_trajectory(*s->u, grid, 8);
  const auto tens = red->tensor_map(red).apply_all(*s->u, u, 1, grid.N);
  const auto ref = chemo::reduced_tensor(1, 0.5, 1, 0.5).block();
  for (const auto& t : tens)
    for (const auto& q : s->u->quadrature()) EXPECT_EQ((t.block(FESpace::make_eval_point(q)) - ref).norm(), 0.0);
}

TEST(Chemotaxis, MassIsConservedWithoutDrift) {
  chemo::ChemotaxisParams p;
  p.initial[0] = {chemo::InitialProfile::Kind::bump, 0.0, 1.0};
  p.initial[2] = {chemo::InitialProfile::Kind::bump, 0.2, 0.7, {0.4, 0.6}, 0.25};
  p.initial[1] = {chemo::InitialProfile::Kind::cosine, 0.5, 0.2};
  const auto s = chemo::make_spaces(p, DomainSpec::unit_square(), 0.25);
  const TimeGrid grid(0, 0.5, 8);
  for (auto mode : {chemo::Mode::full4, chemo::Mode::reduced2}) {
    const auto r = chemo::simulate(p, mode, *s, grid, 1e-10);
    for (int i = 0; i < 2; ++i) {
      const auto& m = r.mass[static_cast<size_t>(i)];
      for (double x : m) EXPECT_LE(std::abs(x - m.front()), 1e-10 * std::abs(m.front()));
    }
  }
}

TEST(Chemotaxis, FullAndReducedAgree) {
  const auto p = coercive_params();
  const auto s = chemo::make_spaces(p, DomainSpec::unit_square(), 1.0 / 6);
  const TimeGrid grid(0, 0.25, 16);
  const double tol = 1e-10;
  const auto a = chemo::simulate(p, chemo::Mode::full4, *s, grid, tol);
  const auto b = chemo::simulate(p, chemo::Mode::reduced2, *s, grid, tol);
  EXPECT_GE(a.conditions.legendre_reduced, 0.5 - 1e-12);
  double num = 0, den = 0;
  for (int n = 1; n <= grid.N; ++n) {
    num += std::pow(s->full->l2_norm(a.fields.values[static_cast<size_t>(n)] - b.fields.values[static_cast<size_t>(n)]), 2);
    den += std::pow(s->full->l2_norm(a.fields.values[static_cast<size_t>(n)]), 2);
  }
  EXPECT_LE(std::sqrt(num / den), 10 * tol);
}

TEST(Chemotaxis, ReducedRunsWhenFullSystemFailsLegendreHadamard) {
  chemo::ChemotaxisParams p;
  p.sigma = {chemo::AffineCoefficient{2.0, 0, 0}, chemo::AffineCoefficient{-1.5, 0, 0}};
  p.initial[0] = {chemo::InitialProfile::Kind::bump, 1.0, 0.5};
  p.initial[2] = {chemo::InitialProfile::Kind::constant, 1.0};
  p.initial[1] = {chemo::InitialProfile::Kind::cosine, 0.5, 0.2};
  const auto s = chemo::make_spaces(p, DomainSpec::unit_square(), 0.25);
  const auto r = chemo::simulate(p, chemo::Mode::reduced2, *s, TimeGrid(0, 0.25, 8), 1e-8);
  EXPECT_TRUE(r.conditions.lh_fails_full);
  EXPECT_TRUE(r.conditions.reduced_ok);
  EXPECT_EQ(r.fields.values.size(), 9u);
}

TEST(Chemotaxis, RejectsNonPositiveDiffusion) {
  chemo::ChemotaxisParams p;
  p.alpha[1] = 0.0;
  EXPECT_THROW(p.validate(), InputError);
  p.alpha[1] = 1.0;
  p.kappa[0] = {0.5, -1.0, 0.0};
  EXPECT_THROW(p.validate(), InputError);
}
