#pragma once

// Rank-one oscillation probe: Gårding quotients of localized sawtooth
// functions, which approach the Legendre-Hadamard form value as eps -> 0.

#include <cmath>
#include <vector>

#include "parsys/elliptic.hpp"

namespace parsys {

/// 2-periodic sawtooth (triangle wave) with slopes +-1, w(0) = 0.
inline double sawtooth_wave(double s) { return std::abs(s - 2.0 * std::round(0.5 * s)); }

/// Smooth bump exp(1 - 1/(1 - |x - c|^2/rho^2)) supported in B(c, rho).
struct Bump {
  Point2 center{0.5, 0.5};
  double radius = 0.45;

  double operator()(const Point2& x) const {
    const double s = ((x[0] - center[0]) * (x[0] - center[0]) + (x[1] - center[1]) * (x[1] - center[1])) /
                     (radius * radius);
    return s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
  }
};

struct SawtoothSample {
  double eps = 0.0;
  double quotient = 0.0;
};

struct SawtoothResult {
  std::vector<SawtoothSample> samples;
  double lh_value = 0.0;             // Re(zeta^H M(eta) zeta) / |zeta|^2
  std::vector<double> errors;        // |quotient - lh_value|
  std::vector<double> error_ratios;  // errors[k] / errors[k+1]
};

/// Quotients Re<L u_eps, u_eps> / int |grad u_eps|^2 for
///   u_eps(x) = eps * phi(x) * w(eta . x / eps) * zeta,
/// interpolated into the P1 space of `op`. The mesh must resolve every eps
/// with max edge length <= eps / 4.
inline SawtoothResult sawtooth_probe(const DiscreteSystemOperator& op, const Eigen::Vector2d& eta_in,
                                     const VectorC& zeta, const std::vector<double>& eps_list,
                                     const Bump& bump = {}) {
  const CoefficientTensor& t = op.tensor;
  if (!t.is_constant()) throw InputError("not_constant", "sawtooth_probe needs a constant tensor");
  if (zeta.size() != t.m()) throw InputError("dimension_mismatch", "zeta must have m entries");
  if (eta_in.norm() == 0.0 || zeta.norm() == 0.0) throw InputError("invalid_direction", "eta and zeta must be nonzero");
  for (size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0)) throw InputError("invalid_eps", "eps must be positive");
    if (k > 0 && !(eps_list[k] < eps_list[k - 1])) throw InputError("invalid_eps", "eps list must decrease");
  }
  const double h = op.mesh().max_edge_length();
  if (!eps_list.empty() && h > eps_list.back() / 4.0 * (1.0 + 1e-12))
    throw InputError("mesh_too_coarse", "mesh too coarse for requested eps: need h <= eps/4");

  const Eigen::Vector2d eta = eta_in.normalized();
  const MatrixC pr = CoefficientTensor::principal(t.block(), t.m(), t.d());
  const MatrixC sym = rank_one_symbol(pr, t.m(), t.d(), eta);
  SawtoothResult out;
  out.lh_value = zeta.dot(sym * zeta).real() / zeta.squaredNorm();

  const FESpace& sp = *op.space;
  const SparseC g = op.grad_mass().cast<Complex>();
  for (double eps : eps_list) {
    const VectorC u = sp.interpolate([&](int i, const Point2& x) {
      return eps * bump(x) * sawtooth_wave((eta[0] * x[0] + eta[1] * x[1]) / eps) * zeta(i);
    });
    const double num = u.dot(op.stiffness * u).real();
    const double den = u.dot(g * u).real();
    if (!(den > 0)) throw InputError("empty_support", "bump support holds no free dofs");
    out.samples.push_back({eps, num / den});
    out.errors.push_back(std::abs(num / den - out.lh_value));
  }
  for (size_t k = 0; k + 1 < out.errors.size(); ++k)
    out.error_ratios.push_back(out.errors[k + 1] > 0 ? out.errors[k] / out.errors[k + 1]
                                                     : std::numeric_limits<double>::infinity());
  return out;
}

}  // namespace parsys
