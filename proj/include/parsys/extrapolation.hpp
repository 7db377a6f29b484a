#pragma once

// Sneiberg window arithmetic and the two-stage (time, then space) estimate
// of the exponent intervals around r = 2 and q = 2. All interpolation
// arithmetic happens on the reciprocal axes 1/r and 1/q.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "parsys/core.hpp"

namespace parsys {

struct SneibergWindow {
  double theta_center = 0.5;
  double radius = 0.0;
  double inverse_bound = 0.0;
  double beta = 0.0;
  double gamma_op = 0.0;
  double lower = 0.0;  // theta_center - radius, clamped to (0, 1)
  double upper = 0.0;
};

inline SneibergWindow sneiberg_window(double theta, double beta, double gamma_op) {
  if (!(theta > 0.0 && theta < 1.0)) throw InputError("invalid_theta", "theta must lie in (0, 1)");
  if (!(beta > 0.0) || !(gamma_op > 0.0) || !std::isfinite(beta) || !std::isfinite(gamma_op))
    throw InputError("invalid_constant", "beta and gamma must be positive and finite");
  SneibergWindow w;
  w.theta_center = theta;
  w.beta = beta;
  w.gamma_op = gamma_op;
  w.radius = (1.0 / 6.0) * std::min(theta, 1.0 - theta) / (1.0 + 2.0 * beta * gamma_op);
  w.inverse_bound = 8.0 * beta;
  w.lower = std::max(theta - w.radius, 0.0);
  w.upper = std::min(theta + w.radius, 1.0);
  return w;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains_interior(double x) const { return lo < x && x < hi; }
};

struct ProvenanceStep {
  std::string stage;
  std::string axis;
  double anchor = 0.0;  // exponent the window is centred at
  SneibergWindow window;
};

struct ExtrapolationEstimate {
  Interval I_t;
  Interval I_x;
  double lambda = 0.0, gamma = 0.0, M = 0.0, Lambda = 0.0;
  double beta0 = 0.0;
  double gamma0 = 0.0;
  std::optional<double> delta;
  std::vector<ProvenanceStep> provenance;
};

namespace detail {

/// Exponent interval from a window on the reciprocal axis around 1/p.
inline Interval exponent_interval(const SneibergWindow& w) {
  return {1.0 / w.upper, w.lower > 0 ? 1.0 / w.lower : std::numeric_limits<double>::infinity()};
}

}  // namespace detail

/// Two-stage estimate.
///   Stage 1 (time): beta0 = Lions constant, gamma0 = 1 + M + |Lambda|,
///   window at 1/r = 1/2 gives I_t.
///   Stage 2 (space): at each endpoint of I_t and at r = 2, a window on the
///   1/q axis around 1/2 with inverse bound 8 beta0 and the same gamma0; the
///   windows are intersected to give I_x. An optional delta intersects I_x
///   with (2 - delta, 2 + delta).
inline ExtrapolationEstimate estimate_intervals(double lambda, double gamma, double M, double Lambda,
                                                std::optional<double> delta = std::nullopt) {
  if (!(Lambda > lambda)) throw InputError("invalid_shift", "need Lambda > lambda");
  if (!(gamma > 0.0)) throw InputError("invalid_gamma", "need gamma > 0");
  if (!(M >= 0.0)) throw InputError("invalid_norm", "need M >= 0");
  if (delta && !(*delta > 0.0)) throw InputError("invalid_delta", "delta must be positive");
  ExtrapolationEstimate e;
  e.lambda = lambda;
  e.gamma = gamma;
  e.M = M;
  e.Lambda = Lambda;
  e.delta = delta;
  const double mn = std::min(Lambda - lambda, gamma);
  e.beta0 = (mn + M + Lambda) / mn;
  e.gamma0 = 1.0 + M + std::abs(Lambda);

  const SneibergWindow w1 = sneiberg_window(0.5, e.beta0, e.gamma0);
  e.provenance.push_back({"time", "1/r", 2.0, w1});
  e.I_t = detail::exponent_interval(w1);

  Interval ix{0.0, std::numeric_limits<double>::infinity()};
  for (double r : {e.I_t.lo, 2.0, e.I_t.hi}) {
    const SneibergWindow w2 = sneiberg_window(0.5, w1.inverse_bound, e.gamma0);
    e.provenance.push_back({"space at r=" + std::to_string(r), "1/q", 2.0, w2});
    const Interval iv = detail::exponent_interval(w2);
    ix.lo = std::max(ix.lo, iv.lo);
    ix.hi = std::min(ix.hi, iv.hi);
  }
  if (delta) {
    ix.lo = std::max(ix.lo, 2.0 - *delta);
    ix.hi = std::min(ix.hi, 2.0 + *delta);
  }
  e.I_x = ix;
  return e;
}

}  // namespace parsys
