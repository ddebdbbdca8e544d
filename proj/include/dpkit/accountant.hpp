// Copyright 2026 The dpkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism:
// per-order divergences, additive composition over steps, conversion to
// (epsilon, delta), and the two inverse solves (noise multiplier, step
// budget) used for run planning.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpkit {

struct MechanismParams {
  double sigma = 1.0;   // noise multiplier, > 0
  double q = 1.0;       // Poisson sampling probability, in (0, 1]
  long long steps = 0;  // composed step count, >= 0
  double delta = 1e-6;  // in (0, 1)

  void validate() const {
    if (!(sigma > 0.0)) throw std::domain_error("sigma must be > 0");
    if (!(q > 0.0) || q > 1.0) throw std::domain_error("q must be in (0, 1]");
    if (steps < 0) throw std::domain_error("steps must be >= 0");
    if (!(delta > 0.0) || !(delta < 1.0))
      throw std::domain_error("delta must be in (0, 1)");
  }
};

struct RdpPoint {
  double alpha;    // Renyi order, > 1
  double eps_rdp;  // per-step RDP at this order, >= 0
};

struct RdpCurve {
  std::vector<RdpPoint> points;        // strictly increasing alpha
  std::vector<std::string> warnings;   // orders dropped during evaluation
};

struct PrivacySpec {
  double epsilon = 0.0;
  double delta = 0.0;
  double argmin_alpha = 0.0;  // order attaining the minimum, for diagnostics
};

// How composed RDP is turned into (epsilon, delta).
//   kHypothesisTest: eps = S*g_a - (log(delta) + log(a))/(a-1) + log((a-1)/a),
//     the Balle et al. bound used by common accountant libraries. Default;
//     this is the rule that reproduces published (sigma, S, eps) tables.
//   kClassicRenyi:   eps = S*g_a + log(1/delta)/(a-1), the original
//     Mironov conversion.
enum class RdpToDpRule { kHypothesisTest, kClassicRenyi };

namespace detail {

// --- stable log-space helpers -----------------------------------------------

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_binomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log((1-q) + q * exp(t)) without overflow for large t.
inline double log_mix(double q, double t) {
  if (q >= 1.0) return t;
  if (q <= 0.0) return 0.0;
  return log_add(std::log1p(-q), std::log(q) + t);
}

// --- adaptive Gauss-Kronrod quadrature ---------------------------------------

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule
// (QUADPACK dqk15 constants).
inline constexpr double kKronrodX[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0};
inline constexpr double kKronrodW[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
inline constexpr double kGaussW[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469};

struct QuadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
void gauss_kronrod_15(const F& f, double a, double b, double& kronrod,
                      double& gauss) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kKronrodX[i]);
    fv[14 - i] = f(c + h * kKronrodX[i]);
  }
  fv[7] = f(c);
  kronrod = kKronrodW[7] * fv[7];
  for (int i = 0; i < 7; ++i) kronrod += kKronrodW[i] * (fv[i] + fv[14 - i]);
  kronrod *= h;
  // Gauss nodes are the odd-indexed Kronrod abscissae plus the midpoint.
  gauss = kGaussW[3] * fv[7];
  for (int i = 0; i < 3; ++i)
    gauss += kGaussW[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);
  gauss *= h;
}

struct QuadBudget {
  double rel_target = 1e-8;
  double abs_floor = 1e-14;
  int max_depth = 40;
  long long max_intervals = 200000;
};

template <typename F>
double adaptive_kronrod(const F& f, double a, double b, const QuadBudget& bud,
                        long long& intervals, int depth = 0) {
  double k15 = 0.0, g7 = 0.0;
  gauss_kronrod_15(f, a, b, k15, g7);
  const double err = std::abs(k15 - g7);
  if (err <= std::max(bud.abs_floor, bud.rel_target * std::abs(k15)))
    return k15;
  if (depth >= bud.max_depth || ++intervals > bud.max_intervals)
    throw QuadError("quadrature failed to converge within refinement budget");
  const double c = 0.5 * (a + b);
  return adaptive_kronrod(f, a, c, bud, intervals, depth + 1) +
         adaptive_kronrod(f, c, b, bud, intervals, depth + 1);
}

// Maximize a unimodal function by golden-section search.
template <typename F>
double golden_max(const F& f, double lo, double hi) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && (b - a) > 1e-12 * (1.0 + std::abs(a)); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// RDP of the plain (q = 1) Gaussian mechanism: alpha / (2 sigma^2).
inline double rdp_gaussian(double alpha, double sigma) {
  if (!(alpha > 1.0)) throw std::domain_error("alpha must be > 1");
  if (!(sigma > 0.0)) throw std::domain_error("sigma must be > 0");
  return alpha / (2.0 * sigma * sigma);
}

// Integer-order RDP of the Poisson-subsampled Gaussian mechanism via the
// binomial expansion
//   g_a = log( sum_{k=0..a} C(a,k) (1-q)^(a-k) q^k e^{k(k-1)/(2 sigma^2)} )
//         / (a - 1),
// evaluated with log-sum-exp.
inline double rdp_subsampled_gaussian_int(long long alpha, double sigma,
                                          double q) {
  if (alpha < 2) throw std::domain_error("integer alpha must be >= 2");
  if (!(sigma > 0.0)) throw std::domain_error("sigma must be > 0");
  if (q < 0.0 || q > 1.0) throw std::domain_error("q must be in [0, 1]");
  if (q == 0.0) return 0.0;

  const double a = static_cast<double>(alpha);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double log_sum = -std::numeric_limits<double>::infinity();
  for (long long k = 0; k <= alpha; ++k) {
    if (q >= 1.0 && k != alpha) continue;  // only the k = a term survives
    const double kd = static_cast<double>(k);
    double term = detail::log_binomial(a, kd) + kd * (kd - 1.0) * inv2s2;
    if (k > 0) term += kd * std::log(q);
    if (k < alpha) term += (a - kd) * std::log1p(-q);
    log_sum = detail::log_add(log_sum, term);
  }
  const double g = log_sum / (a - 1.0);
  if (!std::isfinite(g))
    throw std::overflow_error(
        "subsampled-Gaussian RDP overflowed; sigma too small for this alpha");
  return g;
}

namespace detail {

// log|expm1(y)| without overflow or cancellation.
inline double log_abs_expm1(double y) {
  if (y == 0.0) return -std::numeric_limits<double>::infinity();
  if (y > 0.0) return y + std::log1p(-std::exp(-y));
  return std::log(-std::expm1(y));
}

}  // namespace detail

// Real-order RDP via adaptive quadrature of
//   D_a( (1-q) N(0,s^2) + q N(1,s^2) || N(0,s^2) )
//     = log( E_{x~N(0,s^2)} [ ((1-q) + q e^{(2x-1)/(2 s^2)})^a ] ) / (a-1).
// The log-domain integrand has up to two humps: the base Gaussian peak near
// x = 0 and the subsampling hump near x = alpha. Both are located, the
// integration window is expanded until the integrand falls 60 nats below the
// taller one, and the pieces are integrated normalized by the peak value.
// When the integral is barely above 1 the excess over the base measure is
// integrated instead (expm1/log1p form) to preserve relative precision.
inline double rdp_subsampled_gaussian_real(
    double alpha, double sigma, double q,
    const detail::QuadBudget& budget = detail::QuadBudget{}) {
  if (!(alpha > 1.0)) throw std::domain_error("alpha must be > 1");
  if (!(sigma > 0.0)) throw std::domain_error("sigma must be > 0");
  if (q < 0.0 || q > 1.0) throw std::domain_error("q must be in [0, 1]");
  if (q == 0.0) return 0.0;

  const double s2 = sigma * sigma;
  const double log_norm = -std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  const auto log_mix_at = [&](double x) {
    return detail::log_mix(q, (2.0 * x - 1.0) / (2.0 * s2));
  };

  const double step = std::max(0.5 * sigma, 0.25);
  const double far_right = alpha + 12.0 * sigma + 1.0;
  const auto expand = [&](const auto& logf, double left_seed,
                          double right_seed, double cutoff, double& lo,
                          double& hi) {
    lo = left_seed - step;
    hi = right_seed + step;
    while (logf(lo) > cutoff) lo -= step;
    while (logf(hi) > cutoff) hi += step;
  };

  long long intervals = 0;
  const auto integrate = [&](const auto& f, std::initializer_list<double> cuts)
      -> double {
    double total = 0.0;
    double prev = *cuts.begin();
    for (double c : cuts) {
      if (c > prev) total += detail::adaptive_kronrod(f, prev, c, budget,
                                                      intervals);
      prev = std::max(prev, c);
    }
    return total;
  };

  // Full integrand pass.
  const auto h = [&](double x) {
    return log_norm - x * x / (2.0 * s2) + alpha * log_mix_at(x);
  };
  const double c1 = detail::golden_max(h, -sigma - 1.0, 0.5);
  const double c2 = detail::golden_max(h, 0.5, far_right);
  const double h_max = std::max(h(c1), h(c2));
  double lo, hi;
  expand(h, std::min(c1, c2), std::max(c1, c2), h_max - 60.0, lo, hi);
  const auto f_full = [&](double x) { return std::exp(h(x) - h_max); };
  const double integral =
      integrate(f_full, {lo, c1, 0.5 * (c1 + c2), c2, hi});
  double log_i = h_max + std::log(integral);

  if (log_i < 0.1) {
    // Excess form: I - 1 = int N(x; 0, s^2) expm1(a * log_mix(x)) dx. The
    // negative dip sits left of the sign change at x = 1/2, the positive
    // hump to its right (near max(1, alpha)).
    const auto le = [&](double x) {
      return log_norm - x * x / (2.0 * s2) +
             detail::log_abs_expm1(alpha * log_mix_at(x));
    };
    const double l1 = detail::golden_max(le, -sigma - 1.0, 0.5 - 1e-9);
    const double l2 = detail::golden_max(le, 0.5 + 1e-9, far_right);
    const double le_max = std::max(le(l1), le(l2));
    expand(le, std::min(l1, l2), std::max(l1, l2), le_max - 60.0, lo, hi);
    const auto f_excess = [&](double x) {
      const double y = alpha * log_mix_at(x);
      if (y == 0.0) return 0.0;
      const double v = std::exp(le(x) - le_max);
      return y > 0.0 ? v : -v;
    };
    const double j =
        integrate(f_excess, {lo, l1, 0.5, l2, hi}) * std::exp(le_max);
    log_i = std::log1p(j);
  }

  const double g = log_i / (alpha - 1.0);
  if (!std::isfinite(g))
    throw std::overflow_error("subsampled-Gaussian RDP overflowed");
  return std::max(g, 0.0);
}

// Default order grid: quarter steps through the small orders where
// subsampled mechanisms minimize, integers to 64, then two coarse tail
// points.
inline std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 15; ++i) grid.push_back(1.25 + 0.25 * i);  // 1.25..5
  for (int a = 6; a <= 64; ++a) grid.push_back(static_cast<double>(a));
  grid.push_back(128.0);
  grid.push_back(256.0);
  return grid;
}

inline bool is_integer_order(double alpha) {
  return std::abs(alpha - std::nearbyint(alpha)) < 1e-9 && alpha >= 2.0;
}

// Evaluates one RDP point per grid order, preferring the integer closed form
// where it applies. Orders that fail to evaluate are dropped with a warning;
// it is an error for every order to fail.
inline RdpCurve build_curve(double sigma, double q,
                            const std::vector<double>& alpha_grid) {
  if (!(sigma > 0.0)) throw std::domain_error("sigma must be > 0");
  if (q < 0.0 || q > 1.0) throw std::domain_error("q must be in [0, 1]");
  if (alpha_grid.empty()) throw std::invalid_argument("empty alpha grid");

  std::vector<double> grid = alpha_grid;
  std::sort(grid.begin(), grid.end());

  RdpCurve curve;
  for (double alpha : grid) {
    if (!(alpha > 1.0)) {
      curve.warnings.push_back("dropped alpha <= 1: " + std::to_string(alpha));
      continue;
    }
    try {
      const double g =
          is_integer_order(alpha)
              ? rdp_subsampled_gaussian_int(
                    static_cast<long long>(std::llround(alpha)), sigma, q)
              : rdp_subsampled_gaussian_real(alpha, sigma, q);
      curve.points.push_back({alpha, g});
    } catch (const std::exception& e) {
      curve.warnings.push_back("alpha " + std::to_string(alpha) + ": " +
                               e.what());
    }
  }
  if (curve.points.empty())
    throw std::runtime_error("no RDP order could be evaluated");
  return curve;
}

inline RdpCurve build_curve(double sigma, double q) {
  return build_curve(sigma, q, default_alpha_grid());
}

// Composes the per-step curve over `steps` and converts to (epsilon, delta),
// minimizing over grid orders.
inline PrivacySpec to_epsilon(const RdpCurve& curve, long long steps,
                              double delta,
                              RdpToDpRule rule = RdpToDpRule::kHypothesisTest) {
  if (!(delta > 0.0) || !(delta < 1.0))
    throw std::domain_error("delta must be in (0, 1)");
  if (steps < 0) throw std::domain_error("steps must be >= 0");
  if (curve.points.empty()) throw std::invalid_argument("empty RDP curve");

  PrivacySpec best;
  best.epsilon = std::numeric_limits<double>::infinity();
  best.delta = delta;
  for (const RdpPoint& p : curve.points) {
    const double composed = static_cast<double>(steps) * p.eps_rdp;
    double eps;
    if (rule == RdpToDpRule::kClassicRenyi) {
      eps = composed - std::log(delta) / (p.alpha - 1.0);
    } else {
      eps = composed - (std::log(delta) + std::log(p.alpha)) / (p.alpha - 1.0) +
            std::log1p(-1.0 / p.alpha);
    }
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.argmin_alpha = p.alpha;
    }
  }
  best.epsilon = std::max(best.epsilon, 0.0);
  return best;
}

struct AccountantConfig {
  std::vector<double> alpha_grid = default_alpha_grid();
  RdpToDpRule rule = RdpToDpRule::kHypothesisTest;
  double sigma_min = 1e-3;
  double sigma_max = 1e3;
  double sigma_rel_tol = 1e-3;
  long long max_steps = 100000000;  // solve_steps cap
};

inline PrivacySpec compose_epsilon(const MechanismParams& mech,
                                   const AccountantConfig& cfg = {}) {
  mech.validate();
  return to_epsilon(build_curve(mech.sigma, mech.q, cfg.alpha_grid), mech.steps,
                    mech.delta, cfg.rule);
}

// Smallest sigma on the bracket whose epsilon is at most `target_eps`.
// Bisection is justified by epsilon being strictly decreasing in sigma.
inline double solve_sigma(double target_eps, double q, long long steps,
                          double delta, const AccountantConfig& cfg = {}) {
  if (!(target_eps > 0.0)) throw std::domain_error("target epsilon must be > 0");
  const auto eps_at = [&](double sigma) {
    return to_epsilon(build_curve(sigma, q, cfg.alpha_grid), steps, delta,
                      cfg.rule)
        .epsilon;
  };
  if (eps_at(cfg.sigma_max) > target_eps)
    throw std::runtime_error("solve_sigma: target unattainable at sigma_max");
  if (eps_at(cfg.sigma_min) <= target_eps) return cfg.sigma_min;

  double lo = cfg.sigma_min, hi = cfg.sigma_max;
  while ((hi - lo) > cfg.sigma_rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) > target_eps) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

struct StepsResult {
  long long steps = 0;
  bool capped = false;  // hit the configured max without exceeding target
};

// Largest step count whose epsilon stays at or below `target_eps`; epsilon is
// monotone nondecreasing in S, so doubling plus binary search applies. The
// curve is built once and re-composed per candidate S.
inline StepsResult solve_steps(double target_eps, double q, double sigma,
                               double delta, const AccountantConfig& cfg = {}) {
  if (!(target_eps > 0.0)) throw std::domain_error("target epsilon must be > 0");
  const RdpCurve curve = build_curve(sigma, q, cfg.alpha_grid);
  const auto eps_at = [&](long long s) {
    return to_epsilon(curve, s, delta, cfg.rule).epsilon;
  };
  if (eps_at(1) > target_eps) return {0, false};
  if (eps_at(cfg.max_steps) <= target_eps) return {cfg.max_steps, true};

  long long lo = 1, hi = 2;
  while (eps_at(hi) <= target_eps) {
    lo = hi;
    hi = std::min(hi * 2, cfg.max_steps);
  }
  while (hi - lo > 1) {
    const long long mid = lo + (hi - lo) / 2;
    if (eps_at(mid) <= target_eps) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, false};
}

}  // namespace dpkit
