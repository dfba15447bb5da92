#ifndef SEMIPAR_QUADRATURE_HPP
#define SEMIPAR_QUADRATURE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "semipar/error.hpp"

namespace semipar {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// Builds an n-point rule by Newton iteration on P_n, seeded with the
/// Tricomi approximation of the roots.
inline GaussLegendreRule gauss_legendre(std::size_t n) {
  detail::require(n >= 1, Errc::invalid_argument, "gauss_legendre needs n >= 1");
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    long double x = std::cos(std::numbers::pi_v<long double> *
                             (static_cast<long double>(i) + 0.75L) /
                             (static_cast<long double>(n) + 0.5L));
    long double dp = 0.0L;
    for (int iter = 0; iter < 100; ++iter) {
      long double p0 = 1.0L, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const long double p2 =
            ((2.0L * k - 1.0L) * x * p1 - (k - 1.0L) * p0) / static_cast<long double>(k);
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<long double>(n) * (x * p1 - p0) / (x * x - 1.0L);
      const long double step = p1 / dp;
      x -= step;
      if (std::fabs(step) < 1e-19L) break;
    }
    // recompute derivative at the converged root
    long double p0 = 1.0L, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const long double p2 =
          ((2.0L * k - 1.0L) * x * p1 - (k - 1.0L) * p0) / static_cast<long double>(k);
      p0 = p1;
      p1 = p2;
    }
    dp = static_cast<long double>(n) * (x * p1 - p0) / (x * x - 1.0L);
    const long double w = 2.0L / ((1.0L - x * x) * dp * dp);
    rule.nodes[i] = static_cast<double>(-x);
    rule.nodes[n - 1 - i] = static_cast<double>(x);
    rule.weights[i] = static_cast<double>(w);
    rule.weights[n - 1 - i] = static_cast<double>(w);
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

/// The 64-point rule shared by the adaptive integrator.
inline const GaussLegendreRule& gauss_legendre_64() {
  static const GaussLegendreRule rule = gauss_legendre(64);
  return rule;
}

/// Fixed-rule integral of `f` over [a, b].
template <class F>
double integrate_fixed(F&& f, double a, double b, const GaussLegendreRule& rule) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  }
  return half * sum;
}

namespace detail {

template <class F>
double integrate_adaptive_impl(F& f, double a, double b, double whole, double rel_tol,
                               double abs_tol, int depth) {
  const double mid = 0.5 * (a + b);
  const auto& rule = gauss_legendre_64();
  const double left = integrate_fixed(f, a, mid, rule);
  const double right = integrate_fixed(f, mid, b, rule);
  const double refined = left + right;
  const double err = std::fabs(refined - whole);
  if (depth <= 0 || err <= abs_tol || err <= rel_tol * std::fabs(refined)) {
    return refined;
  }
  return integrate_adaptive_impl(f, a, mid, left, rel_tol, 0.5 * abs_tol, depth - 1) +
         integrate_adaptive_impl(f, mid, b, right, rel_tol, 0.5 * abs_tol, depth - 1);
}

}  // namespace detail

/// Adaptive Gauss-Legendre: bisects [a, b] until one 64-point panel agrees
/// with its two halves to `rel_tol` (or `abs_tol`). The absolute tolerance is
/// floored at 1e-14 of the integral of |f| so cancelling integrands terminate.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-14, double abs_tol = 0.0,
                 int max_depth = 18) {
  if (a == b) return 0.0;
  const auto& rule = gauss_legendre_64();
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double whole = 0.0;
  double magnitude = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double v = f(mid + half * rule.nodes[i]);
    whole += rule.weights[i] * v;
    magnitude += rule.weights[i] * std::fabs(v);
  }
  whole *= half;
  magnitude *= std::fabs(half);
  const double floor_tol = std::max(abs_tol, 1e-14 * magnitude);
  return detail::integrate_adaptive_impl(f, a, b, whole, rel_tol, floor_tol, max_depth);
}

}  // namespace semipar

#endif  // SEMIPAR_QUADRATURE_HPP
