#ifndef SEMIPAR_ORTHOPOLY_HPP
#define SEMIPAR_ORTHOPOLY_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "semipar/error.hpp"
#include "semipar/linalg.hpp"

namespace semipar {

// ---------------------------------------------------------------------------
// Combinatorics
// ---------------------------------------------------------------------------

/// m!! in exact integer arithmetic, with (-1)!! = 0!! = 1. Throws Overflow once
/// the product leaves the uint64 range (m >= 34).
inline std::uint64_t double_factorial(int m) {
  detail::require(m >= -1, Errc::invalid_argument, "double factorial needs m >= -1");
  std::uint64_t result = 1;
  for (int k = m; k > 1; k -= 2) {
    const auto factor = static_cast<std::uint64_t>(k);
    if (result > std::numeric_limits<std::uint64_t>::max() / factor) {
      throw Error(Errc::overflow, std::to_string(m) + "!! exceeds 64-bit range");
    }
    result *= factor;
  }
  return result;
}

/// m!! as a floating-point product; usable far beyond the integer range.
inline double double_factorial_real(int m) {
  detail::require(m >= -1, Errc::invalid_argument, "double factorial needs m >= -1");
  double result = 1.0;
  for (int k = m; k > 1; k -= 2) result *= static_cast<double>(k);
  return result;
}

/// binom(n, k); exact in 64-bit integers while the value fits, multiplicative
/// in floating point beyond. 0 when k < 0 or k > n.
inline double binomial(long n, long k) {
  if (k < 0 || k > n || n < 0) return 0.0;
  if (k > n - k) k = n - k;
  std::uint64_t exact = 1;
  long i = 1;
  for (; i <= k; ++i) {
    // exact * (n-k+i) / i with the division applied first where it divides
    const auto den = static_cast<std::uint64_t>(i);
    const std::uint64_t g = std::gcd(exact, den);
    const std::uint64_t factor = static_cast<std::uint64_t>(n - k + i) / (den / g);
    if (exact / g > std::numeric_limits<std::uint64_t>::max() / factor) break;
    exact = exact / g * factor;
  }
  double result = static_cast<double>(exact);
  for (; i <= k; ++i) result = result * static_cast<double>(n - k + i) / static_cast<double>(i);
  return result;
}

// ---------------------------------------------------------------------------
// Legendre polynomials
// ---------------------------------------------------------------------------

/// P_q(k) by the three-term recurrence.
inline double legendre_p(int q, double k) {
  detail::require(q >= 0, Errc::invalid_argument, "Legendre degree must be >= 0");
  if (q == 0) return 1.0;
  double p0 = 1.0, p1 = k;
  for (int n = 2; n <= q; ++n) {
    const double p2 = ((2.0 * n - 1.0) * k * p1 - (n - 1.0) * p0) / n;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

/// j-th derivative of P_q at k = 1: [q >= j] (2j-1)!! binom(q+j, 2j).
inline double legendre_derivative_at_one(int q, int j) {
  detail::require(q >= 0 && j >= 0, Errc::invalid_argument, "q and j must be >= 0");
  if (q < j) return 0.0;
  return double_factorial_real(2 * j - 1) * binomial(q + j, 2 * j);
}

// ---------------------------------------------------------------------------
// Spherical Bessel functions of the first kind
// ---------------------------------------------------------------------------

namespace detail {

// j_q(y) = y^q/(2q+1)!! * sum_k (-y^2/2)^k / (k! (2q+3)(2q+5)...(2q+2k+1))
inline double spherical_bessel_series(int q, double y) {
  double prefactor = 1.0;
  for (int i = 1; i <= q; ++i) prefactor *= y / (2.0 * i + 1.0);
  const double x = -0.5 * y * y;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 500; ++k) {
    term *= x / (k * (2.0 * q + 2.0 * k + 1.0));
    sum += term;
    if (std::fabs(term) < 1e-18 * std::fabs(sum)) break;
  }
  return prefactor * sum;
}

inline bool use_series(int q, double y) { return y <= 1.0 || y < 0.25 * q; }

// Miller downward recurrence j_{n-1} = (2n+1)/y j_n - j_{n+1}, started well
// above max(q_max, y) and normalized against j_0 or j_1, whichever has the
// larger magnitude (j_0 alone loses accuracy near its zeros).
inline std::vector<double> spherical_bessel_downward(int q_max, double y) {
  const int start = std::max(q_max, static_cast<int>(std::ceil(y))) + 40 +
                    static_cast<int>(std::ceil(std::sqrt(40.0 * (q_max + 1))));
  std::vector<double> values(static_cast<std::size_t>(q_max) + 1, 0.0);
  double upper = 0.0;  // j_{n+1}
  double current = 1e-300;  // j_n
  for (int n = start; n >= 1; --n) {
    const double lower = (2.0 * n + 1.0) / y * current - upper;
    upper = current;
    current = lower;
    if (n - 1 <= q_max) values[static_cast<std::size_t>(n - 1)] = current;
    if (n <= q_max) values[static_cast<std::size_t>(n)] = upper;
    if (std::fabs(current) > 1e200) {
      current *= 1e-200;
      upper *= 1e-200;
      for (auto& v : values) v *= 1e-200;
    }
  }
  const double j0 = std::sin(y) / y;
  const double j1 = std::sin(y) / (y * y) - std::cos(y) / y;
  const double scale = (std::fabs(j0) >= std::fabs(j1) || q_max == 0)
                           ? j0 / values[0]
                           : j1 / values[1];
  for (auto& v : values) v *= scale;
  return values;
}

}  // namespace detail

/// j_q(y). Ascending series for y <= 1 or y < q/4, downward recurrence
/// otherwise. j_q(-y) = (-1)^q j_q(y) and j_q(0) = delta_{q0}.
inline double spherical_bessel(int q, double y) {
  detail::require(q >= 0, Errc::invalid_argument, "spherical Bessel order must be >= 0");
  if (y == 0.0) return q == 0 ? 1.0 : 0.0;
  if (y < 0.0) return (q % 2 == 0 ? 1.0 : -1.0) * spherical_bessel(q, -y);
  if (detail::use_series(q, y)) return detail::spherical_bessel_series(q, y);
  return detail::spherical_bessel_downward(q, y)[static_cast<std::size_t>(q)];
}

/// j_0(y), ..., j_{q_max}(y) with the same branch choice per order as
/// spherical_bessel().
inline std::vector<double> spherical_bessel_sequence(int q_max, double y) {
  detail::require(q_max >= 0, Errc::invalid_argument, "q_max must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(q_max) + 1, 0.0);
  if (y == 0.0) {
    out[0] = 1.0;
    return out;
  }
  const double ay = std::fabs(y);
  std::vector<double> recurrence;
  if (!detail::use_series(0, ay)) recurrence = detail::spherical_bessel_downward(q_max, ay);
  for (int q = 0; q <= q_max; ++q) {
    const double v = detail::use_series(q, ay)
                         ? detail::spherical_bessel_series(q, ay)
                         : recurrence[static_cast<std::size_t>(q)];
    out[static_cast<std::size_t>(q)] = (y < 0.0 && q % 2 == 1) ? -v : v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orthonormal polynomials against a moment sequence
// ---------------------------------------------------------------------------

/// Polynomials g_j(y) = sum_k G_jk y^k, orthonormal under the reference
/// measure whose moments are stored alongside.
class PolynomialBasis {
 public:
  PolynomialBasis(TriangularMatrix g, std::vector<double> reference_moments)
      : g_(std::move(g)), reference_(std::move(reference_moments)) {}

  std::size_t degree() const { return g_.size() - 1; }
  const TriangularMatrix& coefficients() const { return g_; }
  const std::vector<double>& reference_moments() const { return reference_; }

  double evaluate(std::size_t j, double y) const {
    double acc = 0.0;
    for (std::size_t k = j + 1; k-- > 0;) acc = acc * y + g_(j, k);
    return acc;
  }

  std::vector<double> evaluate_all(double y) const {
    std::vector<double> out(g_.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = evaluate(j, y);
    return out;
  }

 private:
  TriangularMatrix g_;
  std::vector<double> reference_;
};

/// Moments of the flat probability measure on [-half_width, half_width], the
/// default reference for series reconstruction.
inline std::vector<double> flat_reference_moments(double half_width, std::size_t count) {
  detail::require(half_width > 0.0, Errc::invalid_argument, "half_width must be > 0");
  std::vector<double> m(count, 0.0);
  for (std::size_t j = 0; j < count; j += 2)
    m[j] = std::pow(half_width, static_cast<double>(j)) / static_cast<double>(j + 1);
  return m;
}

/// Orthonormalizes 1, y, ..., y^degree against the reference moments via the
/// Cholesky factor of the Hankel matrix, M = L L^T, G = L^-1.
inline PolynomialBasis gram_schmidt(std::span<const double> reference_moments,
                                    std::size_t degree) {
  const std::size_t s = degree + 1;
  const HankelMatrix hankel = hankel_from_moments(reference_moments, s);
  const Eigen::MatrixXd l = cholesky_lower(hankel.dense(), 1e-12);
  TriangularMatrix g = invert_triangular(TriangularMatrix(l, Triangle::lower));
  return PolynomialBasis(std::move(g), std::vector<double>(reference_moments.begin(),
                                                           reference_moments.begin() +
                                                               static_cast<long>(2 * s - 1)));
}

/// xi = G theta over the first degree+1 moments.
inline std::vector<double> series_coefficients(std::span<const double> theta,
                                               const PolynomialBasis& basis) {
  const std::size_t s = basis.degree() + 1;
  detail::require(theta.size() >= s, Errc::insufficient_moments,
                  "series_coefficients needs degree+1 moments");
  std::vector<double> xi(s, 0.0);
  for (std::size_t j = 0; j < s; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k <= j; ++k) acc += basis.coefficients()(j, k) * theta[k];
    xi[j] = acc;
  }
  return xi;
}

/// theta = G^-1 xi by forward substitution.
inline std::vector<double> moments_from_coefficients(std::span<const double> xi,
                                                     const PolynomialBasis& basis) {
  const std::size_t s = basis.degree() + 1;
  detail::require(xi.size() == s, Errc::invalid_argument, "coefficient length mismatch");
  const auto& g = basis.coefficients();
  std::vector<double> theta(s, 0.0);
  for (std::size_t j = 0; j < s; ++j) {
    double acc = xi[j];
    for (std::size_t k = 0; k < j; ++k) acc -= g(j, k) * theta[k];
    theta[j] = acc / g(j, j);
  }
  return theta;
}

/// Truncated orthogonal-series density dF/dF0(y) = sum_j xi_j g_j(y).
inline double series_density(std::span<const double> xi, const PolynomialBasis& basis,
                             double y) {
  double acc = 0.0;
  for (std::size_t j = 0; j < xi.size() && j <= basis.degree(); ++j) {
    acc += xi[j] * basis.evaluate(j, y);
  }
  return acc;
}

}  // namespace semipar

#endif  // SEMIPAR_ORTHOPOLY_HPP
