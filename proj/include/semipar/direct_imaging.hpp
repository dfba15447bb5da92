#ifndef SEMIPAR_DIRECT_IMAGING_HPP
#define SEMIPAR_DIRECT_IMAGING_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "semipar/error.hpp"
#include "semipar/estimand.hpp"
#include "semipar/linalg.hpp"
#include "semipar/measures.hpp"
#include "semipar/orthopoly.hpp"
#include "semipar/quadrature.hpp"

namespace semipar {

/// Polynomial influence function beta~(x) = sum_m coefficient[m] x^m.
class InfluenceFunction {
 public:
  explicit InfluenceFunction(std::vector<double> coefficients)
      : coefficients_(std::move(coefficients)) {}

  const std::vector<double>& coefficients() const { return coefficients_; }
  std::size_t degree() const { return coefficients_.empty() ? 0 : coefficients_.size() - 1; }

  double operator()(double x) const {
    double acc = 0.0;
    for (std::size_t m = coefficients_.size(); m-- > 0;) acc = acc * x + coefficients_[m];
    return acc;
  }

 private:
  std::vector<double> coefficients_;
};

namespace detail {

inline void require_gaussian_direct(const PointSpreadFunction& psf) {
  if (psf.kind() != PsfKind::gaussian) {
    throw Error(Errc::unsupported_psf,
                "direct imaging needs a PSF intensity with finite moments; the bandlimited "
                "PSF has infinite second and higher moments");
  }
}

}  // namespace detail

/// int H(x) x^l dx = tau (l-1)!! for even l, 0 for odd l.
inline double psf_intensity_moment(const PointSpreadFunction& psf, int l) {
  detail::require_gaussian_direct(psf);
  if (l % 2 == 1) return 0.0;
  return psf.tau() * double_factorial_real(l - 1);
}

/// Moment-transfer matrix C_jk = [j >= k] binom(j, k) int H(x) x^(j-k) dx,
/// truncated at s x s. Lower-triangular with C_jj = tau.
inline TriangularMatrix c_matrix_direct(const PointSpreadFunction& psf, std::size_t s) {
  detail::require_gaussian_direct(psf);
  detail::require(s >= 1, Errc::invalid_argument, "truncation s must be >= 1");
  const auto n = static_cast<Eigen::Index>(s);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k <= j; ++k)
      c(j, k) = binomial(j, k) * psf_intensity_moment(psf, static_cast<int>(j - k));
  return TriangularMatrix(std::move(c), Triangle::lower);
}

/// Image moments phi = C theta, phi_0 .. phi_{count-1}.
inline std::vector<double> image_moments_direct(const ObjectModel& model,
                                                const PointSpreadFunction& psf,
                                                std::size_t count) {
  const TriangularMatrix c = c_matrix_direct(psf, count);
  const std::vector<double> theta = object_moments(model, count);
  std::vector<double> phi(count, 0.0);
  for (std::size_t j = 0; j < count; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k <= j; ++k) acc += c(j, k) * theta[k];
    detail::require(std::isfinite(acc), Errc::insufficient_moments,
                    "image moment " + std::to_string(j) + " is not finite");
    phi[j] = acc;
  }
  return phi;
}

/// beta~(x) = u^T C^-1 phi~(x), with phi~ the monomials.
inline InfluenceFunction influence_direct(const PointSpreadFunction& psf,
                                          const EstimandSpec& spec) {
  const std::size_t s = spec.highest_index() + 1;
  const TriangularMatrix c_inv = invert_triangular(c_matrix_direct(psf, s));
  std::vector<double> coefficients(s, 0.0);
  for (std::size_t m = 0; m < s; ++m) {
    double acc = 0.0;
    for (std::size_t j = m; j < s; ++j) acc += spec.weight(j) * c_inv(j, m);
    coefficients[m] = acc;
  }
  return InfluenceFunction(std::move(coefficients));
}

namespace detail {

// nu(p^2) for a polynomial p against the intensity measure with moments phi.
inline double intensity_norm_squared(const std::vector<double>& coefficients,
                                     const std::vector<double>& phi) {
  double acc = 0.0;
  for (std::size_t m = 0; m < coefficients.size(); ++m)
    for (std::size_t n = 0; n < coefficients.size(); ++n)
      acc += coefficients[m] * coefficients[n] * phi[m + n];
  return acc;
}

}  // namespace detail

/// Semiparametric CRB u^T C^-1 nu(phi~ phi~^T) C^-T u = nu(beta~^2), with the
/// image moments propagated as phi = C theta to degree 2k.
inline double crb_direct(const ObjectModel& model, const PointSpreadFunction& psf,
                         const EstimandSpec& spec) {
  const InfluenceFunction influence = influence_direct(psf, spec);
  const std::vector<double> phi =
      image_moments_direct(model, psf, 2 * spec.highest_index() + 1);
  return detail::intensity_norm_squared(influence.coefficients(), phi);
}

/// The full inverse information C^-1 nu(phi~ phi~^T) C^-T for theta_0..theta_{s-1}.
inline Eigen::MatrixXd inverse_information_direct(const ObjectModel& model,
                                                  const PointSpreadFunction& psf,
                                                  std::size_t s) {
  const TriangularMatrix c_inv = invert_triangular(c_matrix_direct(psf, s));
  const std::vector<double> phi = image_moments_direct(model, psf, 2 * s - 1);
  const auto n = static_cast<Eigen::Index>(s);
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) gram(j, k) = phi[static_cast<std::size_t>(j + k)];
  return c_inv.entries() * gram * c_inv.entries().transpose();
}

/// CRB with theta_0 known: (1/N)[nu_0(beta~_0^2) - beta^2], beta~_0 = N beta~,
/// nu_0 = nu / nu(1).
inline double constrained_crb_direct(const ObjectModel& model, const PointSpreadFunction& psf,
                                     const EstimandSpec& spec) {
  detail::require(spec.weight(0) == 0.0, Errc::invalid_argument,
                  "the constrained bound needs u_0 = 0 (theta_0 is known)");
  const double n_photons = expected_photon_number(model, psf);
  const InfluenceFunction influence = influence_direct(psf, spec);
  std::vector<double> scaled = influence.coefficients();
  for (double& c : scaled) c *= n_photons;
  const std::vector<double> phi =
      image_moments_direct(model, psf, 2 * spec.highest_index() + 1);
  const double normalized_second = detail::intensity_norm_squared(scaled, phi) / phi[0];
  const double beta = spec.evaluate(object_moments(model, spec.highest_index() + 1));
  return (normalized_second - beta * beta) / n_photons;
}

/// Unbiased efficient estimator sum_l beta~(X_l); 0 for an empty sample.
inline double estimate_direct(const DirectSample& sample, const PointSpreadFunction& psf,
                              const EstimandSpec& spec) {
  const InfluenceFunction influence = influence_direct(psf, spec);
  double acc = 0.0;
  for (double x : sample.positions) acc += influence(x);
  return acc;
}

/// Estimator for a normalized object (theta_0 = 1): (1/L) sum_l beta~_0(X_l)
/// with beta~_0 = u^T (C/tau)^-1 phi~. Unbiased conditional on L.
inline double estimate_direct_normalized(const DirectSample& sample,
                                         const PointSpreadFunction& psf,
                                         const EstimandSpec& spec) {
  detail::require(spec.weight(0) == 0.0, Errc::invalid_argument,
                  "the normalized estimator needs u_0 = 0");
  if (sample.positions.empty()) throw Error(Errc::empty_sample, "no photons detected");
  const InfluenceFunction influence = influence_direct(psf, spec);
  double acc = 0.0;
  for (double x : sample.positions) acc += psf.tau() * influence(x);
  return acc / static_cast<double>(sample.positions.size());
}

// ---------------------------------------------------------------------------
// Truncated-Fisher oracle
// ---------------------------------------------------------------------------

/// Fisher information of the p-parameter model f = sum_{j<p} theta_j dS_j,
/// J_jm = int (df/dtheta_j)(df/dtheta_m) / f dx, where for the Gaussian PSF
/// df/dtheta_j = (-1)^j H^(j)(x) / j! = tau He_j(x) phi(x) / j!.
/// Quadrature: 2001 Gauss-Legendre nodes on |x| <= 12 + support radius.
inline Eigen::MatrixXd truncated_fisher_information_direct(const ObjectModel& model,
                                                           const PointSpreadFunction& psf,
                                                           std::size_t p) {
  detail::require_gaussian_direct(psf);
  detail::require(p >= 1, Errc::invalid_argument, "p must be >= 1");
  const double half_width = 12.0 + model.support_radius();
  static const GaussLegendreRule rule = gauss_legendre(2001);
  const auto n = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> derivative(p);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double x = half_width * rule.nodes[i];
    const double f = image_intensity_direct(model, psf, x);
    if (!(f > 0.0)) {
      throw Error(Errc::singular_information,
                  "image intensity vanishes at x = " + std::to_string(x));
    }
    const double h = psf.intensity(x);
    // He_j(x)/j! by h_{n+1} = (x h_n - h_{n-1}) / (n+1)
    double prev = 0.0, cur = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
      derivative[j] = h * cur;
      const double next = (x * cur - prev) / static_cast<double>(j + 1);
      prev = cur;
      cur = next;
    }
    const double w = half_width * rule.weights[i] / f;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index m = 0; m <= j; ++m)
        info(j, m) += w * derivative[static_cast<std::size_t>(j)] *
                      derivative[static_cast<std::size_t>(m)];
  }
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index m = j + 1; m < n; ++m) info(j, m) = info(m, j);
  return info;
}

/// u^T J^-1 u via the Cholesky factor of J. Throws SingularInformation when J
/// is not numerically positive definite.
inline double inverse_quadratic_form(const Eigen::MatrixXd& info, const Eigen::VectorXd& u) {
  Eigen::MatrixXd l;
  try {
    l = cholesky_lower(info, 1e-15);
  } catch (const Error& e) {
    throw Error(Errc::singular_information, e.what(), e.index());
  }
  const Eigen::VectorXd w = l.triangularView<Eigen::Lower>().solve(u);
  return w.squaredNorm();
}

/// CRB of the p-parameter truncated model, u^T (J^(p))^-1 u. Nondecreasing in p
/// and bounded by crb_direct.
inline double truncated_fisher_crb_direct(const ObjectModel& model,
                                          const PointSpreadFunction& psf,
                                          const EstimandSpec& spec, std::size_t p) {
  detail::require(p >= spec.highest_index() + 1, Errc::invalid_argument,
                  "p must exceed the highest estimand index");
  const Eigen::MatrixXd info = truncated_fisher_information_direct(model, psf, p);
  Eigen::VectorXd u(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) u(static_cast<Eigen::Index>(j)) = spec.weight(j);
  return inverse_quadratic_form(info, u);
}

/// Constrained CRB from the information submatrix without theta_0, at
/// truncation p.
inline double constrained_crb_direct_schur(const ObjectModel& model,
                                           const PointSpreadFunction& psf,
                                           const EstimandSpec& spec, std::size_t p) {
  detail::require(spec.weight(0) == 0.0, Errc::invalid_argument,
                  "the constrained bound needs u_0 = 0");
  detail::require(p >= spec.highest_index() + 1 && p >= 2, Errc::invalid_argument,
                  "p must exceed the highest estimand index");
  const Eigen::MatrixXd info = truncated_fisher_information_direct(model, psf, p);
  const auto n = static_cast<Eigen::Index>(p - 1);
  Eigen::VectorXd u(n);
  for (Eigen::Index j = 0; j < n; ++j) u(j) = spec.weight(static_cast<std::size_t>(j + 1));
  return inverse_quadratic_form(info.bottomRightCorner(n, n), u);
}

}  // namespace semipar

#endif  // SEMIPAR_DIRECT_IMAGING_HPP
