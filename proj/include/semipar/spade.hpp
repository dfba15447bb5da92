#ifndef SEMIPAR_SPADE_HPP
#define SEMIPAR_SPADE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "semipar/direct_imaging.hpp"
#include "semipar/error.hpp"
#include "semipar/estimand.hpp"
#include "semipar/linalg.hpp"
#include "semipar/measures.hpp"
#include "semipar/orthopoly.hpp"

namespace semipar {

/// theta~_2j(q) = [q >= j] 4^j q! / (tau (q-j)!) for the Gaussian PSF
/// (Hermite-Gaussian modes); a degree-j falling factorial in q.
inline double gaussian_influence(int j, int q, double tau) {
  detail::require(j >= 0 && q >= 0, Errc::invalid_argument, "j and q must be >= 0");
  if (q < j) return 0.0;
  double value = 1.0 / tau;
  for (int i = 0; i < j; ++i) value *= 4.0 * static_cast<double>(q - i);
  if (!std::isfinite(value)) {
    throw Error(Errc::overflow, "Gaussian influence overflows at j = " + std::to_string(j) +
                                    ", q = " + std::to_string(q));
  }
  return value;
}

/// theta~_2j(q) = [q >= j] (2j+1)!! (2j-1)!! binom(q+j, 2j) / tau for the
/// bandlimited PSF (Legendre modes), i.e. (2j+1)!!/tau * P_q^(j)(1).
inline double legendre_influence(int j, int q, double tau) {
  detail::require(j >= 0 && q >= 0, Errc::invalid_argument, "j and q must be >= 0");
  if (q < j) return 0.0;
  return double_factorial_real(2 * j + 1) * legendre_derivative_at_one(q, j) / tau;
}

/// Kernel-dispatched theta~_2j(q).
inline double mode_influence(const PointSpreadFunction& psf, int j, int q) {
  return psf.kind() == PsfKind::gaussian ? gaussian_influence(j, q, psf.tau())
                                         : legendre_influence(j, q, psf.tau());
}

/// The SPADE mode kernel with its influence table.
class SpadeKernel {
 public:
  explicit SpadeKernel(PointSpreadFunction psf) : psf_(psf) {}

  const PointSpreadFunction& psf() const { return psf_; }
  double operator()(int q, double y) const { return mode_intensity(psf_, q, y); }
  double influence(int j, int q) const { return mode_influence(psf_, j, q); }

 private:
  PointSpreadFunction psf_;
};

namespace detail {

inline void require_even(const EstimandSpec& spec) {
  detail::require(spec.is_even(), Errc::invalid_argument,
                  "SPADE estimands must be supported on even moments");
}

}  // namespace detail

/// beta~(q) = sum_j u_2j theta~_2j(q).
inline double influence_spade(const PointSpreadFunction& psf, const EstimandSpec& spec, int q) {
  double acc = 0.0;
  for (std::size_t j2 = 0; j2 <= spec.highest_index(); j2 += 2) {
    const double w = spec.weight(j2);
    if (w != 0.0) acc += w * mode_influence(psf, static_cast<int>(j2 / 2), q);
  }
  return acc;
}

/// Upper-triangular C with H(q|y) = sum_j C_qj y^(2j), truncated at s x s.
/// Gaussian: C_qj = [j >= q] tau (-1)^(j-q) / (4^j q! (j-q)!).
/// Bandlimited: coefficients of tau (2q+1) j_q(y)^2 from the ascending series.
inline TriangularMatrix c_matrix_spade(const PointSpreadFunction& psf, std::size_t s) {
  detail::require(s >= 1, Errc::invalid_argument, "truncation s must be >= 1");
  const auto n = static_cast<Eigen::Index>(s);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  if (psf.kind() == PsfKind::gaussian) {
    for (Eigen::Index q = 0; q < n; ++q) {
      // tau / (4^q q!) on the diagonal, then recurrence along the row
      double v = psf.tau();
      for (Eigen::Index i = 1; i <= q; ++i) v /= 4.0 * static_cast<double>(i);
      c(q, q) = v;
      for (Eigen::Index j = q + 1; j < n; ++j) {
        v *= -1.0 / (4.0 * static_cast<double>(j - q));
        c(q, j) = v;
      }
    }
  } else {
    for (Eigen::Index q = 0; q < n; ++q) {
      const Eigen::Index terms = n - q;
      std::vector<double> a(static_cast<std::size_t>(terms));
      a[0] = 1.0 / double_factorial_real(static_cast<int>(2 * q + 1));
      for (Eigen::Index k = 1; k < terms; ++k) {
        a[static_cast<std::size_t>(k)] = a[static_cast<std::size_t>(k - 1)] * -0.5 /
                                         (static_cast<double>(k) * (2.0 * q + 2.0 * k + 1.0));
      }
      for (Eigen::Index m = 0; m < terms; ++m) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k <= m; ++k)
          acc += a[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(m - k)];
        c(q, q + m) = psf.tau() * (2.0 * q + 1.0) * acc;
      }
    }
  }
  return TriangularMatrix(std::move(c), Triangle::upper);
}

/// f(q) = sum_j C_qj theta_2j, realized as int H(q|y) dF(y).
inline double f_spade(const ObjectModel& model, const PointSpreadFunction& psf, int q) {
  return image_intensity_spade(model, psf, q);
}

/// Semiparametric CRB in diagonal form, sum_{q <= Q} beta~(q)^2 f(q).
inline double crb_spade(const ObjectModel& model, const PointSpreadFunction& psf,
                        const EstimandSpec& spec, int q_max) {
  detail::require_even(spec);
  check_truncation(model, psf, q_max);
  const std::vector<double> f = image_intensities_spade(model, psf, q_max);
  double acc = 0.0;
  for (int q = 0; q <= q_max; ++q) {
    const double b = influence_spade(psf, spec, q);
    acc += b * b * f[static_cast<std::size_t>(q)];
  }
  return acc;
}

inline double crb_spade(const ObjectModel& model, const PointSpreadFunction& psf,
                        const EstimandSpec& spec) {
  return crb_spade(model, psf, spec, default_truncation(model, psf));
}

/// CRB with theta_0 known: (1/N)[nu_0(beta~_0^2) - beta^2], beta~_0 = N beta~.
inline double constrained_crb_spade(const ObjectModel& model, const PointSpreadFunction& psf,
                                    const EstimandSpec& spec, int q_max) {
  detail::require(spec.weight(0) == 0.0, Errc::invalid_argument,
                  "the constrained bound needs u_0 = 0 (theta_0 is known)");
  detail::require_even(spec);
  check_truncation(model, psf, q_max);
  const double n_photons = expected_photon_number(model, psf);
  const std::vector<double> f = image_intensities_spade(model, psf, q_max);
  double nu1 = 0.0, second = 0.0;
  for (int q = 0; q <= q_max; ++q) {
    const double b0 = n_photons * influence_spade(psf, spec, q);
    nu1 += f[static_cast<std::size_t>(q)];
    second += b0 * b0 * f[static_cast<std::size_t>(q)];
  }
  const double beta = spec.evaluate(object_moments(model, spec.highest_index() + 1));
  return (second / nu1 - beta * beta) / n_photons;
}

inline double constrained_crb_spade(const ObjectModel& model, const PointSpreadFunction& psf,
                                    const EstimandSpec& spec) {
  return constrained_crb_spade(model, psf, spec, default_truncation(model, psf));
}

/// Unbiased efficient estimator sum_q beta~(q) n(q).
inline double estimate_spade(const SpadeSample& sample, const PointSpreadFunction& psf,
                             const EstimandSpec& spec) {
  detail::require_even(spec);
  double acc = 0.0;
  for (std::size_t q = 0; q < sample.counts.size(); ++q) {
    if (sample.counts[q] == 0) continue;
    acc += influence_spade(psf, spec, static_cast<int>(q)) * static_cast<double>(sample.counts[q]);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Truncated-Fisher oracle
// ---------------------------------------------------------------------------

/// Information for the even moments theta_0, theta_2, ..., theta_{2(p-1)}:
/// J_jm = sum_{q <= Q} C_qj C_qm / f(q).
inline Eigen::MatrixXd truncated_fisher_information_spade(const ObjectModel& model,
                                                          const PointSpreadFunction& psf,
                                                          std::size_t p, int q_max) {
  detail::require(p >= 1, Errc::invalid_argument, "p must be >= 1");
  const std::size_t rows = std::max<std::size_t>(p, static_cast<std::size_t>(q_max) + 1);
  const TriangularMatrix c = c_matrix_spade(psf, rows);
  const std::vector<double> f = image_intensities_spade(model, psf, q_max);
  const auto n = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n, n);
  for (int q = 0; q <= q_max; ++q) {
    const auto qi = static_cast<std::size_t>(q);
    if (qi >= p) break;  // C_qj = 0 for j < q
    if (!(f[qi] > 0.0)) {
      throw Error(Errc::singular_information, "f(q) vanishes at q = " + std::to_string(q),
                  qi);
    }
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index m = 0; m < n; ++m)
        info(j, m) += c(qi, static_cast<std::size_t>(j)) * c(qi, static_cast<std::size_t>(m)) / f[qi];
  }
  return info;
}

/// u^T (J^(p))^-1 u over the first p even moments.
inline double truncated_fisher_crb_spade(const ObjectModel& model,
                                         const PointSpreadFunction& psf,
                                         const EstimandSpec& spec, std::size_t p, int q_max) {
  detail::require_even(spec);
  detail::require(2 * (p - 1) >= spec.highest_index() && p >= 1, Errc::invalid_argument,
                  "p must cover the highest even estimand index");
  const Eigen::MatrixXd info = truncated_fisher_information_spade(model, psf, p, q_max);
  Eigen::VectorXd u(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) u(static_cast<Eigen::Index>(j)) = spec.weight(2 * j);
  return inverse_quadratic_form(info, u);
}

/// Constrained CRB from the information submatrix without theta_0.
inline double constrained_crb_spade_schur(const ObjectModel& model,
                                          const PointSpreadFunction& psf,
                                          const EstimandSpec& spec, std::size_t p, int q_max) {
  detail::require(spec.weight(0) == 0.0, Errc::invalid_argument,
                  "the constrained bound needs u_0 = 0");
  detail::require_even(spec);
  detail::require(p >= 2 && 2 * (p - 1) >= spec.highest_index(), Errc::invalid_argument,
                  "p must cover the highest even estimand index");
  const Eigen::MatrixXd info = truncated_fisher_information_spade(model, psf, p, q_max);
  const auto n = static_cast<Eigen::Index>(p - 1);
  Eigen::VectorXd u(n);
  for (Eigen::Index j = 0; j < n; ++j) u(j) = spec.weight(2 * static_cast<std::size_t>(j + 1));
  return inverse_quadratic_form(info.bottomRightCorner(n, n), u);
}

}  // namespace semipar

#endif  // SEMIPAR_SPADE_HPP
