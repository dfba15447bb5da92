#ifndef SEMIPAR_LINALG_HPP
#define SEMIPAR_LINALG_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "semipar/error.hpp"

namespace semipar {

enum class Triangle { lower, upper };

/// Square matrix whose entries on the wrong side of the diagonal are exactly
/// zero. Construction validates the pattern; all accessors are read-only.
class TriangularMatrix {
 public:
  TriangularMatrix(Eigen::MatrixXd entries, Triangle orientation)
      : entries_(std::move(entries)), orientation_(orientation) {
    detail::require(entries_.rows() == entries_.cols(), Errc::invalid_argument,
                    "triangular matrix must be square");
    for (Eigen::Index j = 0; j < entries_.rows(); ++j) {
      for (Eigen::Index k = 0; k < entries_.cols(); ++k) {
        if (!in_triangle(j, k)) {
          detail::require(entries_(j, k) == 0.0, Errc::invalid_argument,
                          "nonzero entry outside the triangle at (" + std::to_string(j) +
                              ", " + std::to_string(k) + ")");
        }
      }
    }
  }

  static TriangularMatrix identity(std::size_t s, Triangle orientation = Triangle::lower) {
    const auto n = static_cast<Eigen::Index>(s);
    return TriangularMatrix(Eigen::MatrixXd::Identity(n, n), orientation);
  }

  std::size_t size() const { return static_cast<std::size_t>(entries_.rows()); }
  Triangle orientation() const { return orientation_; }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(std::size_t j, std::size_t k) const {
    return entries_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }

  bool in_triangle(Eigen::Index j, Eigen::Index k) const {
    return orientation_ == Triangle::lower ? k <= j : k >= j;
  }

  /// Leading s x s block (the truncation C^(s)).
  TriangularMatrix leading_block(std::size_t s) const {
    const auto n = static_cast<Eigen::Index>(s);
    detail::require(n <= entries_.rows(), Errc::invalid_argument, "block larger than matrix");
    return TriangularMatrix(entries_.topLeftCorner(n, n), orientation_);
  }

 private:
  Eigen::MatrixXd entries_;
  Triangle orientation_;
};

namespace detail {

// Row-by-row block recursion for a lower-triangular matrix: with
//   C^(s+1) = [C^(s) 0; c^T C_ss],  inverse = [Inv^(s) 0; d^T 1/C_ss],
// d^T = -c^T Inv^(s) / C_ss. Only entries inside the triangle are written.
inline Eigen::MatrixXd invert_lower_recursive(const Eigen::MatrixXd& c) {
  const Eigen::Index n = c.rows();
  // extended-precision working copy, rounded once at the end
  using Wide = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const Wide cw = c.cast<long double>();
  Wide inv = Wide::Zero(n, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const long double pivot = cw(s, s);
    detail::require(pivot != 0.0L, Errc::singular_diagonal,
                    "zero diagonal entry at index " + std::to_string(s),
                    static_cast<std::size_t>(s));
    for (Eigen::Index k = 0; k < s; ++k) {
      // (c^T Inv^(s))_k = sum_{l=k}^{s-1} C_{s,l} Inv_{l,k}
      long double acc = 0.0L;
      for (Eigen::Index l = k; l < s; ++l) acc += cw(s, l) * inv(l, k);
      inv(s, k) = -acc / pivot;
    }
    inv(s, s) = 1.0L / pivot;
  }
  return inv.cast<double>();
}

}  // namespace detail

/// Inverse by the leading-block recursion, starting from 1/C_00. The result
/// keeps the orientation and has exact zeros outside the triangle. Because
/// row s only uses rows < s, the leading block of the result is the inverse
/// of the leading block of the input at every truncation.
inline TriangularMatrix invert_triangular(const TriangularMatrix& m) {
  if (m.orientation() == Triangle::lower) {
    return TriangularMatrix(detail::invert_lower_recursive(m.entries()), Triangle::lower);
  }
  // Upper-triangular: (U^-1)^T = (U^T)^-1 and U^T is lower.
  Eigen::MatrixXd lower = m.entries().transpose();
  Eigen::MatrixXd inv = detail::invert_lower_recursive(lower).transpose();
  return TriangularMatrix(std::move(inv), Triangle::upper);
}

/// Cholesky factor L (lower, M = L L^T) with a relative pivot threshold:
/// a pivot below rel_tol * M_kk is reported as NotPositiveDefinite.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& m, double rel_tol = 1e-13) {
  detail::require(m.rows() == m.cols(), Errc::invalid_argument, "Cholesky needs a square matrix");
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > rel_tol * std::fabs(m(j, j))) || !std::isfinite(d)) {
      throw Error(Errc::not_positive_definite,
                  "pivot " + std::to_string(j) + " is not positive", static_cast<std::size_t>(j));
    }
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double acc = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / l(j, j);
    }
  }
  return l;
}

/// s x s matrix with constant anti-diagonals, M_jk = theta_{j+k}.
class HankelMatrix {
 public:
  HankelMatrix(std::vector<double> sequence, std::size_t s)
      : sequence_(std::move(sequence)), size_(s) {
    detail::require(s == 0 || sequence_.size() >= 2 * s - 1, Errc::insufficient_moments,
                    "Hankel matrix of size " + std::to_string(s) + " needs " +
                        std::to_string(2 * s - 1) + " moments");
    sequence_.resize(s == 0 ? 0 : 2 * s - 1);
  }

  std::size_t size() const { return size_; }
  double operator()(std::size_t j, std::size_t k) const { return sequence_[j + k]; }
  double trace() const {
    double t = 0.0;
    for (std::size_t j = 0; j < size_; ++j) t += sequence_[2 * j];
    return t;
  }

  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(size_);
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) m(j, k) = sequence_[static_cast<std::size_t>(j + k)];
    return m;
  }

 private:
  std::vector<double> sequence_;
  std::size_t size_;
};

inline HankelMatrix hankel_from_moments(std::span<const double> theta, std::size_t s) {
  return HankelMatrix(std::vector<double>(theta.begin(), theta.end()), s);
}

enum class MomentClass { interior, boundary, invalid };

struct MomentValidity {
  MomentClass kind = MomentClass::interior;
  /// rank of M^(s) for s = 1..s_max
  std::vector<std::size_t> rank_profile;
  /// detected support size r when kind == boundary
  std::size_t support_size = 0;
};

/// Numerical rank of a Hankel matrix: eigenvalues above rel_tol * trace.
inline std::size_t hankel_rank(const HankelMatrix& m, double rel_tol = 1e-10) {
  if (m.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.dense(), Eigen::EigenvaluesOnly);
  const double threshold = rel_tol * std::fabs(m.trace());
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    if (solver.eigenvalues()(i) > threshold) ++rank;
  }
  return rank;
}

/// Classifies a moment sequence by the Hankel matrices M^(1..s_max):
/// interior if all are positive definite, boundary if the ranks saturate at
/// some r < s, invalid if any has an eigenvalue below -rel_tol * trace.
inline MomentValidity moment_validity(std::span<const double> theta, std::size_t s_max,
                                      double rel_tol = 1e-10) {
  detail::require(s_max >= 1, Errc::invalid_argument, "s_max must be >= 1");
  detail::require(theta.size() >= 2 * s_max - 1, Errc::insufficient_moments,
                  "moment_validity needs 2*s_max-1 moments");
  MomentValidity result;
  bool all_full = true;
  for (std::size_t s = 1; s <= s_max; ++s) {
    const HankelMatrix m = hankel_from_moments(theta, s);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.dense(), Eigen::EigenvaluesOnly);
    const double scale = std::fabs(m.trace());
    const auto& eig = solver.eigenvalues();
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
      if (eig(i) < -rel_tol * scale || (scale == 0.0 && eig(i) < 0.0)) {
        result.kind = MomentClass::invalid;
      }
      if (eig(i) > rel_tol * scale) ++rank;
    }
    result.rank_profile.push_back(rank);
    if (rank < s) all_full = false;
  }
  if (result.kind == MomentClass::invalid) return result;
  if (all_full) {
    result.kind = MomentClass::interior;
  } else {
    result.kind = MomentClass::boundary;
    result.support_size = result.rank_profile.back();
  }
  return result;
}

}  // namespace semipar

#endif  // SEMIPAR_LINALG_HPP
