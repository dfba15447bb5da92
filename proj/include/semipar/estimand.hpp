#ifndef SEMIPAR_ESTIMAND_HPP
#define SEMIPAR_ESTIMAND_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "semipar/error.hpp"

namespace semipar {

/// beta = u^T theta for a finitely supported weight vector u.
class EstimandSpec {
 public:
  explicit EstimandSpec(std::vector<double> u) : u_(std::move(u)) {
    for (double w : u_) {
      detail::require(std::isfinite(w), Errc::invalid_argument, "estimand weights must be finite");
    }
    while (!u_.empty() && u_.back() == 0.0) u_.pop_back();
  }

  /// u = e_k, i.e. beta = theta_k.
  static EstimandSpec unit(std::size_t k) {
    std::vector<double> u(k + 1, 0.0);
    u[k] = 1.0;
    return EstimandSpec(std::move(u));
  }

  /// Highest index with a nonzero weight (0 for the zero estimand).
  std::size_t highest_index() const { return u_.empty() ? 0 : u_.size() - 1; }

  double weight(std::size_t j) const { return j < u_.size() ? u_[j] : 0.0; }
  std::span<const double> weights() const { return u_; }

  bool is_even() const {
    for (std::size_t j = 1; j < u_.size(); j += 2)
      if (u_[j] != 0.0) return false;
    return true;
  }

  /// beta for a moment sequence holding at least highest_index()+1 entries.
  double evaluate(std::span<const double> theta) const {
    detail::require(theta.size() >= u_.size(), Errc::insufficient_moments,
                    "not enough moments to evaluate the estimand");
    double beta = 0.0;
    for (std::size_t j = 0; j < u_.size(); ++j) beta += u_[j] * theta[j];
    return beta;
  }

 private:
  std::vector<double> u_;
};

}  // namespace semipar

#endif  // SEMIPAR_ESTIMAND_HPP
