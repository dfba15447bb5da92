#ifndef SEMIPAR_MONTECARLO_HPP
#define SEMIPAR_MONTECARLO_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "semipar/direct_imaging.hpp"
#include "semipar/error.hpp"
#include "semipar/estimand.hpp"
#include "semipar/measures.hpp"
#include "semipar/quadrature.hpp"
#include "semipar/random.hpp"
#include "semipar/spade.hpp"

namespace semipar {

enum class Measurement { direct, spade };

inline const char* to_string(Measurement m) {
  return m == Measurement::direct ? "direct" : "spade";
}

struct TrialConfig {
  ObjectModel model;
  PointSpreadFunction psf;
  Measurement measurement = Measurement::direct;
  EstimandSpec spec;
  std::size_t trials = 0;
  std::uint64_t master_seed = 0;
  std::optional<int> truncation;  // SPADE Q; default_truncation() if unset
};

struct TrialReport {
  std::size_t trials = 0;
  double beta = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // Bessel-corrected
  double standard_error = 0.0;
  double crb = 0.0;
  double variance_to_crb = 0.0;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> seeds;

  bool operator==(const TrialReport&) const = default;
};

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Two-pass mean and unbiased variance, summed in index order.
inline SampleMoments sample_moments(std::span<const double> values) {
  detail::require(values.size() >= 2, Errc::invalid_argument, "need at least two values");
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0, comp = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
    comp += v - mean;
  }
  return {mean, (ss - comp * comp / n) / (n - 1.0)};
}

inline unsigned hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

namespace detail {

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
// handled exactly once; the exception of the lowest failing index is rethrown.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// One estimate per trial with seeds derive_seed(master_seed, i); the report
/// depends only on the configuration, never on the thread count.
inline TrialReport run_trials(const TrialConfig& config, unsigned threads = hardware_threads()) {
  detail::require(config.trials >= 2, Errc::invalid_argument, "trials must be >= 2");
  const auto& model = config.model;
  const auto& psf = config.psf;
  const auto& spec = config.spec;

  TrialReport report;
  report.trials = config.trials;
  report.master_seed = config.master_seed;
  report.beta = spec.evaluate(object_moments(model, spec.highest_index() + 1));

  int q_max = 0;
  if (config.measurement == Measurement::direct) {
    report.crb = crb_direct(model, psf, spec);
  } else {
    q_max = config.truncation.value_or(default_truncation(model, psf));
    report.crb = crb_spade(model, psf, spec, q_max);
  }

  report.seeds.resize(config.trials);
  for (std::size_t i = 0; i < config.trials; ++i) report.seeds[i] = derive_seed(config.master_seed, i);

  std::vector<double> estimates(config.trials, 0.0);
  detail::parallel_for(config.trials, threads, [&](std::size_t i) {
    if (config.measurement == Measurement::direct) {
      estimates[i] = estimate_direct(sample_direct(model, psf, report.seeds[i]), psf, spec);
    } else {
      estimates[i] = estimate_spade(sample_spade(model, psf, q_max, report.seeds[i]), psf, spec);
    }
  });

  const SampleMoments m = sample_moments(estimates);
  report.mean = m.mean;
  report.variance = m.variance;
  report.standard_error = std::sqrt(m.variance / static_cast<double>(config.trials));
  report.variance_to_crb = report.crb > 0.0 ? m.variance / report.crb : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Linear statistics of the photon positions
// ---------------------------------------------------------------------------

struct LinearStatisticCheck {
  std::size_t trials = 0;
  double mean = 0.0;           // of sum_l h(X_l)
  double variance = 0.0;
  double expected_mean = 0.0;  // nu(h)
  double expected_variance = 0.0;  // nu(h^2)
};

/// Empirical vs. Poisson-process moments of h_check = sum_l h(X_l) under
/// direct imaging, with nu(g) = int g(x) f(x) dx by quadrature.
template <class H>
LinearStatisticCheck linear_statistic_check(const ObjectModel& model,
                                            const PointSpreadFunction& psf, H&& h,
                                            std::size_t trials, std::uint64_t master_seed,
                                            unsigned threads = hardware_threads()) {
  detail::require(trials >= 2, Errc::invalid_argument, "trials must be >= 2");
  std::vector<double> stats(trials, 0.0);
  detail::parallel_for(trials, threads, [&](std::size_t i) {
    const DirectSample s = sample_direct(model, psf, derive_seed(master_seed, i));
    double acc = 0.0;
    for (double x : s.positions) acc += h(x);
    stats[i] = acc;
  });
  const SampleMoments m = sample_moments(stats);
  const double reach = 12.0 + model.support_radius();
  const GaussLegendreRule rule = gauss_legendre(801);
  double nu1 = 0.0, nu2 = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double x = reach * rule.nodes[k];
    const double w = reach * rule.weights[k] * image_intensity_direct(model, psf, x);
    const double hx = h(x);
    nu1 += w * hx;
    nu2 += w * hx * hx;
  }
  return {trials, m.mean, m.variance, nu1, nu2};
}

// ---------------------------------------------------------------------------
// Method comparison over the flat-top family
// ---------------------------------------------------------------------------

struct ComparisonRow {
  double delta = 0.0;
  double crb_direct = 0.0;
  double crb_spade = 0.0;
  double ratio = 0.0;
};

/// Both semiparametric CRBs for flat-top objects of mass theta0 and width
/// delta, one row per grid point.
inline std::vector<ComparisonRow> compare_methods(double theta0, const PointSpreadFunction& psf,
                                                  const EstimandSpec& spec,
                                                  std::span<const double> delta_grid) {
  std::vector<ComparisonRow> rows;
  rows.reserve(delta_grid.size());
  for (double delta : delta_grid) {
    const ObjectModel model = ObjectModel::flat_top(theta0, delta);
    ComparisonRow row;
    row.delta = delta;
    row.crb_direct = crb_direct(model, psf, spec);
    row.crb_spade = crb_spade(model, psf, spec);
    row.ratio = row.crb_direct / row.crb_spade;
    rows.push_back(row);
  }
  return rows;
}

/// True when SPADE beats direct imaging at every row and the advantage
/// shrinks monotonically as delta grows (rows sorted by delta).
inline bool gap_is_monotone(std::span<const ComparisonRow> rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i].ratio > 1.0)) return false;
    if (i > 0 && rows[i].ratio > rows[i - 1].ratio) return false;
  }
  return true;
}

/// points values log-spaced on [lo, hi], endpoints included.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t points) {
  detail::require(lo > 0.0 && hi > lo, Errc::invalid_argument, "need 0 < lo < hi");
  detail::require(points >= 2, Errc::invalid_argument, "need at least two points");
  std::vector<double> grid(points);
  const double step = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = lo * std::exp(step * static_cast<double>(i));
  grid.back() = hi;
  return grid;
}

// ---------------------------------------------------------------------------
// Truncated-Fisher convergence
// ---------------------------------------------------------------------------

struct ConvergencePoint {
  std::size_t p = 0;
  double crb = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergencePoint> direct;
  std::vector<ConvergencePoint> spade;  // p counts even moments theta_0..theta_2(p-1)
  double crb_direct = 0.0;
  double crb_spade = 0.0;
};

inline bool is_nondecreasing(std::span<const ConvergencePoint> seq, double slack = 0.0) {
  for (std::size_t i = 1; i < seq.size(); ++i)
    if (seq[i].crb < seq[i - 1].crb * (1.0 - slack)) return false;
  return true;
}

/// Truncated-Fisher CRBs for p up to p_max under both measurements, next to
/// the semiparametric bounds they approach from below.
inline ConvergenceReport fisher_convergence_report(const ObjectModel& model,
                                                   const PointSpreadFunction& psf,
                                                   const EstimandSpec& spec, std::size_t p_max) {
  const std::size_t k = spec.highest_index();
  detail::require(p_max >= k + 2, Errc::invalid_argument, "p_max must be >= k + 2");
  ConvergenceReport report;
  report.crb_direct = crb_direct(model, psf, spec);
  for (std::size_t p = k + 1; p <= p_max; ++p)
    report.direct.push_back({p, truncated_fisher_crb_direct(model, psf, spec, p)});
  if (spec.is_even()) {
    const int q_max = default_truncation(model, psf);
    report.crb_spade = crb_spade(model, psf, spec, q_max);
    for (std::size_t p = k / 2 + 1; p <= p_max; ++p)
      report.spade.push_back({p, truncated_fisher_crb_spade(model, psf, spec, p, q_max)});
  }
  return report;
}

}  // namespace semipar

#endif  // SEMIPAR_MONTECARLO_HPP
