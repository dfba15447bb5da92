#ifndef SEMIPAR_MEASURES_HPP
#define SEMIPAR_MEASURES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "semipar/error.hpp"
#include "semipar/orthopoly.hpp"
#include "semipar/quadrature.hpp"
#include "semipar/random.hpp"

namespace semipar {

// ---------------------------------------------------------------------------
// Point-spread functions
// ---------------------------------------------------------------------------

enum class PsfKind { gaussian, bandlimited };

inline const char* to_string(PsfKind kind) {
  return kind == PsfKind::gaussian ? "gaussian" : "bandlimited";
}

/// Field point-spread function psi with unit norm, and the conversion
/// factor tau (photons per unit source mass). Coordinates are in units of the
/// PSF width.
class PointSpreadFunction {
 public:
  PointSpreadFunction(PsfKind kind, double tau) : kind_(kind), tau_(tau) {
    detail::require(std::isfinite(tau) && tau > 0.0, Errc::invalid_argument,
                    "tau must be finite and positive");
  }

  static PointSpreadFunction gaussian(double tau) { return {PsfKind::gaussian, tau}; }
  static PointSpreadFunction bandlimited(double tau) { return {PsfKind::bandlimited, tau}; }

  PsfKind kind() const { return kind_; }
  double tau() const { return tau_; }

  /// psi(x): (2 pi)^(-1/4) exp(-x^2/4), or sin(x) / (sqrt(pi) x).
  double amplitude(double x) const {
    if (kind_ == PsfKind::gaussian) {
      return std::exp(-0.25 * x * x) / std::sqrt(std::sqrt(2.0 * std::numbers::pi));
    }
    if (x == 0.0) return 1.0 / std::sqrt(std::numbers::pi);
    return std::sin(x) / (std::sqrt(std::numbers::pi) * x);
  }

  /// Spatial-frequency amplitude Psi(k), unit norm in k.
  double pupil(double k) const {
    if (kind_ == PsfKind::gaussian) {
      return std::sqrt(std::sqrt(2.0 / std::numbers::pi)) * std::exp(-k * k);
    }
    return std::fabs(k) < 1.0 ? 1.0 / std::numbers::sqrt2 : 0.0;
  }

  /// Direct-imaging intensity H(x) = tau |psi(x)|^2.
  double intensity(double x) const {
    const double a = amplitude(x);
    return tau_ * a * a;
  }

 private:
  PsfKind kind_;
  double tau_;
};

// ---------------------------------------------------------------------------
// Mode kernel H(q|y) for the PSF-adapted basis
// ---------------------------------------------------------------------------

/// H(q|y) / tau for q = 0..q_max: Poisson(y^2/4) for the Gaussian PSF,
/// (2q+1) j_q(y)^2 for the bandlimited PSF.
inline std::vector<double> mode_probabilities(PsfKind kind, int q_max, double y) {
  detail::require(q_max >= 0, Errc::invalid_argument, "q_max must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(q_max) + 1, 0.0);
  if (kind == PsfKind::gaussian) {
    const double lambda = 0.25 * y * y;
    double p = std::exp(-lambda);
    out[0] = p;
    for (int q = 1; q <= q_max; ++q) {
      p *= lambda / q;
      out[static_cast<std::size_t>(q)] = p;
    }
    return out;
  }
  const auto j = spherical_bessel_sequence(q_max, y);
  for (int q = 0; q <= q_max; ++q) {
    const double v = j[static_cast<std::size_t>(q)];
    out[static_cast<std::size_t>(q)] = (2.0 * q + 1.0) * v * v;
  }
  return out;
}

/// H(q|y) for a single mode.
inline double mode_intensity(const PointSpreadFunction& psf, int q, double y) {
  detail::require(q >= 0, Errc::invalid_argument, "mode index must be >= 0");
  if (psf.kind() == PsfKind::gaussian) {
    const double lambda = 0.25 * y * y;
    if (lambda == 0.0) return q == 0 ? psf.tau() : 0.0;
    return psf.tau() * std::exp(-lambda + q * std::log(lambda) - std::lgamma(q + 1.0));
  }
  const double v = spherical_bessel(q, y);
  return psf.tau() * (2.0 * q + 1.0) * v * v;
}

/// sum_{q > q_max} H(q|y) / tau, summed directly (not as 1 - head).
inline double mode_tail_mass(PsfKind kind, int q_max, double y) {
  detail::require(q_max >= 0, Errc::invalid_argument, "q_max must be >= 0");
  if (y == 0.0) return 0.0;
  if (kind == PsfKind::gaussian) {
    const double lambda = 0.25 * y * y;
    double q = q_max + 1.0;
    double p = std::exp(-lambda + q * std::log(lambda) - std::lgamma(q + 1.0));
    double tail = 0.0;
    const double stop = std::max(q, lambda) + 60.0 + 12.0 * std::sqrt(lambda);
    for (; q <= stop; q += 1.0) {
      tail += p;
      p *= lambda / (q + 1.0);
      if (q > lambda && p < 1e-300) break;
    }
    return tail;
  }
  const int upper = q_max + 60 + 2 * static_cast<int>(std::ceil(std::fabs(y)));
  const auto j = spherical_bessel_sequence(upper, y);
  double tail = 0.0;
  for (int q = upper; q > q_max; --q) {
    const double v = j[static_cast<std::size_t>(q)];
    tail += (2.0 * q + 1.0) * v * v;
  }
  return tail;
}

// ---------------------------------------------------------------------------
// Object distributions
// ---------------------------------------------------------------------------

struct PointSources {
  std::vector<double> positions;
  std::vector<double> weights;
};

struct FlatTop {
  double theta0 = 1.0;
  double delta = 0.0;
};

/// Piecewise-linear density on a strictly increasing grid.
struct Tabulated {
  std::vector<double> grid;
  std::vector<double> density;
};

/// Source distribution F on the object plane.
class ObjectModel {
 public:
  using Variant = std::variant<PointSources, FlatTop, Tabulated>;

  explicit ObjectModel(Variant v) : v_(std::move(v)) { validate(); }

  static ObjectModel point_sources(std::vector<double> positions, std::vector<double> weights) {
    return ObjectModel(PointSources{std::move(positions), std::move(weights)});
  }
  static ObjectModel flat_top(double theta0, double delta) {
    return ObjectModel(FlatTop{theta0, delta});
  }
  static ObjectModel tabulated(std::vector<double> grid, std::vector<double> density) {
    return ObjectModel(Tabulated{std::move(grid), std::move(density)});
  }

  const Variant& variant() const { return v_; }

  /// theta_0 = total source mass.
  double mass() const { return mass_; }

  /// max |y| over the support.
  double support_radius() const {
    return std::visit(
        [](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointSources>) {
            double r = 0.0;
            for (std::size_t i = 0; i < m.positions.size(); ++i) {
              if (m.weights[i] > 0.0) r = std::max(r, std::fabs(m.positions[i]));
            }
            return r;
          } else if constexpr (std::is_same_v<T, FlatTop>) {
            return 0.5 * m.delta;
          } else {
            return std::max(std::fabs(m.grid.front()), std::fabs(m.grid.back()));
          }
        },
        v_);
  }

  /// Positions at which a tail criterion must hold: every point source, or the
  /// support edges of a continuous object.
  std::vector<double> extreme_points() const {
    if (const auto* p = std::get_if<PointSources>(&v_)) return p->positions;
    return {support_radius()};
  }

  /// int g(y) dF(y): exact sums for point sources, adaptive Gauss-Legendre on
  /// the support (and per grid cell for tabulated densities) otherwise.
  template <class G>
  double integrate(G&& g, double rel_tol = 1e-14) const {
    return std::visit(
        [&](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointSources>) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m.positions.size(); ++i) acc += m.weights[i] * g(m.positions[i]);
            return acc;
          } else if constexpr (std::is_same_v<T, FlatTop>) {
            if (m.delta == 0.0) return m.theta0 * g(0.0);
            const double half = 0.5 * m.delta;
            return m.theta0 / m.delta * semipar::integrate(g, -half, half, rel_tol);
          } else {
            double acc = 0.0;
            for (std::size_t i = 0; i + 1 < m.grid.size(); ++i) {
              const double a = m.grid[i], b = m.grid[i + 1];
              const double ra = m.density[i], rb = m.density[i + 1];
              if (ra == 0.0 && rb == 0.0) continue;
              acc += semipar::integrate(
                  [&](double y) { return g(y) * (ra + (rb - ra) * (y - a) / (b - a)); }, a, b,
                  rel_tol);
            }
            return acc;
          }
        },
        v_);
  }

  /// Draws y from the normalized distribution F / theta_0.
  double sample_position(Rng& rng) const {
    return std::visit(
        [&](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointSources>) {
            const double u = rng.uniform() * cdf_.back();
            const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
            const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()),
                                                   m.positions.size() - 1);
            return m.positions[idx];
          } else if constexpr (std::is_same_v<T, FlatTop>) {
            return m.delta * (rng.uniform() - 0.5);
          } else {
            const double u = rng.uniform() * cdf_.back();
            auto idx = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) -
                                                cdf_.begin());
            idx = std::min(idx, cdf_.size() - 1);
            const double a = m.grid[idx], b = m.grid[idx + 1];
            const double ra = m.density[idx], rb = m.density[idx + 1];
            const double h = b - a;
            const double c = u - (idx == 0 ? 0.0 : cdf_[idx - 1]);
            // solve ra t + (rb - ra) t^2 / (2h) = c on [0, h]
            const double disc = std::max(0.0, ra * ra + 2.0 * (rb - ra) * c / h);
            const double denom = ra + std::sqrt(disc);
            const double t = denom > 0.0 ? 2.0 * c / denom : 0.0;
            return a + std::clamp(t, 0.0, h);
          }
        },
        v_);
  }

 private:
  void validate() {
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointSources>) {
            detail::require(!m.positions.empty(), Errc::invalid_argument,
                            "point sources need at least one position");
            detail::require(m.positions.size() == m.weights.size(), Errc::invalid_argument,
                            "positions and weights differ in length");
            double total = 0.0;
            for (std::size_t i = 0; i < m.positions.size(); ++i) {
              detail::require(std::isfinite(m.positions[i]), Errc::invalid_argument,
                              "positions must be finite");
              detail::require(std::isfinite(m.weights[i]) && m.weights[i] >= 0.0,
                              Errc::invalid_argument, "weights must be finite and >= 0");
              if (i > 0) {
                detail::require(m.positions[i] > m.positions[i - 1], Errc::invalid_argument,
                                "positions must be strictly increasing");
              }
              total += m.weights[i];
              cdf_.push_back(total);
            }
            mass_ = total;
          } else if constexpr (std::is_same_v<T, FlatTop>) {
            detail::require(std::isfinite(m.theta0) && m.theta0 > 0.0, Errc::invalid_argument,
                            "theta0 must be finite and positive");
            detail::require(std::isfinite(m.delta) && m.delta >= 0.0, Errc::invalid_argument,
                            "delta must be finite and >= 0");
            mass_ = m.theta0;
          } else {
            detail::require(m.grid.size() >= 2, Errc::invalid_argument,
                            "tabulated density needs at least two grid points");
            detail::require(m.grid.size() == m.density.size(), Errc::invalid_argument,
                            "grid and density differ in length");
            double total = 0.0;
            for (std::size_t i = 0; i < m.grid.size(); ++i) {
              detail::require(std::isfinite(m.grid[i]), Errc::invalid_argument,
                              "grid must be finite");
              detail::require(std::isfinite(m.density[i]) && m.density[i] >= 0.0,
                              Errc::invalid_argument, "density must be finite and >= 0");
              if (i > 0) {
                detail::require(m.grid[i] > m.grid[i - 1], Errc::invalid_argument,
                                "grid must be strictly increasing");
                total += 0.5 * (m.density[i] + m.density[i - 1]) * (m.grid[i] - m.grid[i - 1]);
                cdf_.push_back(total);
              }
            }
            mass_ = total;
          }
        },
        v_);
    detail::require(std::isfinite(mass_) && mass_ > 0.0, Errc::invalid_argument,
                    "total source mass must be finite and positive");
  }

  Variant v_;
  double mass_ = 0.0;
  std::vector<double> cdf_;  // cumulative weights / cell masses for sampling
};

/// theta_j = int y^j dF(y). Closed forms for point sources and flat tops
/// (odd flat-top moments are exactly zero); per-cell Gauss-Legendre for
/// tabulated objects, exact for the piecewise-linear interpolant.
inline double object_moment(const ObjectModel& model, int j) {
  detail::require(j >= 0, Errc::invalid_argument, "moment order must be >= 0");
  const double value = std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PointSources>) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m.positions.size(); ++i) {
            acc += m.weights[i] * std::pow(m.positions[i], j);
          }
          return acc;
        } else if constexpr (std::is_same_v<T, FlatTop>) {
          if (j % 2 == 1) return 0.0;
          if (j == 0) return m.theta0;
          return m.theta0 * std::pow(0.5 * m.delta, j) / (j + 1.0);
        } else {
          const GaussLegendreRule rule = gauss_legendre(static_cast<std::size_t>(j / 2 + 2));
          double acc = 0.0;
          for (std::size_t i = 0; i + 1 < m.grid.size(); ++i) {
            const double a = m.grid[i], b = m.grid[i + 1];
            const double ra = m.density[i], rb = m.density[i + 1];
            acc += integrate_fixed(
                [&](double y) { return std::pow(y, j) * (ra + (rb - ra) * (y - a) / (b - a)); },
                a, b, rule);
          }
          return acc;
        }
      },
      model.variant());
  if (!std::isfinite(value)) {
    throw Error(Errc::overflow, "moment " + std::to_string(j) + " is not representable");
  }
  return value;
}

/// theta_0 .. theta_{count-1}.
inline std::vector<double> object_moments(const ObjectModel& model, std::size_t count) {
  std::vector<double> theta(count);
  for (std::size_t j = 0; j < count; ++j) theta[j] = object_moment(model, static_cast<int>(j));
  return theta;
}

/// N = tau theta_0.
inline double expected_photon_number(const ObjectModel& model, const PointSpreadFunction& psf) {
  return psf.tau() * model.mass();
}

/// f(x) = int H(x - y) dF(y).
inline double image_intensity_direct(const ObjectModel& model, const PointSpreadFunction& psf,
                                     double x) {
  return model.integrate([&](double y) { return psf.intensity(x - y); });
}

/// f(q) = int H(q|y) dF(y).
inline double image_intensity_spade(const ObjectModel& model, const PointSpreadFunction& psf,
                                    int q) {
  return model.integrate([&](double y) { return mode_intensity(psf, q, y); });
}

/// f(0), ..., f(q_max).
inline std::vector<double> image_intensities_spade(const ObjectModel& model,
                                                   const PointSpreadFunction& psf, int q_max) {
  std::vector<double> f(static_cast<std::size_t>(q_max) + 1);
  for (int q = 0; q <= q_max; ++q) f[static_cast<std::size_t>(q)] = image_intensity_spade(model, psf, q);
  return f;
}

/// Largest tail mass sum_{q > q_max} H(q|y)/tau over the model's extreme points.
inline double truncation_tail(const ObjectModel& model, PsfKind kind, int q_max) {
  double worst = 0.0;
  for (double y : model.extreme_points()) worst = std::max(worst, mode_tail_mass(kind, q_max, y));
  return worst;
}

inline constexpr double kModeTailTolerance = 1e-12;

/// Smallest truncation Q >= 16 whose mode tail mass is below 1e-12 over the
/// support (Poisson tail at lambda = (y_max/2)^2 for the Gaussian PSF).
inline int default_truncation(const ObjectModel& model, const PointSpreadFunction& psf) {
  for (int q = 16; q < 4096; ++q) {
    if (truncation_tail(model, psf.kind(), q) < kModeTailTolerance) return q;
  }
  throw Error(Errc::truncation_too_small, "no truncation below 4096 modes meets the tail bound");
}

/// Throws TruncationTooSmall unless the mode tail beyond q_max is below 1e-12.
inline void check_truncation(const ObjectModel& model, const PointSpreadFunction& psf, int q_max) {
  const double tail = truncation_tail(model, psf.kind(), q_max);
  if (!(tail < kModeTailTolerance)) {
    throw Error(Errc::truncation_too_small,
                "mode tail mass " + std::to_string(tail) + " beyond Q = " + std::to_string(q_max) +
                    " exceeds 1e-12",
                static_cast<std::size_t>(q_max));
  }
}

// ---------------------------------------------------------------------------
// Photon samples
// ---------------------------------------------------------------------------

/// Direct imaging: the detected photon positions.
struct DirectSample {
  std::vector<double> positions;
  std::uint64_t seed = 0;

  std::size_t photons() const { return positions.size(); }
};

/// SPADE: photon counts per mode q = 0..truncation.
struct SpadeSample {
  std::vector<std::uint64_t> counts;
  int truncation = 0;
  std::uint64_t seed = 0;

  std::uint64_t photons() const {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    return total;
  }
};

/// One Poisson-process realization on the image plane: L ~ Poisson(N), then
/// x = y + z with y ~ F/theta_0 and z ~ |psi|^2 = N(0, 1).
inline DirectSample sample_direct(const ObjectModel& model, const PointSpreadFunction& psf,
                                  std::uint64_t seed) {
  if (psf.kind() != PsfKind::gaussian) {
    throw Error(Errc::unsupported_psf, "direct-imaging sampling requires the Gaussian PSF");
  }
  Rng rng(seed);
  DirectSample sample;
  sample.seed = seed;
  const std::uint64_t photons = rng.poisson(expected_photon_number(model, psf));
  sample.positions.reserve(photons);
  for (std::uint64_t l = 0; l < photons; ++l) {
    const double y = model.sample_position(rng);
    sample.positions.push_back(y + rng.normal());
  }
  return sample;
}

namespace detail {

// Mode index for one photon from source position y, conditioned on q <= q_max
// (redrawn otherwise; that event has probability below 1e-12).
inline int draw_mode(PsfKind kind, int q_max, double y, Rng& rng,
                     std::vector<double>& scratch) {
  if (kind == PsfKind::gaussian) {
    const double lambda = 0.25 * y * y;
    while (true) {
      const double u = rng.uniform();
      double p = std::exp(-lambda);
      double cdf = p;
      int q = 0;
      while (u >= cdf && q < q_max) {
        ++q;
        p *= lambda / q;
        cdf += p;
      }
      if (u < cdf) return q;
    }
  }
  scratch = mode_probabilities(kind, q_max, y);
  while (true) {
    const double u = rng.uniform();
    double cdf = 0.0;
    for (int q = 0; q <= q_max; ++q) {
      cdf += scratch[static_cast<std::size_t>(q)];
      if (u < cdf) return q;
    }
  }
}

}  // namespace detail

/// One SPADE realization: L ~ Poisson(N) photons, each with a source position
/// y ~ F/theta_0 and a mode q ~ H(q|y)/tau, accumulated into counts.
inline SpadeSample sample_spade(const ObjectModel& model, const PointSpreadFunction& psf,
                                int q_max, std::uint64_t seed) {
  detail::require(q_max >= 0, Errc::invalid_argument, "truncation must be >= 0");
  check_truncation(model, psf, q_max);
  Rng rng(seed);
  SpadeSample sample;
  sample.seed = seed;
  sample.truncation = q_max;
  sample.counts.assign(static_cast<std::size_t>(q_max) + 1, 0);
  const std::uint64_t photons = rng.poisson(expected_photon_number(model, psf));
  std::vector<double> scratch;
  for (std::uint64_t l = 0; l < photons; ++l) {
    const double y = model.sample_position(rng);
    ++sample.counts[static_cast<std::size_t>(detail::draw_mode(psf.kind(), q_max, y, rng, scratch))];
  }
  return sample;
}

}  // namespace semipar

#endif  // SEMIPAR_MEASURES_HPP
