#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "semipar/quadrature.hpp"
#include "semipar/random.hpp"
#include "semipar/spade.hpp"

using namespace semipar;

namespace {

double flat_moment(double delta, int j) {
  return j % 2 ? 0.0 : std::pow(delta, j) / ((j + 1.0) * std::pow(2.0, j));
}

double factorial(int n) { return std::tgamma(n + 1.0); }

// sum_q g(q) f(q) with f(q) = int H(q|y) dF(y) by an independent flat-top rule
template <class G>
double mode_average(double delta, const PointSpreadFunction& psf, int q_max, G&& g) {
  const GaussLegendreRule rule = gauss_legendre(200);
  double acc = 0.0;
  for (int q = 0; q <= q_max; ++q) {
    double f = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
      const double y = 0.5 * delta * rule.nodes[i];
      f += 0.5 * rule.weights[i] * mode_intensity(psf, q, y);
    }
    acc += g(q) * f;
  }
  return acc;
}

}  // namespace

TEST(SpadeInfluence, GaussianExamples) {
  for (int q : {1, 2, 7, 30}) EXPECT_DOUBLE_EQ(gaussian_influence(1, q, 2.0), 4.0 * q / 2.0);
  EXPECT_EQ(gaussian_influence(2, 3, 1.0), 96.0);
  EXPECT_EQ(gaussian_influence(3, 2, 1.0), 0.0);
  EXPECT_EQ(gaussian_influence(0, 5, 4.0), 0.25);
  EXPECT_TRUE(std::isfinite(gaussian_influence(20, 200, 1e4)));
  try {
    gaussian_influence(300, 400, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::overflow);
  }
  EXPECT_THROW(gaussian_influence(-1, 2, 1.0), Error);
}

TEST(SpadeInfluence, LegendreExamples) {
  EXPECT_NEAR(legendre_influence(1, 1, 1.0), 3.0, 1e-14);
  for (int q = 0; q <= 40; ++q) EXPECT_NEAR(legendre_influence(1, q, 5.0), 3.0 * q * (q + 1) / 10.0, 1e-11 * (1 + q * q));
  EXPECT_EQ(legendre_influence(3, 2, 1.0), 0.0);
  // j = 2: 15 * 3 * binom(q+2, 4)
  for (int q = 2; q <= 30; ++q) {
    const double b = (q + 2.0) * (q + 1.0) * q * (q - 1.0) / 24.0;
    EXPECT_NEAR(legendre_influence(2, q, 1.0), 45.0 * b, 1e-12 * 45.0 * b);
  }
}

TEST(SpadeInfluence, GaussianFactorialMomentIdentity) {
  const auto psf = PointSpreadFunction::gaussian(3.0);
  for (int j = 0; j <= 4; ++j)
    for (double y : {0.3, 1.0, 2.0}) {
      double acc = 0.0;
      for (int q = 0; q <= 150; ++q) acc += gaussian_influence(j, q, 3.0) * mode_intensity(psf, q, y);
      const double ref = std::pow(y, 2 * j);
      EXPECT_NEAR(acc, ref, 1e-9 * ref) << j << " " << y;
    }
}

TEST(SpadeInfluence, LegendreIdentity) {
  const auto psf = PointSpreadFunction::bandlimited(3.0);
  for (int j = 0; j <= 3; ++j)
    for (double y : {0.3, 0.5, 1.0, 2.0}) {
      double acc = 0.0;
      for (int q = 0; q <= 80; ++q) acc += legendre_influence(j, q, 3.0) * mode_intensity(psf, q, y);
      const double ref = std::pow(y, 2 * j);
      EXPECT_NEAR(acc, ref, 1e-7 * ref) << j << " " << y;
    }
}

TEST(SpadeKernelType, WrapsKernelAndInfluence) {
  const SpadeKernel k(PointSpreadFunction::gaussian(2.0));
  EXPECT_DOUBLE_EQ(k(1, 2.0), 2.0 * std::exp(-1.0));
  EXPECT_DOUBLE_EQ(k.influence(1, 3), 6.0);
  const SpadeKernel l(PointSpreadFunction::bandlimited(2.0));
  EXPECT_EQ(l(0, 0.0), 2.0);
  EXPECT_EQ(l(3, 0.0), 0.0);
}

TEST(CMatrixSpade, GaussianEntriesAndStructure) {
  const TriangularMatrix c = c_matrix_spade(PointSpreadFunction::gaussian(1.0), 5);
  EXPECT_EQ(c.orientation(), Triangle::upper);
  for (std::size_t q = 0; q < 5; ++q)
    for (std::size_t j = 0; j < 5; ++j) {
      double ref = 0.0;
      if (j >= q) {
        const double sign = (j - q) % 2 ? -1.0 : 1.0;
        ref = sign / (std::pow(4.0, static_cast<double>(j)) * factorial(static_cast<int>(q)) *
                      factorial(static_cast<int>(j - q)));
      }
      EXPECT_NEAR(c(q, j), ref, 1e-15 * std::fabs(ref)) << q << "," << j;
    }
}

TEST(CMatrixSpade, RowsExpandTheKernel) {
  for (const auto& psf : {PointSpreadFunction::gaussian(2.0), PointSpreadFunction::bandlimited(2.0)}) {
    const std::size_t s = 30;
    const TriangularMatrix c = c_matrix_spade(psf, s);
    for (int q = 0; q <= 6; ++q)
      for (double y : {0.2, 0.7, 1.5}) {
        double acc = 0.0;
        for (std::size_t j = 0; j < s; ++j) acc += c(static_cast<std::size_t>(q), j) * std::pow(y, 2.0 * j);
        const double ref = mode_intensity(psf, q, y);
        EXPECT_NEAR(acc, ref, 1e-12 * 2.0) << to_string(psf.kind()) << " q=" << q << " y=" << y;
      }
  }
}

TEST(CMatrixSpade, InverseIsTheInfluenceTable) {
  for (const auto& psf : {PointSpreadFunction::gaussian(1.0), PointSpreadFunction::bandlimited(1.0)}) {
    const std::size_t s = 10;
    const TriangularMatrix inv = invert_triangular(c_matrix_spade(psf, s));
    for (std::size_t j = 0; j < s; ++j)
      for (std::size_t q = 0; q < s; ++q) {
        const double ref = mode_influence(psf, static_cast<int>(j), static_cast<int>(q));
        EXPECT_NEAR(inv(j, q), ref, 1e-9 * std::max(1.0, std::fabs(ref))) << j << "," << q;
      }
  }
}

TEST(CMatrixSpade, GaussianInverseExactAtTwelve) {
  const TriangularMatrix c = c_matrix_spade(PointSpreadFunction::gaussian(1.0), 12);
  const TriangularMatrix inv = invert_triangular(c);
  for (std::size_t j = 0; j < 12; ++j)
    for (std::size_t q = 0; q < 12; ++q) {
      double ref = 0.0;
      if (q >= j) {
        ref = std::pow(4.0, static_cast<double>(j));
        for (std::size_t i = 0; i < j; ++i) ref *= static_cast<double>(q - i);
      }
      // C itself is not exactly representable; the recursion lands within a
      // few ulps and must round to the exact integer table
      EXPECT_EQ(std::round(inv(j, q)), ref) << j << "," << q;
      EXPECT_NEAR(inv(j, q), ref, 1e-11 * std::max(1.0, ref)) << j << "," << q;
    }
  const Eigen::MatrixXd prod = c.entries() * inv.entries();
  EXPECT_LE((prod - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FSpade, Examples) {
  const auto psf = PointSpreadFunction::gaussian(50.0);
  EXPECT_NEAR(f_spade(ObjectModel::point_sources({1.0}, {1.0}), psf, 0), 50.0 * std::exp(-0.25), 1e-13);
  EXPECT_NEAR(f_spade(ObjectModel::point_sources({2.0}, {1.0}), psf, 1), 50.0 * std::exp(-1.0), 1e-13);
  const auto bl = PointSpreadFunction::bandlimited(50.0);
  EXPECT_EQ(f_spade(ObjectModel::point_sources({0.0}, {1.0}), bl, 0), 50.0);
  EXPECT_EQ(f_spade(ObjectModel::point_sources({0.0}, {1.0}), bl, 2), 0.0);
}

TEST(CrbSpade, GaussianClosedForm) {
  const auto psf = PointSpreadFunction::gaussian(1e4);
  for (double delta : {0.05, 0.1, 0.5, 1.0, 2.0}) {
    const auto model = ObjectModel::flat_top(1.0, delta);
    const double ref = (4.0 * flat_moment(delta, 2) + flat_moment(delta, 4)) / 1e4;
    EXPECT_NEAR(crb_spade(model, psf, EstimandSpec::unit(2)), ref, 1e-10 * ref) << delta;
    EXPECT_NEAR(crb_spade(model, psf, EstimandSpec::unit(0)), 1.0 / 1e4, 1e-16);
  }
  EXPECT_NEAR(crb_spade(ObjectModel::flat_top(1.0, 0.1), psf, EstimandSpec::unit(2)), 3.33458e-7, 5e-12);
}

TEST(CrbSpade, MatchesIndependentModeAverage) {
  for (const auto& psf : {PointSpreadFunction::gaussian(10.0), PointSpreadFunction::bandlimited(10.0)}) {
    const EstimandSpec spec({0.5, 0.0, 1.0, 0.0, -0.25});
    const double ref = mode_average(1.5, psf, 60, [&](int q) {
      const double b = influence_spade(psf, spec, q);
      return b * b;
    });
    const double got = crb_spade(ObjectModel::flat_top(1.0, 1.5), psf, spec);
    EXPECT_NEAR(got, ref, 1e-10 * ref) << to_string(psf.kind());
  }
}

TEST(CrbSpade, RejectsOddEstimandsAndShortTruncation) {
  const auto psf = PointSpreadFunction::gaussian(10.0);
  const auto model = ObjectModel::flat_top(1.0, 0.5);
  EXPECT_THROW(crb_spade(model, psf, EstimandSpec::unit(1)), Error);
  try {
    crb_spade(ObjectModel::point_sources({10.0}, {1.0}), psf, EstimandSpec::unit(2), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncation_too_small);
  }
}

TEST(ConstrainedCrbSpade, ClosedForm) {
  const auto psf = PointSpreadFunction::gaussian(1e4);
  for (double delta : {0.1, 0.5, 1.0}) {
    const auto model = ObjectModel::flat_top(1.0, delta);
    const double t2 = flat_moment(delta, 2), t4 = flat_moment(delta, 4);
    const double ref = (4.0 * t2 + t4 - t2 * t2) / 1e4;
    const double got = constrained_crb_spade(model, psf, EstimandSpec::unit(2));
    EXPECT_NEAR(got, ref, 1e-10 * ref);
    EXPECT_LE(got, crb_spade(model, psf, EstimandSpec::unit(2)));
  }
  EXPECT_NEAR(constrained_crb_spade(ObjectModel::flat_top(1.0, 0.1), psf, EstimandSpec::unit(2)), 3.33389e-7, 5e-12);
  EXPECT_THROW(constrained_crb_spade(ObjectModel::flat_top(1.0, 0.1), psf, EstimandSpec({1.0, 0.0, 1.0})), Error);
}

TEST(EstimateSpade, Examples) {
  const auto psf = PointSpreadFunction::gaussian(1.0);
  EXPECT_EQ(estimate_spade({{17, 0, 0}, 2, 0}, psf, EstimandSpec::unit(2)), 0.0);
  EXPECT_EQ(estimate_spade({{0, 3}, 1, 0}, psf, EstimandSpec::unit(2)), 12.0);
  EXPECT_EQ(estimate_spade({{}, 0, 0}, psf, EstimandSpec::unit(2)), 0.0);
  EXPECT_THROW(estimate_spade({{1}, 0, 0}, psf, EstimandSpec::unit(3)), Error);
}

TEST(EstimateSpade, UnbiasedAndEfficient) {
  const auto psf = PointSpreadFunction::gaussian(1e4);
  const auto spec = EstimandSpec::unit(2);
  const int trials = 2000;
  for (double delta : {0.1, 0.5}) {
    const auto model = ObjectModel::flat_top(1.0, delta);
    const int q_max = default_truncation(model, psf);
    std::vector<double> est(trials);
    for (int t = 0; t < trials; ++t)
      est[t] = estimate_spade(sample_spade(model, psf, q_max, derive_seed(77, static_cast<std::uint64_t>(t))), psf, spec);
    double mean = 0.0;
    for (double v : est) mean += v;
    mean /= trials;
    double var = 0.0;
    for (double v : est) var += (v - mean) * (v - mean);
    var /= trials - 1;
    EXPECT_NEAR(mean, flat_moment(delta, 2), 4.0 * std::sqrt(var / trials)) << delta;
    EXPECT_NEAR(var / crb_spade(model, psf, spec), 1.0, 0.05) << delta;
  }
}

TEST(TruncatedFisherSpade, ConvergesFromBelow) {
  const auto spec = EstimandSpec::unit(2);
  for (const auto& psf : {PointSpreadFunction::gaussian(1e4), PointSpreadFunction::bandlimited(1e4)}) {
    const auto model = ObjectModel::flat_top(1.0, 0.5);
    const int q_max = default_truncation(model, psf);
    const double crb = crb_spade(model, psf, spec, q_max);
    double prev = 0.0;
    for (std::size_t p = 2; p <= 8; ++p) {
      const double v = truncated_fisher_crb_spade(model, psf, spec, p, q_max);
      EXPECT_GE(v, prev * (1.0 - 1e-10)) << to_string(psf.kind()) << " p=" << p;
      EXPECT_LE(v, crb + 1e-8);
      if (p == 6) {
        EXPECT_NEAR(v / crb, 1.0, 0.05) << to_string(psf.kind());
      }
      prev = v;
    }
  }
}

TEST(TruncatedFisherSpade, SchurFormMatchesConstrained) {
  const auto psf = PointSpreadFunction::gaussian(1e4);
  for (double delta : {0.1, 0.5}) {
    const auto model = ObjectModel::flat_top(1.0, delta);
    const int q_max = default_truncation(model, psf);
    const double schur = constrained_crb_spade_schur(model, psf, EstimandSpec::unit(2), 5, q_max);
    EXPECT_NEAR(schur / constrained_crb_spade(model, psf, EstimandSpec::unit(2)), 1.0, 0.01) << delta;
  }
}

TEST(LegendreMoments, EvenMomentBound) {
  const auto psf = PointSpreadFunction::bandlimited(1.0);
  for (int j : {1, 2})
    for (double y : {1.0, 3.0}) {
      double acc = 0.0;
      for (int q = 0; q <= 80; ++q) acc += mode_intensity(psf, q, y) * std::pow(q, 2.0 * j);
      const double bound = std::pow(j - 1.0, 2.0 * j) +
                           std::pow(2.0 * j, 2.0 * j) * std::pow(y, 2.0 * j) /
                               (double_factorial_real(2 * j - 1) * double_factorial_real(2 * j + 1));
      EXPECT_LE(acc, bound) << j << " " << y;
    }
}
