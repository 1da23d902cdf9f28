#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "powq/theory.hpp"

using namespace powq::theory;

namespace {

// Poisson tail summed term by term in extended precision. Small tails are
// summed upward to avoid cancellation in 1 - below.
long double poisson_at_least(int n, long double mean) {
  long double term = std::exp(-mean);
  long double below = 0;
  for (int i = 0; i < n; ++i) {
    below += term;
    term *= mean / (i + 1);
  }
  if (mean > n) return 1.0L - below;
  long double tail = 0;
  for (int i = n; term > tail * 1e-22L; ++i) {
    tail += term;
    term *= mean / (i + 1);
  }
  return tail;
}

// Composite Simpson rule.
template <class F>
double simpson(F f, double a, double b, int intervals) {
  const double h = (b - a) / intervals;
  double sum = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) sum += f(a + i * h) * (i % 2 ? 4 : 2);
  return sum * h / 3;
}

}  // namespace

TEST(Poa, TableValuesAtExpectedTime) {
  EXPECT_NEAR(poa(QuorumParams(1, 0.1), 10).value(), 0.2642, 5e-5);
  EXPECT_NEAR(poa(QuorumParams(2, 0.2), 10).value(), 0.1429, 5e-5);
  EXPECT_NEAR(poa_at_expected_time(16).value(), 0.0003, 5e-5);
  EXPECT_NEAR(poa_at_expected_time(64).value() / 1.2e-12, 1.0, 0.1);
  EXPECT_NEAR(poa_at_expected_time(256).value() / 4e-45, 1.0, 0.1);
}

TEST(Poa, ClosedFormCrossCheckForKTwo) {
  // 1 - e^-2 (1 + 2 + 2 + 4/3)
  EXPECT_NEAR(poa(QuorumParams(2, 0.2), 10).value(), 1 - std::exp(-2.0) * 19.0 / 3.0, 1e-14);
}

TEST(Poa, MatchesDirectPoissonSum) {
  for (std::uint64_t k : {1, 2, 3, 5, 8, 16, 24}) {
    for (double lt : {0.01, 0.5, 1.0, 3.0, 7.5, 20.0, 40.0}) {
      const double expected = static_cast<double>(poisson_at_least(2 * static_cast<int>(k), lt));
      const double got = poa(QuorumParams(k, 2.0), lt / 2.0).value();
      if (expected > 1e-12) {
        EXPECT_NEAR(got / expected, 1.0, 1e-9) << "k=" << k << " lambda*t=" << lt;
      } else {
        EXPECT_NEAR(got, expected, 1e-15) << "k=" << k << " lambda*t=" << lt;
      }
    }
  }
}

TEST(Poa, ZeroAtTimeZeroAndMonotone) {
  const QuorumParams p(4, 0.4);
  EXPECT_EQ(poa(p, 0).value(), 0.0);
  double last = 0;
  for (double t = 0.5; t < 200; t *= 1.3) {
    const double v = poa(p, t).value();
    EXPECT_GE(v, last);
    last = v;
  }
  EXPECT_NEAR(last, 1.0, 1e-12);
}

TEST(Poa, DecreasingInQuorumSize) {
  double last = 1.0;
  for (std::uint64_t k = 1; k <= 256; ++k) {
    const double v = poa_at_expected_time(k).value();
    EXPECT_LT(v, last) << k;
    EXPECT_GT(v, 0.0) << k;
    last = v;
  }
}

TEST(Poa, SeriesAndComplementAgreeAtSwitchover) {
  for (std::uint64_t a : {2, 10, 64, 300}) {
    const double x = static_cast<double>(a) + 1.0;
    const double below = log_regularized_lower_gamma(a, std::nextafter(x, 0.0));
    const double at = log_regularized_lower_gamma(a, x);
    EXPECT_NEAR(below, at, 1e-9) << a;
  }
}

TEST(Poa, RejectsBadArguments) {
  EXPECT_THROW(QuorumParams(0, 1.0), std::domain_error);
  EXPECT_THROW(QuorumParams(1, 0.0), std::domain_error);
  EXPECT_THROW(QuorumParams(1, -2.0), std::domain_error);
  EXPECT_THROW(poa(QuorumParams(1, 1.0), -1.0), std::domain_error);
  EXPECT_THROW(poa_at_expected_time(0), std::domain_error);
  EXPECT_THROW(Probability(1.5), std::domain_error);
  EXPECT_THROW(Probability(std::nan("")), std::domain_error);
}

TEST(QuorumTime, CdfMatchesIntegratedDensity) {
  const QuorumParams p(2, 0.2);
  const double integrated = simpson([&](double t) { return quorum_time_density(p, t); }, 0, 10, 2000);
  EXPECT_NEAR(integrated, 0.5940, 5e-5);
  EXPECT_NEAR(quorum_time_cdf(p, 10).value(), integrated, 1e-9);
}

TEST(QuorumTime, DensityNormalizedWithMeanKOverLambda) {
  for (std::uint64_t k : {1, 2, 16}) {
    const QuorumParams p(k, 0.1 * k);
    const double end = 40.0 * expected_quorum_time(p);
    const double mass = simpson([&](double t) { return quorum_time_density(p, t); }, 0, end, 20000);
    const double mean = simpson([&](double t) { return t * quorum_time_density(p, t); }, 0, end, 20000);
    EXPECT_NEAR(mass, 1.0, 1e-8) << k;
    EXPECT_NEAR(mean, 10.0, 1e-6) << k;
    EXPECT_DOUBLE_EQ(expected_quorum_time(p), 10.0);
  }
}

TEST(QuorumTime, CdfLimits) {
  const QuorumParams p(3, 1.0);
  EXPECT_EQ(quorum_time_cdf(p, 0).value(), 0.0);
  EXPECT_EQ(quorum_time_cdf(p, std::numeric_limits<double>::infinity()).value(), 1.0);
  EXPECT_EQ(quorum_time_density(QuorumParams(1, 0.5), 0.0), 0.5);
  EXPECT_THROW(quorum_time_cdf(p, -1), std::domain_error);
}

TEST(Negligibility, BoundMatchesExplicitFormula) {
  for (std::uint64_t k = 1; k <= 60; ++k) {
    const double kk = static_cast<double>(k);
    const double direct = std::pow(kk * std::sqrt(std::numbers::e) / (2 * kk - 1), 2 * kk) *
                          std::sqrt((2 * kk - 1) / (2 * std::numbers::pi * std::numbers::e * std::numbers::e));
    EXPECT_NEAR(negligibility_bound(k) / direct, 1.0, 1e-10) << k;
  }
}

TEST(Negligibility, BoundDominatesPoa) {
  for (std::uint64_t k = 1; k <= 256; ++k) {
    EXPECT_LE(poa_at_expected_time(k).value(), negligibility_bound(k)) << k;
  }
}

TEST(Eclipse, TableValues) {
  const double expected[] = {6.91, 3.45, 1.73, 0.86, 0.43, 0.22, 0.11, 0.05, 0.03};
  std::uint64_t k = 1;
  for (double e : expected) {
    EXPECT_NEAR(eclipse_detection_time(k, 0.001), e, 0.005) << k;
    k *= 2;
  }
}

TEST(Eclipse, ProbabilityOfSilenceEqualsConfidence) {
  // k votes per block time: P(no vote in window w) = exp(-k w)
  for (std::uint64_t k : {1, 3, 40}) {
    for (double p : {0.1, 0.001, 1e-9}) {
      EXPECT_NEAR(std::exp(-static_cast<double>(k) * eclipse_detection_time(k, p)) / p, 1.0, 1e-12);
    }
  }
  EXPECT_THROW(eclipse_detection_time(1, 0.0), std::domain_error);
  EXPECT_THROW(eclipse_detection_time(1, 1.0), std::domain_error);
  EXPECT_THROW(eclipse_detection_time(0, 0.5), std::domain_error);
}

TEST(Overhead, TableValues) {
  EXPECT_EQ(header_overhead_bytes(1), 72u);
  EXPECT_EQ(header_overhead_bytes(2), 112u);
  EXPECT_EQ(header_overhead_bytes(16), 672u);
  EXPECT_NEAR(header_overhead_bytes(64) / 1000.0, 2.6, 0.05);
  EXPECT_NEAR(header_overhead_bytes(256) / 1000.0, 10.0, 0.5);
  EXPECT_THROW(header_overhead_bytes(0), std::domain_error);
}
