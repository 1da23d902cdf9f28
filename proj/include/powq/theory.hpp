#pragma once

// Closed forms for proof-of-work quorums on a Poisson process with rate
// lambda: probability of ambiguity (two disjoint quorums possible), the
// Erlang-distributed optimistic quorum time, the explicit negligibility
// bound, eclipse-detection windows and block header overhead.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace powq::theory {

class Probability {
 public:
  explicit Probability(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) throw std::domain_error("probability outside [0, 1]");
  }
  double value() const { return value_; }

 private:
  double value_;
};

struct QuorumParams {
  std::uint64_t k;
  double lambda;

  QuorumParams(std::uint64_t quorum_size, double rate) : k(quorum_size), lambda(rate) {
    if (quorum_size < 1) throw std::domain_error("quorum size must be at least 1");
    if (!(rate > 0.0) || !std::isfinite(rate)) throw std::domain_error("rate must be positive");
  }
};

namespace detail {

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

/// ln P(shape, x) for the regularized lower incomplete gamma function with
/// integer shape. Below x = shape + 1 the power series is summed in log
/// space; above it the finite Poisson sum for the complement is used.
inline double log_regularized_lower_gamma(std::uint64_t shape, double x) {
  if (shape == 0) throw std::domain_error("shape must be positive");
  if (!(x >= 0.0)) throw std::domain_error("argument must be nonnegative");
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  const double a = static_cast<double>(shape);
  if (x < a + 1.0) {
    // P(a, x) = x^a e^-x / Gamma(a + 1) * sum_n x^n / ((a+1)...(a+n))
    double term = 1.0;
    double sum = 1.0;
    for (int n = 1; n < 100000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return a * std::log(x) - x - std::lgamma(a + 1.0) + std::log(sum);
  }
  // Q(a, x) = e^-x sum_{i<a} x^i / i!
  double log_q = -std::numeric_limits<double>::infinity();
  const double log_x = std::log(x);
  for (std::uint64_t i = 0; i < shape; ++i) {
    const double di = static_cast<double>(i);
    log_q = detail::log_sum_exp(log_q, di * log_x - x - std::lgamma(di + 1.0));
  }
  return std::log1p(-std::min(1.0, std::exp(log_q)));
}

inline double regularized_lower_gamma(std::uint64_t shape, double x) {
  return std::exp(log_regularized_lower_gamma(shape, x));
}

/// Probability that at least 2k ATVs have occurred by time t.
inline Probability poa(const QuorumParams& p, double t) {
  if (!(t >= 0.0)) throw std::domain_error("time must be nonnegative");
  return Probability(regularized_lower_gamma(2 * p.k, p.lambda * t));
}

/// Probability of ambiguity at the expected optimistic quorum time k / lambda.
inline Probability poa_at_expected_time(std::uint64_t k) {
  if (k < 1) throw std::domain_error("quorum size must be at least 1");
  return Probability(regularized_lower_gamma(2 * k, static_cast<double>(k)));
}

inline double expected_quorum_time(const QuorumParams& p) { return static_cast<double>(p.k) / p.lambda; }

/// Erlang(k, lambda) density of the optimistic quorum time.
inline double quorum_time_density(const QuorumParams& p, double t) {
  if (!(t >= 0.0)) throw std::domain_error("time must be nonnegative");
  if (t == 0.0) return p.k == 1 ? p.lambda : 0.0;
  const double k = static_cast<double>(p.k);
  return std::exp((k - 1.0) * std::log(p.lambda * t) + std::log(p.lambda) - p.lambda * t -
                  std::lgamma(k));
}

inline Probability quorum_time_cdf(const QuorumParams& p, double t) {
  if (t == std::numeric_limits<double>::infinity()) return Probability(1.0);
  if (!(t >= 0.0)) throw std::domain_error("time must be nonnegative");
  return Probability(regularized_lower_gamma(p.k, p.lambda * t));
}

/// (k sqrt(e) / (2k-1))^(2k) * sqrt((2k-1) / (2 pi e^2)), an upper bound on
/// poa_at_expected_time(k) obtained from Stirling's lower bound on (2k-1)!.
inline double negligibility_bound(std::uint64_t k) {
  if (k < 1) throw std::domain_error("quorum size must be at least 1");
  const double kk = static_cast<double>(k);
  const double m = 2.0 * kk - 1.0;
  const double log_bound = 2.0 * kk * (std::log(kk) + 0.5 - std::log(m)) +
                           0.5 * (std::log(m) - std::log(2.0 * std::numbers::pi) - 2.0);
  return std::exp(log_bound);
}

/// Silence window, in expected block times, after which receiving no vote
/// rejects the honest-network hypothesis at the given confidence level.
/// Votes arrive at rate k per expected block time.
inline double eclipse_detection_time(std::uint64_t k, double confidence) {
  if (k < 1) throw std::domain_error("quorum size must be at least 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::domain_error("confidence must be in (0, 1)");
  return -std::log(confidence) / static_cast<double>(k);
}

/// One shared 32-byte parent reference plus k (32-byte key, 8-byte nonce) pairs.
inline std::uint64_t header_overhead_bytes(std::uint64_t k) {
  if (k < 1) throw std::domain_error("quorum size must be at least 1");
  return 32 + 40 * k;
}

}  // namespace powq::theory
