#pragma once

// Absorbing Markov chain for the formation of a single quorum while the
// attacker withholds votes. State (a, d, l): attacker votes, defender
// votes, and whether the attacker holds the currently smallest vote.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "powq/rng.hpp"

namespace powq::mc {

struct McState {
  std::uint64_t a = 0;
  std::uint64_t d = 0;
  bool leads = false;

  friend bool operator==(const McState&, const McState&) = default;
};

struct McOutcome {
  bool success = false;
  std::uint64_t attacker_votes = 0;  // votes in the attacker's quorum; 0 on failure
};

struct Transition {
  McState next;
  double probability;
};

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("alpha must be in [0, 1]");
}

/// The three successors of `s` with their probabilities.
inline std::array<Transition, 3> transitions(const McState& s, double alpha) {
  const double n = static_cast<double>(s.a + s.d + 1);
  if (s.leads) {
    return {{{{s.a + 1, s.d, true}, alpha},
             {{s.a, s.d + 1, false}, (1.0 - alpha) / n},
             {{s.a, s.d + 1, true}, (1.0 - alpha) * (n - 1.0) / n}}};
  }
  return {{{{s.a, s.d + 1, false}, 1.0 - alpha},
           {{s.a + 1, s.d, true}, alpha / n},
           {{s.a + 1, s.d, false}, alpha * (n - 1.0) / n}}};
}

inline McState mc_init(double alpha, Rng& rng) {
  check_alpha(alpha);
  return bernoulli(rng, alpha) ? McState{1, 0, true} : McState{0, 1, false};
}

inline McState mc_step(const McState& s, double alpha, Rng& rng) {
  const auto options = transitions(s, alpha);
  double u = uniform01(rng);
  for (const auto& t : options) {
    if (u < t.probability) return t.next;
    u -= t.probability;
  }
  return options.back().next;
}

inline bool is_success(const McState& s, std::uint64_t k) { return s.leads && s.a + s.d >= k; }
inline bool is_fail(const McState& s, std::uint64_t k) { return !s.leads && s.d >= k; }

inline McOutcome mc_run(double alpha, std::uint64_t k, Rng& rng) {
  if (k < 1) throw std::domain_error("quorum size must be at least 1");
  McState s = mc_init(alpha, rng);
  const std::uint64_t ceiling = 1'000'000ULL * k;
  for (std::uint64_t step = 0;; ++step) {
    if (is_success(s, k)) return {true, std::min(s.a, k)};
    if (is_fail(s, k)) return {false, 0};
    if (step >= ceiling) throw std::runtime_error("Markov chain did not terminate within the step ceiling");
    s = mc_step(s, alpha, rng);
  }
}

struct McEstimate {
  double leadership = 0;
  double leadership_stderr = 0;
  double vote_share = 0;
  double vote_share_stderr = 0;
  std::uint64_t trials = 0;
};

/// Trials are split into fixed-size chunks with their own derived streams,
/// so the estimate does not depend on how chunks are scheduled.
inline McEstimate mc_estimate(double alpha, std::uint64_t k, std::uint64_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::domain_error("at least one trial is required");
  check_alpha(alpha);
  constexpr std::uint64_t kChunk = 65536;
  double successes = 0, share_sum = 0, share_sq = 0;
  for (std::uint64_t start = 0, chunk = 0; start < trials; start += kChunk, ++chunk) {
    Rng rng = make_stream(seed, "mc", chunk);
    const std::uint64_t end = std::min(trials, start + kChunk);
    for (std::uint64_t i = start; i < end; ++i) {
      const McOutcome out = mc_run(alpha, k, rng);
      if (out.success) {
        successes += 1;
        const double share = static_cast<double>(out.attacker_votes) / static_cast<double>(k);
        share_sum += share;
        share_sq += share * share;
      }
    }
  }
  const double n = static_cast<double>(trials);
  McEstimate e;
  e.trials = trials;
  e.leadership = successes / n;
  e.leadership_stderr = std::sqrt(e.leadership * (1 - e.leadership) / n);
  e.vote_share = share_sum / n;
  e.vote_share_stderr = std::sqrt(std::max(0.0, share_sq / n - e.vote_share * e.vote_share) / n);
  return e;
}

}  // namespace powq::mc
