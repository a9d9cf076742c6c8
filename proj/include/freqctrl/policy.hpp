#pragma once

#include <algorithm>
#include <atomic>
#include <map>
#include <span>
#include <stdexcept>

#include "freqctrl/core.hpp"
#include "freqctrl/rng.hpp"

namespace freqctrl::policy {

// Counts out-of-range EF values that had to be clamped; callers surface it
// as a warning.
inline std::atomic<long> ef_clamp_warnings{0};

struct EfConfig {
  double ef = 1.0;
  std::map<Cohort, double> per_cohort;

  double resolve(Cohort c) const {
    const auto it = per_cohort.find(c);
    const double v = it != per_cohort.end() ? it->second : ef;
    return std::clamp(v, 0.0, 1.0);
  }
};

// argmax with ties going to the lowest index.
inline int greedy(std::span<const double> qvals) {
  if (qvals.empty()) throw std::invalid_argument("greedy over empty Q-vector");
  int best = 0;
  for (std::size_t a = 1; a < qvals.size(); ++a)
    if (qvals[a] > qvals[static_cast<std::size_t>(best)])
      best = static_cast<int>(a);
  return best;
}

// Maximal incremental value of the state: max Q - min Q.
inline double delta_q(std::span<const double> qvals) {
  if (qvals.empty()) throw std::invalid_argument("delta_q over empty Q-vector");
  const auto [lo, hi] = std::minmax_element(qvals.begin(), qvals.end());
  return *hi - *lo;
}

// Minimal frequency reaching a sufficient share of the incremental value:
//   min { f | Q(s,f) >= min Q + ef * (max Q - min Q) }
// The comparison carries a 1e-12 slack so rounding cannot exclude the argmax
// at ef = 1.
inline int ef_select(std::span<const double> qvals, double ef) {
  if (qvals.size() < 3)
    throw std::invalid_argument("ef_select needs at least 3 actions");
  if (ef < 0.0 || ef > 1.0) {
    ef = std::clamp(ef, 0.0, 1.0);
    ++ef_clamp_warnings;
  }
  const auto [lo, hi] = std::minmax_element(qvals.begin(), qvals.end());
  const double threshold = *lo + ef * (*hi - *lo);
  for (std::size_t a = 0; a < qvals.size(); ++a)
    if (qvals[a] >= threshold - 1e-12) return static_cast<int>(a);
  return greedy(qvals);  // unreachable: the argmax always qualifies
}

// Behavior policy for data collection: uniform with probability
// explore_prob, otherwise greedy.
inline int explore(std::span<const double> qvals, double explore_prob,
                   Rng& rng) {
  if (explore_prob < 0.0 || explore_prob > 1.0)
    throw std::invalid_argument("explore_prob must be in [0,1]");
  if (rng.bernoulli(explore_prob))
    return rng.uniform_int(static_cast<int>(qvals.size()));
  return greedy(qvals);
}

}  // namespace freqctrl::policy
