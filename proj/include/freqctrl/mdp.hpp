#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqctrl/core.hpp"

namespace freqctrl::learner {

// Small explicit MDP: transition[s][a] is a distribution over next states,
// reward[s][a] the expected immediate reward.
struct ExplicitMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<std::vector<std::vector<double>>> transition;
  std::vector<std::vector<double>> reward;
};

inline void validate(const ExplicitMdp& mdp) {
  if (mdp.n_states < 1 || mdp.n_actions < 1)
    throw std::invalid_argument("MDP needs at least one state and action");
  if (mdp.transition.size() != static_cast<std::size_t>(mdp.n_states) ||
      mdp.reward.size() != static_cast<std::size_t>(mdp.n_states))
    throw std::invalid_argument("MDP table sizes do not match n_states");
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.transition[s].size() != static_cast<std::size_t>(mdp.n_actions) ||
        mdp.reward[s].size() != static_cast<std::size_t>(mdp.n_actions))
      throw std::invalid_argument("MDP table sizes do not match n_actions");
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto& row = mdp.transition[s][a];
      if (row.size() != static_cast<std::size_t>(mdp.n_states))
        throw std::invalid_argument("transition row has wrong length");
      double sum = 0.0;
      for (double p : row) {
        if (p < 0.0) throw std::invalid_argument("negative transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument(
            "transition row (" + std::to_string(s) + "," + std::to_string(a) +
            ") does not sum to 1");
    }
  }
}

class QTable {
 public:
  QTable(int n_states, int n_actions)
      : n_states_(n_states),
        n_actions_(n_actions),
        q_(static_cast<std::size_t>(n_states) * n_actions, 0.0) {
    if (n_states < 1 || n_actions < 1)
      throw std::invalid_argument("QTable needs at least one state and action");
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

  double& at(int s, int a) { return q_[index(s, a)]; }
  double at(int s, int a) const { return q_[index(s, a)]; }

  double max_value(int s) const {
    double best = at(s, 0);
    for (int a = 1; a < n_actions_; ++a) best = std::max(best, at(s, a));
    return best;
  }

  // Ties go to the lowest action index.
  int greedy_action(int s) const {
    int best = 0;
    for (int a = 1; a < n_actions_; ++a)
      if (at(s, a) > at(s, best)) best = a;
    return best;
  }

 private:
  std::size_t index(int s, int a) const {
    if (s < 0 || s >= n_states_ || a < 0 || a >= n_actions_)
      throw std::invalid_argument("QTable index out of range");
    return static_cast<std::size_t>(s) * n_actions_ + a;
  }

  int n_states_;
  int n_actions_;
  std::vector<double> q_;
};

// Synchronous Q-value iteration. Returns Q whose Bellman residual is below
// tol in sup norm: stopping when successive sweeps differ by < tol implies
// residual(Q_new) <= gamma * ||Q_new - Q_old|| < tol by contraction.
inline QTable value_iteration(const ExplicitMdp& mdp, double gamma,
                              double tol) {
  validate(mdp);
  if (tol <= 0) throw std::invalid_argument("tol must be > 0");
  if (gamma < 0 || gamma >= 1)
    throw std::invalid_argument("gamma must be in [0,1)");

  QTable q(mdp.n_states, mdp.n_actions);
  QTable next(mdp.n_states, mdp.n_actions);
  for (;;) {
    double diff = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        double v = mdp.reward[s][a];
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          const double p = mdp.transition[s][a][s2];
          if (p > 0.0) v += gamma * p * q.max_value(s2);
        }
        next.at(s, a) = v;
        diff = std::max(diff, std::abs(v - q.at(s, a)));
      }
    }
    std::swap(q, next);
    if (diff < tol) return q;
  }
}

namespace detail {
// Tabular logs carry the discrete state id as the single feature.
inline int state_id_from_features(const std::vector<double>& features,
                                  int n_states) {
  if (features.size() != 1)
    throw std::invalid_argument("tabular record must have exactly one feature");
  const double raw = features[0];
  const int id = static_cast<int>(std::lround(raw));
  if (std::abs(raw - id) > 1e-9 || id < 0 || id >= n_states)
    throw std::invalid_argument("unknown state id in tabular record");
  return id;
}
}  // namespace detail

// One Bellman update on the (s, f) pair of the record:
//   q(s,f) <- (1-alpha) q(s,f) + alpha (r + gamma max_f' q(s',f'))
// Terminal records bootstrap from nothing.
inline void tabular_q_update(QTable& q, const EpisodeRecord& rec, double alpha,
                             double gamma) {
  const int s = detail::state_id_from_features(rec.state_features, q.n_states());
  if (rec.action_index < 0 || rec.action_index >= q.n_actions())
    throw std::invalid_argument("unknown action index in tabular record");
  double target = rec.reward;
  if (!rec.terminal) {
    const int s2 =
        detail::state_id_from_features(rec.next_state_features, q.n_states());
    target += gamma * q.max_value(s2);
  }
  double& cell = q.at(s, rec.action_index);
  cell = (1.0 - alpha) * cell + alpha * target;
}

}  // namespace freqctrl::learner
