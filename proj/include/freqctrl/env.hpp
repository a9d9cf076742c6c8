#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "freqctrl/core.hpp"
#include "freqctrl/rng.hpp"
#include "json.hpp"

namespace freqctrl::env {

inline constexpr int kFeatureCount = 8;
inline constexpr int kMetricCount = 2;

struct UserState {
  double theta = 0.5;             // latent engagement propensity, fixed
  double phi = 0.0;               // fatigue in [0,1]
  bool active = true;
  double activation_credit = 0.0;
  Cohort cohort = Cohort::Medium;
  std::vector<int> history;       // last-W chosen frequency values, newest last
};

struct DriftWindow {
  int first_day = 0;
  int last_day = 0;  // inclusive
  double multiplier = 1.0;
};

struct DriftSpec {
  std::vector<DriftWindow> schedule;
  std::array<double, 7> weekly_pattern{1, 1, 1, 1, 1, 1, 1};

  double multiplier(int day) const {
    double m = weekly_pattern[static_cast<std::size_t>(day % 7)];
    for (const DriftWindow& w : schedule)
      if (day >= w.first_day && day <= w.last_day) m *= w.multiplier;
    if (m <= 0.0) throw std::invalid_argument("drift multiplier must be > 0");
    return m;
  }
};

struct EnvParams {
  double lambda = 0.5;               // exposure saturation rate
  double rho = 0.8;                  // fatigue persistence
  double kappa = 0.3;                // fatigue gain
  double churn_threshold = 0.95;
  double churn_prob = 0.5;
  double activation_threshold = 6.0;
  double dormant_fraction = 0.0;
  int history_window = 7;
  int population_size = 0;
  std::uint64_t seed = 0;
};

inline void validate(const EnvParams& p) {
  if (p.lambda <= 0) throw std::invalid_argument("lambda must be > 0");
  if (p.rho < 0 || p.rho >= 1) throw std::invalid_argument("rho must be in [0,1)");
  if (p.kappa < 0) throw std::invalid_argument("kappa must be >= 0");
  if (p.churn_prob < 0 || p.churn_prob > 1)
    throw std::invalid_argument("churn_prob must be in [0,1]");
  if (p.activation_threshold <= 0)
    throw std::invalid_argument("activation_threshold must be > 0");
  if (p.dormant_fraction < 0 || p.dormant_fraction > 1)
    throw std::invalid_argument("dormant_fraction must be in [0,1]");
  if (p.history_window < 1)
    throw std::invalid_argument("history_window must be >= 1");
}

struct Population {
  EnvParams params;
  std::vector<UserState> users;
};

namespace detail {
// Substream tags so that draws for one purpose never shift another.
inline constexpr std::uint64_t kThetaStream = 0x01;
inline constexpr std::uint64_t kDormantStream = 0x02;
inline constexpr std::uint64_t kStepStream = 0x03;
}  // namespace detail

// Deterministic given params.seed. theta ~ U[0,1) per user; cohorts are the
// theta terciles within the drawn population (top third High). phi starts at
// 0 and a dormant_fraction of users starts inactive.
inline Population init_population(const EnvParams& params) {
  validate(params);
  if (params.population_size < 1)
    throw std::invalid_argument("population_size must be >= 1");
  const std::size_t n = static_cast<std::size_t>(params.population_size);

  Population pop;
  pop.params = params;
  pop.users.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    UserState& u = pop.users[i];
    u.theta = Rng(derive_seed(params.seed, detail::kThetaStream, i)).uniform();
    u.active =
        !Rng(derive_seed(params.seed, detail::kDormantStream, i))
             .bernoulli(params.dormant_fraction);
  }

  // Tercile ranks by theta; ties broken by index so the split is total.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pop.users[a].theta != pop.users[b].theta)
      return pop.users[a].theta < pop.users[b].theta;
    return a < b;
  });
  const std::size_t low_end = n / 3;
  const std::size_t med_end = 2 * n / 3;
  for (std::size_t rank = 0; rank < n; ++rank) {
    Cohort c = rank < low_end    ? Cohort::Low
               : rank < med_end  ? Cohort::Medium
                                 : Cohort::High;
    pop.users[order[rank]].cohort = c;
  }
  return pop;
}

struct StepResult {
  UserState user;
  std::array<double, kMetricCount> metrics{0.0, 0.0};
};

// One simulated day for one user. Metrics accrue only while active; dormant
// users accumulate activation credit instead and come back once enough
// exposure has been delivered in total. Fatigue decays geometrically and
// grows with the normalized frequency; saturated fatigue risks churn.
inline StepResult step_user(const UserState& u, FrequencyAction f, int f_max,
                            const EnvParams& params, double day_multiplier,
                            Rng& rng) {
  if (day_multiplier <= 0)
    throw std::invalid_argument("day_multiplier must be > 0");
  StepResult res;
  res.user = u;
  UserState& next = res.user;
  const double fval = static_cast<double>(f.value);
  const double fnorm = fval / static_cast<double>(f_max);

  if (u.active) {
    const double exposure = 1.0 - std::exp(-params.lambda * fval);
    res.metrics[0] = u.theta * exposure * (1.0 - u.phi) * day_multiplier;
    res.metrics[1] = u.theta * std::min(1.0, fnorm) * (1.0 - u.phi * u.phi) *
                     day_multiplier;
  } else {
    next.activation_credit += fval;
    if (next.activation_credit >= params.activation_threshold) {
      next.active = true;
      next.activation_credit = 0.0;
    }
  }

  next.phi = std::clamp(params.rho * u.phi + params.kappa * fnorm, 0.0, 1.0);

  if (next.active && next.phi >= params.churn_threshold &&
      rng.bernoulli(params.churn_prob)) {
    next.active = false;
    next.activation_credit = 0.0;
  }

  next.history.push_back(f.value);
  const std::size_t w = static_cast<std::size_t>(params.history_window);
  if (next.history.size() > w)
    next.history.erase(next.history.begin(),
                       next.history.end() - static_cast<long>(w));
  return res;
}

// Observable feature vector; theta stays latent so the learner has to
// generalize from behavior. Layout:
//   [phi, active, hist_mean/f_max, hist_std/f_max,
//    onehot(High), onehot(Medium), onehot(Low), credit/threshold]
inline std::vector<double> features(const UserState& u, int f_max,
                                    double activation_threshold) {
  std::vector<double> x(kFeatureCount, 0.0);
  x[0] = u.phi;
  x[1] = u.active ? 1.0 : 0.0;
  if (!u.history.empty()) {
    double mean = 0.0;
    for (int v : u.history) mean += static_cast<double>(v);
    mean /= static_cast<double>(u.history.size());
    double var = 0.0;
    for (int v : u.history) {
      const double d = static_cast<double>(v) - mean;
      var += d * d;
    }
    var /= static_cast<double>(u.history.size());
    x[2] = mean / static_cast<double>(f_max);
    x[3] = std::sqrt(var) / static_cast<double>(f_max);
  }
  x[4 + static_cast<int>(u.cohort)] = 1.0;
  x[7] = std::min(1.0, u.activation_credit / activation_threshold);
  return x;
}

inline Cohort cohort_from_features(std::span<const double> x) {
  if (x[4] > 0.5) return Cohort::High;
  if (x[5] > 0.5) return Cohort::Medium;
  return Cohort::Low;
}

using DecideFn = std::function<FrequencyAction(std::span<const double>)>;

struct DayResult {
  DayOutcome outcome;
  std::vector<int> user_action_values;  // chosen f.value per user
  std::array<long long, 3> cohort_volume{0, 0, 0};
  std::array<std::array<double, kMetricCount>, 3> cohort_metrics{};
  std::vector<EpisodeRecord> fragments;  // step/terminal filled by the caller
};

// Advances every user one day under the decision function and aggregates the
// day outcome. Deterministic given (pop, day, params.seed): each user draws
// from an independent substream derived from those three.
inline DayResult run_day(Population& pop, const DecideFn& decide,
                         const ActionSet& actions, const DriftSpec& drift,
                         const RewardParams& reward_params, int day,
                         bool want_fragments = true) {
  if (day < 0) throw std::invalid_argument("day must be >= 0");
  const double mult = drift.multiplier(day);
  const int f_max = actions.max_value();

  DayResult res;
  res.outcome.day = day;
  res.outcome.metric_totals.assign(kMetricCount, 0.0);
  res.outcome.frequency_histogram.assign(actions.size(), 0);
  res.user_action_values.resize(pop.users.size());
  if (want_fragments) res.fragments.reserve(pop.users.size());

  for (std::size_t i = 0; i < pop.users.size(); ++i) {
    UserState& u = pop.users[i];
    std::vector<double> x =
        features(u, f_max, pop.params.activation_threshold);
    const FrequencyAction f = decide(x);
    if (f.index < 0 || f.index >= actions.size())
      throw std::invalid_argument("decision outside the action set");

    Rng rng(derive_seed(pop.params.seed, detail::kStepStream,
                        static_cast<std::uint64_t>(day), i));
    StepResult step = step_user(u, f, f_max, pop.params, mult, rng);
    const double r = reward(step.metrics, reward_params, f);

    res.outcome.delivery_volume += f.value;
    for (int m = 0; m < kMetricCount; ++m)
      res.outcome.metric_totals[m] += step.metrics[m];
    ++res.outcome.frequency_histogram[f.index];
    res.user_action_values[i] = f.value;
    const int c = static_cast<int>(u.cohort);
    res.cohort_volume[c] += f.value;
    for (int m = 0; m < kMetricCount; ++m)
      res.cohort_metrics[c][m] += step.metrics[m];

    if (want_fragments) {
      EpisodeRecord rec;
      rec.user_id = "u" + std::to_string(i);
      rec.step = day;
      rec.state_features = std::move(x);
      rec.action_index = f.index;
      rec.reward = r;
      rec.next_state_features =
          features(step.user, f_max, pop.params.activation_threshold);
      rec.terminal = false;
      res.fragments.push_back(std::move(rec));
    }

    u = std::move(step.user);
  }
  return res;
}

// --- population snapshots (newline-delimited JSON) ---

inline constexpr int kSnapshotVersion = 1;

inline void to_json(nlohmann::json& j, const EnvParams& p) {
  j = nlohmann::json{{"lambda", p.lambda},
                     {"rho", p.rho},
                     {"kappa", p.kappa},
                     {"churn_threshold", p.churn_threshold},
                     {"churn_prob", p.churn_prob},
                     {"activation_threshold", p.activation_threshold},
                     {"dormant_fraction", p.dormant_fraction},
                     {"history_window", p.history_window},
                     {"population_size", p.population_size},
                     {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, EnvParams& p) {
  EnvParams defaults;
  p.lambda = j.value("lambda", defaults.lambda);
  p.rho = j.value("rho", defaults.rho);
  p.kappa = j.value("kappa", defaults.kappa);
  p.churn_threshold = j.value("churn_threshold", defaults.churn_threshold);
  p.churn_prob = j.value("churn_prob", defaults.churn_prob);
  p.activation_threshold =
      j.value("activation_threshold", defaults.activation_threshold);
  p.dormant_fraction = j.value("dormant_fraction", defaults.dormant_fraction);
  p.history_window = j.value("history_window", defaults.history_window);
  p.population_size = j.value("population_size", defaults.population_size);
  p.seed = j.value("seed", defaults.seed);
}

inline void save_population(const std::string& path, const Population& pop) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open population snapshot for writing: " + path);
  nlohmann::json head{{"format_version", kSnapshotVersion},
                      {"params", pop.params}};
  out << head.dump() << '\n';
  for (const UserState& u : pop.users) {
    nlohmann::json j{{"theta", u.theta},
                     {"phi", u.phi},
                     {"active", u.active},
                     {"activation_credit", u.activation_credit},
                     {"cohort", to_string(u.cohort)},
                     {"history", u.history}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing population snapshot: " + path);
}

inline Population load_population(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open population snapshot: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("population snapshot has no header: " + path);
  const nlohmann::json head = nlohmann::json::parse(line);
  if (head.at("format_version").get<int>() != kSnapshotVersion)
    throw std::invalid_argument("unsupported snapshot version in " + path);
  Population pop;
  pop.params = head.at("params").get<EnvParams>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    UserState u;
    u.theta = j.at("theta").get<double>();
    u.phi = j.at("phi").get<double>();
    u.active = j.at("active").get<bool>();
    u.activation_credit = j.at("activation_credit").get<double>();
    u.cohort = cohort_from_string(j.at("cohort").get<std::string>());
    u.history = j.at("history").get<std::vector<int>>();
    pop.users.push_back(std::move(u));
  }
  return pop;
}

}  // namespace freqctrl::env
