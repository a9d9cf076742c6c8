#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace freqctrl {

// Errors that should surface as exit code 3 at the CLI; everything else
// thrown by the library is a data/contract violation (exit code 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Cohort { High = 0, Medium = 1, Low = 2 };

inline const char* to_string(Cohort c) {
  switch (c) {
    case Cohort::High: return "High";
    case Cohort::Medium: return "Medium";
    default: return "Low";
  }
}

inline Cohort cohort_from_string(const std::string& s) {
  if (s == "High") return Cohort::High;
  if (s == "Medium") return Cohort::Medium;
  if (s == "Low") return Cohort::Low;
  throw std::invalid_argument("unknown cohort: " + s);
}

struct FrequencyAction {
  int index = 0;  // position in the ordered action set
  int value = 0;  // deliveries per day
};

// Finite ordered set of candidate delivery frequencies. At least three
// values are required; with only two, the effective-factor selection
// degenerates to a threshold on a single gap.
class ActionSet {
 public:
  explicit ActionSet(std::vector<int> values) : values_(std::move(values)) {
    if (values_.size() < 3)
      throw std::invalid_argument("action set needs at least 3 frequencies");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (values_[i] < 0)
        throw std::invalid_argument("frequencies must be non-negative");
      if (i > 0 && values_[i] <= values_[i - 1])
        throw std::invalid_argument("frequencies must be strictly increasing");
    }
  }

  static ActionSet default_set() { return ActionSet({0, 1, 2, 3, 4, 5}); }

  int size() const { return static_cast<int>(values_.size()); }

  FrequencyAction at(int index) const {
    if (index < 0 || index >= size())
      throw std::invalid_argument("action index out of range: " +
                                  std::to_string(index));
    return FrequencyAction{index, values_[static_cast<std::size_t>(index)]};
  }

  int max_value() const { return values_.back(); }

  const std::vector<int>& values() const { return values_; }

 private:
  std::vector<int> values_;
};

struct RewardParams {
  double epsilon = 0.005;  // per-delivery penalty weight
  std::vector<double> metric_weights{1.0, 1.0};
};

// R(s, f) = <metric_weights, metric_components> - epsilon * f
inline double reward(std::span<const double> metric_components,
                     const RewardParams& params, const FrequencyAction& f) {
  if (metric_components.size() != params.metric_weights.size())
    throw std::invalid_argument("metric component count does not match weights");
  double m = 0.0;
  for (std::size_t i = 0; i < metric_components.size(); ++i)
    m += params.metric_weights[i] * metric_components[i];
  return m - params.epsilon * static_cast<double>(f.value);
}

struct EpisodeRecord {
  std::string user_id;
  int step = 0;
  std::vector<double> state_features;
  int action_index = 0;
  double reward = 0.0;
  std::vector<double> next_state_features;
  bool terminal = false;
};

// Checks one user's episode: contiguous steps from 0, exactly the final
// record terminal, and next_state/state chaining. Violations are data,
// not errors.
inline std::vector<std::string> validate_episode(
    std::span<const EpisodeRecord> records) {
  std::vector<std::string> violations;
  if (records.empty()) {
    violations.push_back("empty episode");
    return violations;
  }
  int terminals = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EpisodeRecord& rec = records[i];
    if (rec.step != static_cast<int>(i)) {
      violations.push_back("non-contiguous steps at position " +
                           std::to_string(i));
      break;
    }
    if (rec.terminal) {
      ++terminals;
      if (i + 1 != records.size())
        violations.push_back("terminal before final step at step " +
                             std::to_string(rec.step));
    }
    if (i + 1 < records.size() &&
        rec.next_state_features != records[i + 1].state_features)
      violations.push_back("state chain mismatch between steps " +
                           std::to_string(rec.step) + " and " +
                           std::to_string(records[i + 1].step));
  }
  if (terminals == 0) violations.push_back("missing terminal");
  if (terminals > 1) violations.push_back("multiple terminals");
  return violations;
}

struct DayOutcome {
  int day = 0;
  long long delivery_volume = 0;
  std::vector<double> metric_totals;          // one entry per component metric
  std::vector<long long> frequency_histogram;  // count per action index
};

}  // namespace freqctrl
