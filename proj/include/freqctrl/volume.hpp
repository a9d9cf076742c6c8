#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <stdexcept>
#include <utility>

#include "freqctrl/core.hpp"
#include "freqctrl/policy.hpp"

namespace freqctrl::volume {

struct PidParams {
  double kp = 0.2;
  double ki = 0.05;
  double kd = 0.0;
  double integral_limit = 2.0;  // anti-windup clamp on the error integral
  int control_interval = 1;     // ticks between controller runs
};

inline void validate(const PidParams& p) {
  if (p.integral_limit <= 0)
    throw std::invalid_argument("integral_limit must be > 0");
  if (p.control_interval < 1)
    throw std::invalid_argument("control_interval must be >= 1");
}

struct PidState {
  double integral = 0.0;
  double last_error = 0.0;
  double last_ef = 1.0;
};

// Incremental PID step on the normalized tracking error
//   e = (target - actual) / target
// moving the effective factor by kp*e + ki*integral + kd*(e - last_error)
// and clamping into [0,1]. Volume above target lowers EF, below raises it.
inline std::pair<PidState, double> pid_step(const PidState& st,
                                            const PidParams& p, double target,
                                            double actual) {
  validate(p);
  if (target <= 0) throw std::invalid_argument("target volume must be > 0");
  const double e = (target - actual) / target;
  PidState next;
  next.integral =
      std::clamp(st.integral + e, -p.integral_limit, p.integral_limit);
  next.last_error = e;
  const double ef = std::clamp(
      st.last_ef + p.kp * e + p.ki * next.integral + p.kd * (e - st.last_error),
      0.0, 1.0);
  next.last_ef = ef;
  return {next, ef};
}

// Append-only record of observed delivery volume per tick, bounded to the
// most recent entries.
class VolumeMonitor {
 public:
  explicit VolumeMonitor(double target_volume, std::size_t capacity = 64)
      : target_(target_volume), capacity_(capacity) {
    if (target_ < 0) throw std::invalid_argument("target volume must be >= 0");
    if (capacity_ < 1) throw std::invalid_argument("monitor capacity must be >= 1");
  }

  void record(long long tick, double volume) {
    if (!entries_.empty() && tick <= entries_.back().first)
      throw std::invalid_argument("volume ticks must be strictly increasing");
    entries_.emplace_back(tick, volume);
    if (entries_.size() > capacity_) entries_.pop_front();
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  double target() const { return target_; }
  std::pair<long long, double> latest() const {
    if (entries_.empty()) throw std::invalid_argument("volume monitor is empty");
    return entries_.back();
  }
  const std::deque<std::pair<long long, double>>& entries() const {
    return entries_;
  }

 private:
  double target_;
  std::size_t capacity_;
  std::deque<std::pair<long long, double>> entries_;
};

// One controller run against the latest observed volume; the resulting EF is
// written into a copy of the config (readers swap whole configs, never a
// partial update).
inline std::pair<PidState, policy::EfConfig> control_loop_tick(
    const VolumeMonitor& mon, const PidState& st, const PidParams& p,
    const policy::EfConfig& cfg) {
  const auto [tick, actual] = mon.latest();
  (void)tick;
  auto [next, ef] = pid_step(st, p, mon.target(), actual);
  policy::EfConfig out = cfg;
  out.ef = ef;
  return {next, out};
}

// Per-cohort variant: each cohort with a monitor gets its own controller and
// its own EF override.
inline std::pair<std::map<Cohort, PidState>, policy::EfConfig>
control_loop_tick(const std::map<Cohort, VolumeMonitor>& monitors,
                  const std::map<Cohort, PidState>& states,
                  const PidParams& p, const policy::EfConfig& cfg) {
  std::map<Cohort, PidState> next_states = states;
  policy::EfConfig out = cfg;
  for (const auto& [cohort, mon] : monitors) {
    PidState st;
    const auto it = states.find(cohort);
    if (it != states.end()) {
      st = it->second;
    } else {
      st.last_ef = cfg.resolve(cohort);
    }
    const auto [tick, actual] = mon.latest();
    (void)tick;
    auto [next, ef] = pid_step(st, p, mon.target(), actual);
    next_states[cohort] = next;
    out.per_cohort[cohort] = ef;
  }
  return {next_states, out};
}

}  // namespace freqctrl::volume
