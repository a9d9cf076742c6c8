#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "freqctrl/core.hpp"
#include "freqctrl/csv.hpp"
#include "freqctrl/env.hpp"
#include "freqctrl/episode_log.hpp"
#include "freqctrl/learner.hpp"
#include "freqctrl/policy.hpp"
#include "freqctrl/volume.hpp"
#include "json.hpp"

namespace freqctrl::experiment {

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
  ActionSet actions = ActionSet::default_set();
  env::EnvParams env;  // population_size is the evaluation population
  int collection_population = 5000;
  RewardParams reward;
  learner::Hyperparams hyper;
  policy::EfConfig ef;
  double target_volume = 0.0;
  volume::PidParams pid;
  env::DriftSpec drift;
  int horizon_days = 30;
  int collection_days = 30;
  int episode_length = 30;
  double explore_prob = 1.0;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "run";
};

inline void validate(const ExperimentConfig& cfg) {
  env::validate(cfg.env);
  learner::validate(cfg.hyper);
  volume::validate(cfg.pid);
  if (cfg.horizon_days < 1)
    throw std::invalid_argument("horizon_days must be >= 1");
  if (cfg.collection_days < 1)
    throw std::invalid_argument("collection_days must be >= 1");
  if (cfg.episode_length < 1)
    throw std::invalid_argument("episode_length must be >= 1");
  if (cfg.explore_prob < 0 || cfg.explore_prob > 1)
    throw std::invalid_argument("explore_prob must be in [0,1]");
  if (cfg.seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
  if (cfg.collection_population < 1)
    throw std::invalid_argument("collection_population must be >= 1");
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json per_cohort = nlohmann::json::object();
  for (const auto& [c, v] : cfg.ef.per_cohort) per_cohort[to_string(c)] = v;
  nlohmann::json schedule = nlohmann::json::array();
  for (const env::DriftWindow& w : cfg.drift.schedule)
    schedule.push_back({{"first_day", w.first_day},
                        {"last_day", w.last_day},
                        {"multiplier", w.multiplier}});
  return nlohmann::json{
      {"format_version", kConfigVersion},
      {"actions", cfg.actions.values()},
      {"env", cfg.env},
      {"collection_population", cfg.collection_population},
      {"reward",
       {{"epsilon", cfg.reward.epsilon},
        {"metric_weights", cfg.reward.metric_weights}}},
      {"hyper", cfg.hyper},
      {"ef", {{"ef", cfg.ef.ef}, {"per_cohort", per_cohort}}},
      {"target_volume", cfg.target_volume},
      {"pid",
       {{"kp", cfg.pid.kp},
        {"ki", cfg.pid.ki},
        {"kd", cfg.pid.kd},
        {"integral_limit", cfg.pid.integral_limit},
        {"control_interval", cfg.pid.control_interval}}},
      {"drift",
       {{"weekly_pattern", cfg.drift.weekly_pattern}, {"schedule", schedule}}},
      {"horizon_days", cfg.horizon_days},
      {"collection_days", cfg.collection_days},
      {"episode_length", cfg.episode_length},
      {"explore_prob", cfg.explore_prob},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.value("format_version", kConfigVersion) != kConfigVersion)
    throw std::invalid_argument("unsupported config format_version");
  if (j.contains("actions"))
    cfg.actions = ActionSet(j.at("actions").get<std::vector<int>>());
  if (j.contains("env")) cfg.env = j.at("env").get<env::EnvParams>();
  cfg.collection_population =
      j.value("collection_population", cfg.collection_population);
  if (j.contains("reward")) {
    const nlohmann::json& r = j.at("reward");
    cfg.reward.epsilon = r.value("epsilon", cfg.reward.epsilon);
    cfg.reward.metric_weights =
        r.value("metric_weights", cfg.reward.metric_weights);
  }
  if (j.contains("hyper"))
    cfg.hyper = j.at("hyper").get<learner::Hyperparams>();
  if (j.contains("ef")) {
    const nlohmann::json& e = j.at("ef");
    cfg.ef.ef = e.value("ef", cfg.ef.ef);
    if (e.contains("per_cohort"))
      for (const auto& [key, value] : e.at("per_cohort").items())
        cfg.ef.per_cohort[cohort_from_string(key)] = value.get<double>();
  }
  cfg.target_volume = j.value("target_volume", cfg.target_volume);
  if (j.contains("pid")) {
    const nlohmann::json& p = j.at("pid");
    cfg.pid.kp = p.value("kp", cfg.pid.kp);
    cfg.pid.ki = p.value("ki", cfg.pid.ki);
    cfg.pid.kd = p.value("kd", cfg.pid.kd);
    cfg.pid.integral_limit = p.value("integral_limit", cfg.pid.integral_limit);
    cfg.pid.control_interval =
        p.value("control_interval", cfg.pid.control_interval);
  }
  if (j.contains("drift")) {
    const nlohmann::json& d = j.at("drift");
    if (d.contains("weekly_pattern")) {
      const auto pattern = d.at("weekly_pattern").get<std::vector<double>>();
      if (pattern.size() != 7)
        throw std::invalid_argument("weekly_pattern needs 7 multipliers");
      std::copy(pattern.begin(), pattern.end(),
                cfg.drift.weekly_pattern.begin());
    }
    if (d.contains("schedule"))
      for (const nlohmann::json& w : d.at("schedule"))
        cfg.drift.schedule.push_back(
            env::DriftWindow{w.at("first_day").get<int>(),
                             w.at("last_day").get<int>(),
                             w.at("multiplier").get<double>()});
  }
  cfg.horizon_days = j.value("horizon_days", cfg.horizon_days);
  cfg.collection_days = j.value("collection_days", cfg.collection_days);
  cfg.episode_length = j.value("episode_length", cfg.episode_length);
  cfg.explore_prob = j.value("explore_prob", cfg.explore_prob);
  cfg.seeds = j.value("seeds", cfg.seeds);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open config for writing: " + path);
  out << config_to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("failed writing config: " + path);
}

// --- evaluation modes ---

enum class Mode { Greedy, EfFixed, EfPid, FixedFrequency };

struct ModeSpec {
  Mode mode = Mode::Greedy;
  int fixed_index = 0;
};

inline ModeSpec parse_mode(const std::string& text) {
  if (text == "greedy") return {Mode::Greedy, 0};
  if (text == "ef_fixed") return {Mode::EfFixed, 0};
  if (text == "ef_pid") return {Mode::EfPid, 0};
  for (const char* prefix : {"fixed_frequency:", "fixed_frequency_"}) {
    const std::string p(prefix);
    if (text.rfind(p, 0) == 0) {
      std::size_t used = 0;
      const std::string digits = text.substr(p.size());
      const int k = std::stoi(digits, &used);
      if (used == digits.size() && k >= 0) return {Mode::FixedFrequency, k};
    }
  }
  throw std::invalid_argument(
      "unknown mode '" + text +
      "' (expected greedy | ef_fixed | ef_pid | fixed_frequency:<k>)");
}

inline std::string mode_name(const ModeSpec& m) {
  switch (m.mode) {
    case Mode::Greedy: return "greedy";
    case Mode::EfFixed: return "ef_fixed";
    case Mode::EfPid: return "ef_pid";
    default: return "fixed_frequency_" + std::to_string(m.fixed_index);
  }
}

namespace detail {

inline constexpr std::uint64_t kCollectPopTag = 0xc011;
inline constexpr std::uint64_t kEvalPopTag = 0xe7a1;
inline constexpr std::uint64_t kExploreTag = 0xde5c;

inline std::string seed_log_path(const std::string& dir, std::uint64_t seed) {
  return dir + "/episodes_seed" + std::to_string(seed) + ".jsonl";
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace detail

// One-sided sign test: probability of at least `wins` successes out of `n`
// fair coin flips.
inline double sign_test_p_value(int wins, int n) {
  if (n < 1) throw std::invalid_argument("sign test needs n >= 1");
  if (wins < 0) wins = 0;
  double p = 0.0;
  for (int j = wins; j <= n; ++j) {
    const double log_c = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                         std::lgamma(n - j + 1.0);
    p += std::exp(log_c - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

// --- collect ---

// Simulates the data-collection traffic segment: a dedicated population run
// under the explore policy, chunked into fixed-length episodes. Only
// complete episodes are written. One log file per seed.
inline std::vector<std::string> collect(const ExperimentConfig& cfg) {
  validate(cfg);
  detail::ensure_dir(cfg.output_dir);
  const int full_days =
      cfg.episode_length * (cfg.collection_days / cfg.episode_length);
  std::vector<std::string> paths;

  for (const std::uint64_t seed : cfg.seeds) {
    env::EnvParams params = cfg.env;
    params.population_size = cfg.collection_population;
    params.seed = derive_seed(seed, detail::kCollectPopTag);
    env::Population pop = env::init_population(params);

    // Q-values only matter when explore_prob < 1; a freshly initialized net
    // stands in for the pre-launch scorer.
    learner::QNetwork net = learner::initial_network(
        env::kFeatureCount, cfg.hyper, cfg.actions.size());
    Rng explore_rng(derive_seed(seed, detail::kExploreTag));
    const env::DecideFn decide = [&](std::span<const double> x) {
      const std::vector<double> q = net.forward(x);
      return cfg.actions.at(policy::explore(q, cfg.explore_prob, explore_rng));
    };

    std::vector<EpisodeRecord> records;
    records.reserve(static_cast<std::size_t>(full_days) * pop.users.size());
    for (int day = 0; day < full_days; ++day) {
      env::DayResult dr = run_day(pop, decide, cfg.actions, cfg.drift,
                                  cfg.reward, day, true);
      const int step = day % cfg.episode_length;
      for (EpisodeRecord& rec : dr.fragments) {
        rec.step = step;
        rec.terminal = (step == cfg.episode_length - 1);
        records.push_back(std::move(rec));
      }
    }
    const std::string path = detail::seed_log_path(cfg.output_dir, seed);
    write_episode_log(path, records);
    paths.push_back(path);
  }
  return paths;
}

// --- train ---

struct TrainOutput {
  std::string checkpoint_path;
  std::string loss_curve_path;
  std::vector<double> losses;
};

inline TrainOutput train(const ExperimentConfig& cfg,
                         const std::string& log_path) {
  validate(cfg);
  detail::ensure_dir(cfg.output_dir);
  const std::vector<EpisodeRecord> log = read_episode_log(log_path);
  learner::TrainResult result =
      learner::train_from_log(log, cfg.hyper, cfg.actions.size());

  TrainOutput out;
  out.checkpoint_path = cfg.output_dir + "/checkpoint.json";
  out.loss_curve_path = cfg.output_dir + "/loss_curve.csv";
  learner::save_checkpoint(out.checkpoint_path, result.net, cfg.hyper);
  CsvWriter csv(out.loss_curve_path, {"step", "loss"});
  for (std::size_t i = 0; i < result.losses.size(); ++i)
    csv.row({std::to_string(i), format_double(result.losses[i])});
  csv.close();
  out.losses = std::move(result.losses);
  return out;
}

// --- evaluate ---

struct EfTraceRow {
  long long tick = 0;
  double target = 0.0;
  double actual = 0.0;
  double error = 0.0;
  double ef = 0.0;
};

struct SeedReport {
  std::uint64_t seed = 0;
  std::vector<DayOutcome> days;
  std::vector<double> day_rewards;  // population reward per day
  double total_volume = 0.0;
  std::array<double, env::kMetricCount> total_components{0.0, 0.0};
  double total_weighted_metrics = 0.0;
  std::optional<double> efficiency;  // undefined when volume is zero
  std::array<double, 3> cohort_volume{0, 0, 0};
  std::array<std::array<double, env::kMetricCount>, 3> cohort_components{};
  std::vector<double> per_user_freq_std;
  double const_freq_fraction = 0.0;
  std::vector<EfTraceRow> ef_trace;
};

struct EvaluationReport {
  ModeSpec mode;
  std::vector<SeedReport> seeds;
};

namespace detail {

inline nlohmann::json seed_report_to_json(const SeedReport& r) {
  nlohmann::json days = nlohmann::json::array();
  for (std::size_t d = 0; d < r.days.size(); ++d) {
    const DayOutcome& o = r.days[d];
    days.push_back({{"day", o.day},
                    {"volume", o.delivery_volume},
                    {"metrics", o.metric_totals},
                    {"histogram", o.frequency_histogram},
                    {"reward", r.day_rewards[d]}});
  }
  nlohmann::json cohorts = nlohmann::json::object();
  for (int c = 0; c < 3; ++c) {
    cohorts[to_string(static_cast<Cohort>(c))] = {
        {"volume", r.cohort_volume[static_cast<std::size_t>(c)]},
        {"metrics", r.cohort_components[static_cast<std::size_t>(c)]}};
  }
  nlohmann::json j{{"seed", r.seed},
                   {"total_volume", r.total_volume},
                   {"metric_totals", r.total_components},
                   {"total_weighted_metrics", r.total_weighted_metrics},
                   {"const_freq_fraction", r.const_freq_fraction},
                   {"cohorts", cohorts},
                   {"days", days}};
  j["efficiency"] =
      r.efficiency ? nlohmann::json(*r.efficiency) : nlohmann::json(nullptr);
  if (!r.ef_trace.empty()) {
    std::vector<double> efs;
    for (const EfTraceRow& row : r.ef_trace) efs.push_back(row.ef);
    j["ef_summary"] = {{"min", *std::min_element(efs.begin(), efs.end())},
                       {"p25", quantile(efs, 0.25)},
                       {"p50", quantile(efs, 0.50)},
                       {"p75", quantile(efs, 0.75)},
                       {"max", *std::max_element(efs.begin(), efs.end())}};
  }
  return j;
}

inline void write_seed_csvs(const std::string& dir, const SeedReport& r,
                            const ActionSet& actions) {
  ensure_dir(dir);
  {
    CsvWriter csv(dir + "/timeseries.csv",
                  {"day", "volume", "metric1", "metric2"});
    for (const DayOutcome& o : r.days)
      csv.row({std::to_string(o.day), std::to_string(o.delivery_volume),
               format_double(o.metric_totals[0]),
               format_double(o.metric_totals[1])});
    csv.close();
  }
  {
    std::vector<std::string> header{"day"};
    for (int v : actions.values()) header.push_back("f" + std::to_string(v));
    CsvWriter csv(dir + "/freq_dist.csv", header);
    for (const DayOutcome& o : r.days) {
      std::vector<std::string> cells{std::to_string(o.day)};
      for (long long c : o.frequency_histogram)
        cells.push_back(std::to_string(c));
      csv.row(cells);
    }
    csv.close();
  }
  {
    CsvWriter csv(dir + "/per_user_freq_std.csv", {"user_id", "std"});
    for (std::size_t i = 0; i < r.per_user_freq_std.size(); ++i)
      csv.row({"u" + std::to_string(i), format_double(r.per_user_freq_std[i])});
    csv.close();
  }
  if (!r.ef_trace.empty()) {
    CsvWriter csv(dir + "/ef_trace.csv",
                  {"tick", "target", "actual", "error", "ef"});
    for (const EfTraceRow& row : r.ef_trace)
      csv.row({std::to_string(row.tick), format_double(row.target),
               format_double(row.actual), format_double(row.error),
               format_double(row.ef)});
    csv.close();
  }
}

}  // namespace detail

// Runs the policy for horizon_days over a fresh evaluation population per
// seed. In ef_pid mode the controller adjusts EF from the recorded volume at
// tick boundaries; the updated EF applies from the next day.
inline EvaluationReport evaluate(const ExperimentConfig& cfg,
                                 const std::string& checkpoint_path,
                                 const ModeSpec& mode) {
  validate(cfg);
  learner::QNetwork net = learner::load_checkpoint(checkpoint_path);
  if (net.n_actions() != cfg.actions.size())
    throw std::invalid_argument("checkpoint action count does not match config");
  if (net.input_dim() != env::kFeatureCount)
    throw std::invalid_argument("checkpoint input width does not match features");
  if (mode.mode == Mode::FixedFrequency &&
      (mode.fixed_index < 0 || mode.fixed_index >= cfg.actions.size()))
    throw std::invalid_argument("fixed_frequency index outside the action set");
  if (mode.mode == Mode::EfPid && cfg.target_volume <= 0)
    throw std::invalid_argument("ef_pid mode needs target_volume > 0");

  const std::string mode_dir = cfg.output_dir + "/eval_" + mode_name(mode);
  detail::ensure_dir(mode_dir);

  EvaluationReport report;
  report.mode = mode;

  for (const std::uint64_t seed : cfg.seeds) {
    env::EnvParams params = cfg.env;
    params.seed = derive_seed(seed, detail::kEvalPopTag);
    env::Population pop = env::init_population(params);
    const std::size_t n_users = pop.users.size();

    policy::EfConfig ef_live = cfg.ef;
    volume::PidState pid_state;
    pid_state.last_ef = ef_live.resolve(Cohort::Medium);
    volume::VolumeMonitor monitor(
        cfg.target_volume, static_cast<std::size_t>(cfg.horizon_days) + 1);

    const env::DecideFn decide = [&](std::span<const double> x) {
      if (mode.mode == Mode::FixedFrequency)
        return cfg.actions.at(mode.fixed_index);
      const std::vector<double> q = net.forward(x);
      if (mode.mode == Mode::Greedy) return cfg.actions.at(policy::greedy(q));
      const Cohort c = env::cohort_from_features(x);
      return cfg.actions.at(policy::ef_select(q, ef_live.resolve(c)));
    };

    SeedReport sr;
    sr.seed = seed;
    std::vector<long long> user_sum(n_users, 0);
    std::vector<long long> user_sumsq(n_users, 0);
    std::vector<int> user_min(n_users, 0);
    std::vector<int> user_max(n_users, 0);

    for (int day = 0; day < cfg.horizon_days; ++day) {
      env::DayResult dr = env::run_day(pop, decide, cfg.actions, cfg.drift,
                                       cfg.reward, day, false);
      double day_reward = 0.0;
      for (int m = 0; m < env::kMetricCount; ++m)
        day_reward +=
            cfg.reward.metric_weights[static_cast<std::size_t>(m)] *
            dr.outcome.metric_totals[static_cast<std::size_t>(m)];
      day_reward -= cfg.reward.epsilon *
                    static_cast<double>(dr.outcome.delivery_volume);

      sr.total_volume += static_cast<double>(dr.outcome.delivery_volume);
      for (int m = 0; m < env::kMetricCount; ++m) {
        sr.total_components[static_cast<std::size_t>(m)] +=
            dr.outcome.metric_totals[static_cast<std::size_t>(m)];
        sr.total_weighted_metrics +=
            cfg.reward.metric_weights[static_cast<std::size_t>(m)] *
            dr.outcome.metric_totals[static_cast<std::size_t>(m)];
      }
      for (int c = 0; c < 3; ++c) {
        sr.cohort_volume[static_cast<std::size_t>(c)] +=
            static_cast<double>(dr.cohort_volume[static_cast<std::size_t>(c)]);
        for (int m = 0; m < env::kMetricCount; ++m)
          sr.cohort_components[static_cast<std::size_t>(c)]
                              [static_cast<std::size_t>(m)] +=
              dr.cohort_metrics[static_cast<std::size_t>(c)]
                               [static_cast<std::size_t>(m)];
      }
      for (std::size_t i = 0; i < n_users; ++i) {
        const int v = dr.user_action_values[i];
        user_sum[i] += v;
        user_sumsq[i] += static_cast<long long>(v) * v;
        if (day == 0) {
          user_min[i] = user_max[i] = v;
        } else {
          user_min[i] = std::min(user_min[i], v);
          user_max[i] = std::max(user_max[i], v);
        }
      }

      monitor.record(day, static_cast<double>(dr.outcome.delivery_volume));
      if (mode.mode == Mode::EfPid && day % cfg.pid.control_interval == 0) {
        const double actual = static_cast<double>(dr.outcome.delivery_volume);
        auto [next_state, next_cfg] =
            volume::control_loop_tick(monitor, pid_state, cfg.pid, ef_live);
        pid_state = next_state;
        ef_live = next_cfg;
        sr.ef_trace.push_back(EfTraceRow{
            day, cfg.target_volume, actual,
            (cfg.target_volume - actual) / cfg.target_volume, ef_live.ef});
      }

      sr.day_rewards.push_back(day_reward);
      sr.days.push_back(std::move(dr.outcome));
    }

    const double n_days = static_cast<double>(cfg.horizon_days);
    std::size_t const_users = 0;
    sr.per_user_freq_std.resize(n_users);
    for (std::size_t i = 0; i < n_users; ++i) {
      if (user_min[i] == user_max[i]) {
        sr.per_user_freq_std[i] = 0.0;
        ++const_users;
        continue;
      }
      const double mean = static_cast<double>(user_sum[i]) / n_days;
      const double var =
          std::max(0.0, static_cast<double>(user_sumsq[i]) / n_days - mean * mean);
      sr.per_user_freq_std[i] = std::sqrt(var);
    }
    sr.const_freq_fraction =
        static_cast<double>(const_users) / static_cast<double>(n_users);
    if (sr.total_volume > 0)
      sr.efficiency = sr.total_weighted_metrics / sr.total_volume;

    detail::write_seed_csvs(mode_dir + "/seed" + std::to_string(seed), sr,
                            cfg.actions);
    report.seeds.push_back(std::move(sr));
  }

  // Mode-level report: per-seed summaries plus aggregate totals.
  nlohmann::json seeds_json = nlohmann::json::array();
  double agg_volume = 0.0;
  double agg_weighted = 0.0;
  for (const SeedReport& sr : report.seeds) {
    seeds_json.push_back(detail::seed_report_to_json(sr));
    agg_volume += sr.total_volume;
    agg_weighted += sr.total_weighted_metrics;
  }
  nlohmann::json j{{"format_version", 1},
                   {"mode", mode_name(mode)},
                   {"seeds", seeds_json},
                   {"aggregate",
                    {{"total_volume", agg_volume},
                     {"total_weighted_metrics", agg_weighted},
                     {"efficiency", agg_volume > 0
                                        ? nlohmann::json(agg_weighted / agg_volume)
                                        : nlohmann::json(nullptr)}}}};
  std::ofstream out(mode_dir + "/report.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + mode_dir + "/report.json");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + mode_dir + "/report.json");
  return report;
}

// --- stability statistics (volume control diagnostics) ---

inline std::vector<long long> day_volumes(const SeedReport& sr) {
  std::vector<long long> v;
  for (const DayOutcome& o : sr.days) v.push_back(o.delivery_volume);
  return v;
}

// Largest single-day relative deviation from target over [from_day, end).
inline double peak_deviation_from_target(std::span<const long long> volumes,
                                         double target, int from_day = 0) {
  if (target <= 0) throw std::invalid_argument("target must be > 0");
  double peak = 0.0;
  for (std::size_t d = static_cast<std::size_t>(from_day); d < volumes.size();
       ++d)
    peak = std::max(
        peak, std::abs(static_cast<double>(volumes[d]) - target) / target);
  return peak;
}

// Largest relative deviation of the trailing-window mean volume from target,
// checked at every tick >= from_tick.
inline double max_trailing_mean_deviation(std::span<const long long> volumes,
                                          double target, int window,
                                          int from_tick) {
  if (target <= 0) throw std::invalid_argument("target must be > 0");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (from_tick < window - 1)
    throw std::invalid_argument("from_tick must cover a full window");
  double worst = 0.0;
  for (std::size_t t = static_cast<std::size_t>(from_tick); t < volumes.size();
       ++t) {
    double sum = 0.0;
    for (std::size_t d = t + 1 - static_cast<std::size_t>(window); d <= t; ++d)
      sum += static_cast<double>(volumes[d]);
    const double mean = sum / static_cast<double>(window);
    worst = std::max(worst, std::abs(mean - target) / target);
  }
  return worst;
}

// Discounted accumulated population reward over the horizon.
inline double discounted_return(std::span<const double> day_rewards,
                                double gamma) {
  double total = 0.0;
  double weight = 1.0;
  for (const double r : day_rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

// --- report ---

struct ModeSummary {
  std::string name;
  double total_volume = 0.0;
  std::array<double, env::kMetricCount> total_components{0.0, 0.0};
  double total_weighted_metrics = 0.0;
  std::optional<double> efficiency;
  std::vector<std::optional<double>> per_seed_efficiency;
  std::array<double, 3> cohort_volume{0, 0, 0};
  std::array<std::array<double, env::kMetricCount>, 3> cohort_components{};
  double const_freq_fraction_mean = 0.0;
  nlohmann::json ef_summary;  // present for ef_pid seeds
};

namespace detail {

inline ModeSummary summarize_mode_report(const std::string& name,
                                         const nlohmann::json& j) {
  ModeSummary s;
  s.name = name;
  double const_frac_sum = 0.0;
  std::vector<double> all_efs;
  for (const nlohmann::json& seed : j.at("seeds")) {
    s.total_volume += seed.at("total_volume").get<double>();
    const auto metrics = seed.at("metric_totals").get<std::vector<double>>();
    for (int m = 0; m < env::kMetricCount; ++m)
      s.total_components[static_cast<std::size_t>(m)] +=
          metrics[static_cast<std::size_t>(m)];
    s.total_weighted_metrics +=
        seed.at("total_weighted_metrics").get<double>();
    if (seed.at("efficiency").is_null())
      s.per_seed_efficiency.push_back(std::nullopt);
    else
      s.per_seed_efficiency.push_back(seed.at("efficiency").get<double>());
    const_frac_sum += seed.at("const_freq_fraction").get<double>();
    for (int c = 0; c < 3; ++c) {
      const nlohmann::json& cj =
          seed.at("cohorts").at(to_string(static_cast<Cohort>(c)));
      s.cohort_volume[static_cast<std::size_t>(c)] +=
          cj.at("volume").get<double>();
      const auto cm = cj.at("metrics").get<std::vector<double>>();
      for (int m = 0; m < env::kMetricCount; ++m)
        s.cohort_components[static_cast<std::size_t>(c)]
                           [static_cast<std::size_t>(m)] +=
            cm[static_cast<std::size_t>(m)];
    }
    if (seed.contains("ef_summary")) s.ef_summary = seed.at("ef_summary");
  }
  if (s.total_volume > 0)
    s.efficiency = s.total_weighted_metrics / s.total_volume;
  if (!j.at("seeds").empty())
    s.const_freq_fraction_mean =
        const_frac_sum / static_cast<double>(j.at("seeds").size());
  return s;
}

inline nlohmann::json optional_to_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json delta_pct(double ours, double base) {
  if (base == 0.0) return nullptr;
  return (ours - base) / base * 100.0;
}

}  // namespace detail

// Reads every eval_<mode>/report.json under run_dir and emits the combined
// artifact set: summary.json (totals and deltas of the primary mode against
// every baseline, with a one-sided sign test on per-seed efficiency),
// cohorts.csv (per-cohort deltas), and figure-style CSVs copied from the
// primary mode's first seed.
inline nlohmann::json report(const std::string& run_dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(run_dir)) throw IoError("run directory not found: " + run_dir);

  std::map<std::string, nlohmann::json> mode_reports;
  std::vector<std::string> missing;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("eval_", 0) != 0) continue;
    const fs::path rp = entry.path() / "report.json";
    if (!fs::exists(rp)) {
      missing.push_back(rp.string());
      continue;
    }
    std::ifstream in(rp);
    nlohmann::json j;
    in >> j;
    mode_reports[name.substr(5)] = std::move(j);
  }
  if (!missing.empty()) {
    std::string msg = "missing evaluation outputs:";
    for (const std::string& m : missing) msg += " " + m;
    throw IoError(msg);
  }
  if (mode_reports.empty())
    throw IoError("no eval_*/report.json found under " + run_dir);

  // Primary mode preference mirrors how the pipeline is meant to be read:
  // the controlled policy, then fixed-EF, then plain greedy.
  std::string primary;
  for (const char* pref : {"ef_pid", "ef_fixed", "greedy"})
    if (primary.empty() && mode_reports.count(pref)) primary = pref;
  if (primary.empty()) primary = mode_reports.begin()->first;

  std::map<std::string, ModeSummary> summaries;
  for (const auto& [name, j] : mode_reports)
    summaries[name] = detail::summarize_mode_report(name, j);
  const ModeSummary& prim = summaries.at(primary);

  nlohmann::json modes_json = nlohmann::json::object();
  for (const auto& [name, s] : summaries) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& e : s.per_seed_efficiency)
      per_seed.push_back(detail::optional_to_json(e));
    nlohmann::json mj{{"total_volume", s.total_volume},
                      {"metric_totals", s.total_components},
                      {"total_weighted_metrics", s.total_weighted_metrics},
                      {"efficiency", detail::optional_to_json(s.efficiency)},
                      {"per_seed_efficiency", per_seed},
                      {"const_freq_fraction_mean", s.const_freq_fraction_mean}};
    if (!s.ef_summary.is_null()) mj["ef_summary"] = s.ef_summary;
    modes_json[name] = std::move(mj);
  }

  nlohmann::json comparisons = nlohmann::json::object();
  for (const auto& [name, s] : summaries) {
    if (name == primary) continue;
    int wins = 0;
    int n = 0;
    for (std::size_t i = 0;
         i < std::min(prim.per_seed_efficiency.size(),
                      s.per_seed_efficiency.size());
         ++i) {
      ++n;
      const auto& ours = prim.per_seed_efficiency[i];
      const auto& theirs = s.per_seed_efficiency[i];
      if (ours && (!theirs || *ours > *theirs)) ++wins;
    }
    nlohmann::json cmp{
        {"volume_delta_pct", detail::delta_pct(prim.total_volume, s.total_volume)},
        {"metrics_delta_pct",
         detail::delta_pct(prim.total_weighted_metrics, s.total_weighted_metrics)},
        {"efficiency_delta_pct",
         (prim.efficiency && s.efficiency)
             ? detail::delta_pct(*prim.efficiency, *s.efficiency)
             : nlohmann::json(nullptr)}};
    if (n > 0)
      cmp["sign_test"] = {{"wins", wins},
                          {"n", n},
                          {"p_value", sign_test_p_value(wins, n)}};
    comparisons[name] = std::move(cmp);
  }

  nlohmann::json summary{{"format_version", 1},
                         {"primary_mode", primary},
                         {"modes", modes_json},
                         {"comparisons", comparisons}};
  {
    std::ofstream out(run_dir + "/summary.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + run_dir + "/summary.json");
    out << summary.dump(2) << '\n';
  }

  {
    CsvWriter csv(run_dir + "/cohorts.csv",
                  {"cohort", "baseline", "volume_delta_pct", "metric1_delta_pct",
                   "metric2_delta_pct"});
    for (const auto& [name, s] : summaries) {
      if (name == primary) continue;
      for (int c = 0; c < 3; ++c) {
        auto cell = [&](double ours, double base) {
          return base == 0.0 ? std::string()
                             : format_double((ours - base) / base * 100.0);
        };
        const std::size_t ci = static_cast<std::size_t>(c);
        csv.row({to_string(static_cast<Cohort>(c)), name,
                 cell(prim.cohort_volume[ci], s.cohort_volume[ci]),
                 cell(prim.cohort_components[ci][0], s.cohort_components[ci][0]),
                 cell(prim.cohort_components[ci][1], s.cohort_components[ci][1])});
      }
    }
    csv.close();
  }

  // Figure-style CSVs from the primary mode's first seed.
  const nlohmann::json& prim_report = mode_reports.at(primary);
  if (!prim_report.at("seeds").empty()) {
    const auto first_seed =
        prim_report.at("seeds")[0].at("seed").get<std::uint64_t>();
    const fs::path seed_dir =
        fs::path(run_dir) / ("eval_" + primary) / ("seed" + std::to_string(first_seed));
    std::vector<std::string> wanted{"timeseries.csv", "freq_dist.csv",
                                    "per_user_freq_std.csv"};
    std::vector<std::string> absent;
    for (const std::string& f : wanted)
      if (!fs::exists(seed_dir / f)) absent.push_back((seed_dir / f).string());
    if (!absent.empty()) {
      std::string msg = "missing evaluation outputs:";
      for (const std::string& m : absent) msg += " " + m;
      throw IoError(msg);
    }
    for (const std::string& f : wanted)
      fs::copy_file(seed_dir / f, fs::path(run_dir) / f,
                    fs::copy_options::overwrite_existing);
  }
  return summary;
}

}  // namespace freqctrl::experiment
