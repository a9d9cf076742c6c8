#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "freqctrl/env.hpp"

using namespace freqctrl;
using namespace freqctrl::env;

namespace {

EnvParams small_params(int n, std::uint64_t seed) {
  EnvParams p;
  p.population_size = n;
  p.seed = seed;
  return p;
}

const ActionSet kActions = ActionSet::default_set();

DecideFn constant_policy(int index) {
  return [index](std::span<const double>) { return kActions.at(index); };
}

}  // namespace

TEST(InitPopulation, DeterministicGivenSeed) {
  const EnvParams p = small_params(50, 42);
  const Population a = init_population(p);
  const Population b = init_population(p);
  ASSERT_EQ(a.users.size(), b.users.size());
  for (std::size_t i = 0; i < a.users.size(); ++i) {
    EXPECT_EQ(a.users[i].theta, b.users[i].theta);
    EXPECT_EQ(a.users[i].cohort, b.users[i].cohort);
    EXPECT_EQ(a.users[i].active, b.users[i].active);
  }
}

TEST(InitPopulation, ThreeUsersSplitOnePerCohort) {
  const Population pop = init_population(small_params(3, 7));
  int seen[3] = {0, 0, 0};
  for (const UserState& u : pop.users) ++seen[static_cast<int>(u.cohort)];
  EXPECT_EQ(seen[0], 1);
  EXPECT_EQ(seen[1], 1);
  EXPECT_EQ(seen[2], 1);
}

TEST(InitPopulation, CohortsFollowThetaTerciles) {
  const Population pop = init_population(small_params(300, 9));
  double min_high = 1.0, max_low = 0.0;
  for (const UserState& u : pop.users) {
    if (u.cohort == Cohort::High) min_high = std::min(min_high, u.theta);
    if (u.cohort == Cohort::Low) max_low = std::max(max_low, u.theta);
  }
  EXPECT_GT(min_high, max_low);
}

TEST(InitPopulation, DormantFractionZeroMeansAllActive) {
  EnvParams p = small_params(40, 3);
  p.dormant_fraction = 0.0;
  for (const UserState& u : init_population(p).users) EXPECT_TRUE(u.active);
}

TEST(InitPopulation, FreshUsersStartUnfatigued) {
  EnvParams p = small_params(10, 3);
  p.dormant_fraction = 0.5;
  bool any_dormant = false;
  for (const UserState& u : init_population(p).users) {
    EXPECT_EQ(u.phi, 0.0);
    EXPECT_EQ(u.activation_credit, 0.0);
    EXPECT_TRUE(u.history.empty());
    any_dormant = any_dormant || !u.active;
  }
  EXPECT_TRUE(any_dormant);
}

TEST(InitPopulation, EmptyPopulationRejected) {
  EXPECT_THROW(init_population(small_params(0, 1)), std::invalid_argument);
}

TEST(StepUser, ZeroFrequencyLeavesUserUntouched) {
  EnvParams p = small_params(1, 0);
  UserState u;
  u.theta = 1.0;
  u.phi = 0.0;
  u.active = true;
  Rng rng(1);
  const StepResult res = step_user(u, kActions.at(0), 5, p, 1.0, rng);
  EXPECT_DOUBLE_EQ(res.metrics[0], 0.0);
  EXPECT_DOUBLE_EQ(res.metrics[1], 0.0);
  EXPECT_DOUBLE_EQ(res.user.phi, 0.0);
}

TEST(StepUser, MatchesClosedFormDynamics) {
  EnvParams p = small_params(1, 0);
  UserState u;
  u.theta = 0.5;
  u.phi = 0.5;
  u.active = true;
  Rng rng(1);
  const StepResult res = step_user(u, kActions.at(2), 5, p, 1.0, rng);
  // theta * (1 - e^{-lambda f}) * (1 - phi): 0.5 * (1 - e^{-1}) * 0.5
  EXPECT_NEAR(res.metrics[0], 0.15803013970713942, 1e-15);
  // theta * min(1, f/f_max) * (1 - phi^2): 0.5 * 0.4 * 0.75
  EXPECT_NEAR(res.metrics[1], 0.15, 1e-15);
  // rho phi + kappa f / f_max: 0.8 * 0.5 + 0.3 * 0.4
  EXPECT_NEAR(res.user.phi, 0.52, 1e-15);
}

TEST(StepUser, DayMultiplierScalesMetrics) {
  EnvParams p = small_params(1, 0);
  UserState u;
  u.theta = 0.5;
  u.phi = 0.25;
  Rng rng1(1), rng2(1);
  const StepResult base = step_user(u, kActions.at(3), 5, p, 1.0, rng1);
  const StepResult boosted = step_user(u, kActions.at(3), 5, p, 1.25, rng2);
  EXPECT_NEAR(boosted.metrics[0], 1.25 * base.metrics[0], 1e-15);
  EXPECT_NEAR(boosted.metrics[1], 1.25 * base.metrics[1], 1e-15);
  EXPECT_EQ(boosted.user.phi, base.user.phi);
}

TEST(StepUser, DormantUserActivatesOnThreshold) {
  EnvParams p = small_params(1, 0);
  UserState u;
  u.theta = 0.9;
  u.active = false;
  u.activation_credit = 5.0;
  Rng rng(1);
  const StepResult res = step_user(u, kActions.at(2), 5, p, 1.0, rng);
  EXPECT_TRUE(res.user.active);
  EXPECT_DOUBLE_EQ(res.user.activation_credit, 0.0);
  EXPECT_DOUBLE_EQ(res.metrics[0], 0.0);
  EXPECT_DOUBLE_EQ(res.metrics[1], 0.0);
}

TEST(StepUser, DormantUserBelowThresholdAccumulates) {
  EnvParams p = small_params(1, 0);
  UserState u;
  u.active = false;
  u.activation_credit = 1.0;
  Rng rng(1);
  const StepResult res = step_user(u, kActions.at(2), 5, p, 1.0, rng);
  EXPECT_FALSE(res.user.active);
  EXPECT_DOUBLE_EQ(res.user.activation_credit, 3.0);
}

TEST(StepUser, SaturatedFatigueChurnsWithConfiguredProbability) {
  EnvParams p = small_params(1, 0);
  p.churn_threshold = 0.5;
  p.churn_prob = 1.0;
  UserState u;
  u.phi = 0.9;
  u.active = true;
  Rng rng(1);
  const StepResult res = step_user(u, kActions.at(5), 5, p, 1.0, rng);
  EXPECT_FALSE(res.user.active);
  EXPECT_DOUBLE_EQ(res.user.activation_credit, 0.0);

  p.churn_prob = 0.0;
  Rng rng2(1);
  const StepResult stays = step_user(u, kActions.at(5), 5, p, 1.0, rng2);
  EXPECT_TRUE(stays.user.active);
}

TEST(StepUser, HistoryKeepsLastWindow) {
  EnvParams p = small_params(1, 0);
  p.history_window = 3;
  UserState u;
  Rng rng(1);
  for (int f : {1, 2, 3, 4}) {
    u = step_user(u, kActions.at(f), 5, p, 1.0, rng).user;
  }
  EXPECT_EQ(u.history, (std::vector<int>{2, 3, 4}));
}

TEST(StepUser, FatigueStaysInUnitIntervalAndMetricsNonNegative) {
  EnvParams p = small_params(1, 0);
  Rng action_rng(5);
  Rng rng(6);
  UserState u;
  u.theta = 0.8;
  for (int step = 0; step < 500; ++step) {
    const int a = action_rng.uniform_int(6);
    const StepResult res = step_user(u, kActions.at(a), 5, p, 1.0, rng);
    EXPECT_GE(res.user.phi, 0.0);
    EXPECT_LE(res.user.phi, 1.0);
    EXPECT_GE(res.metrics[0], 0.0);
    EXPECT_GE(res.metrics[1], 0.0);
    u = res.user;
  }
}

TEST(StepUser, EngagementMetricSaturatesMonotonically) {
  EnvParams p = small_params(1, 0);
  UserState u;
  u.theta = 0.9;
  u.phi = 0.3;
  double prev = -1.0;
  double prev_gain = 1e9;
  for (int f = 0; f <= 5; ++f) {
    Rng rng(1);
    const double m = step_user(u, kActions.at(f), 5, p, 1.0, rng).metrics[0];
    EXPECT_GE(m, prev);
    if (f > 0) {
      const double gain = m - prev;
      EXPECT_LE(gain, prev_gain + 1e-12);  // concave: diminishing returns
      prev_gain = gain;
    }
    prev = m;
  }
}

TEST(StepUser, SustainedMaxFrequencyDrivesFatigueToSaturation) {
  // kappa/(1-rho) = 1.5 clamps at 1, crossing the churn threshold.
  EnvParams p = small_params(1, 0);
  p.churn_prob = 0.0;
  UserState u;
  u.theta = 1.0;
  Rng rng(1);
  for (int step = 0; step < 40; ++step)
    u = step_user(u, kActions.at(5), 5, p, 1.0, rng).user;
  EXPECT_DOUBLE_EQ(u.phi, 1.0);
  EXPECT_GE(u.phi, p.churn_threshold);
}

TEST(Features, FreshActiveMediumUser) {
  UserState u;
  u.cohort = Cohort::Medium;
  const std::vector<double> x = features(u, 5, 6.0);
  EXPECT_EQ(x, (std::vector<double>{0, 1, 0, 0, 0, 1, 0, 0}));
}

TEST(Features, DormantCreditScaledByThreshold) {
  UserState u;
  u.active = false;
  u.activation_credit = 3.0;
  u.cohort = Cohort::Low;
  const std::vector<double> x = features(u, 5, 6.0);
  EXPECT_DOUBLE_EQ(x[7], 0.5);
  EXPECT_DOUBLE_EQ(x[1], 0.0);
  EXPECT_DOUBLE_EQ(x[6], 1.0);
}

TEST(Features, AlwaysLengthEight) {
  Rng rng(12);
  EnvParams p = small_params(30, 8);
  p.dormant_fraction = 0.3;
  Population pop = init_population(p);
  for (int day = 0; day < 5; ++day) {
    for (UserState& u : pop.users) {
      EXPECT_EQ(features(u, 5, p.activation_threshold).size(), 8u);
      Rng step_rng(rng.next_u64());
      u = step_user(u, kActions.at(rng.uniform_int(6)), 5, p, 1.0, step_rng)
              .user;
    }
  }
}

TEST(Features, HistoryMomentsNormalized) {
  UserState u;
  u.history = {2, 4};
  u.cohort = Cohort::High;
  const std::vector<double> x = features(u, 5, 6.0);
  EXPECT_DOUBLE_EQ(x[2], 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(x[3], 1.0 / 5.0);  // population std of {2,4} is 1
  EXPECT_DOUBLE_EQ(x[4], 1.0);
}

TEST(RunDay, ZeroPolicyDeliversNothing) {
  Population pop = init_population(small_params(25, 4));
  const DayResult res = run_day(pop, constant_policy(0), kActions, DriftSpec{},
                                RewardParams{}, 0);
  EXPECT_EQ(res.outcome.delivery_volume, 0);
  EXPECT_EQ(res.outcome.frequency_histogram[0], 25);
}

TEST(RunDay, ConstantPolicyVolumeIsPopulationTimesValue) {
  EnvParams p = small_params(25, 4);
  p.dormant_fraction = 0.0;
  Population pop = init_population(p);
  const DayResult res = run_day(pop, constant_policy(3), kActions, DriftSpec{},
                                RewardParams{}, 0);
  EXPECT_EQ(res.outcome.delivery_volume, 25 * 3);
}

TEST(RunDay, HistogramCountsSumToDecisions) {
  Population pop = init_population(small_params(40, 5));
  Rng rng(2);
  const DecideFn random_policy = [&](std::span<const double>) {
    return kActions.at(rng.uniform_int(6));
  };
  const DayResult res = run_day(pop, random_policy, kActions, DriftSpec{},
                                RewardParams{}, 0);
  long long total = 0;
  for (long long c : res.outcome.frequency_histogram) total += c;
  EXPECT_EQ(total, 40);
}

TEST(RunDay, IdentityDriftMultiplierIsOne) {
  DriftSpec drift;
  for (int day = 0; day < 20; ++day) EXPECT_DOUBLE_EQ(drift.multiplier(day), 1.0);
}

TEST(RunDay, DriftAppliesWeeklyPatternAndWindows) {
  DriftSpec drift;
  drift.weekly_pattern = {1.0, 1.25, 1.0, 0.75, 1.0, 1.25, 0.75};
  drift.schedule.push_back({10, 12, 2.0});
  EXPECT_DOUBLE_EQ(drift.multiplier(1), 1.25);
  EXPECT_DOUBLE_EQ(drift.multiplier(10), 2.0 * 0.75);  // day 10 is weekday 3
  EXPECT_DOUBLE_EQ(drift.multiplier(13), 0.75);
}

TEST(RunDay, DeterministicOutcomeSequence) {
  auto run = [](std::uint64_t seed) {
    EnvParams p = small_params(30, seed);
    p.dormant_fraction = 0.2;
    p.churn_threshold = 0.6;
    Population pop = init_population(p);
    std::vector<long long> volumes;
    for (int day = 0; day < 10; ++day) {
      const DecideFn cycling = [day](std::span<const double> x) {
        const int idx = (day + (x[0] > 0.5 ? 1 : 0)) % 6;
        return kActions.at(idx);
      };
      volumes.push_back(run_day(pop, cycling, kActions, DriftSpec{},
                                RewardParams{}, day)
                            .outcome.delivery_volume);
    }
    return volumes;
  };
  EXPECT_EQ(run(99), run(99));
  EXPECT_NE(run(99), run(100));
}

TEST(RunDay, FragmentsChainAcrossDays) {
  EnvParams p = small_params(8, 21);
  p.dormant_fraction = 0.25;
  p.churn_threshold = 0.5;
  Population pop = init_population(p);
  Rng rng(3);
  const DecideFn random_policy = [&](std::span<const double>) {
    return kActions.at(rng.uniform_int(6));
  };
  std::vector<EpisodeRecord> prev;
  for (int day = 0; day < 6; ++day) {
    DayResult res = run_day(pop, random_policy, kActions, DriftSpec{},
                            RewardParams{}, day);
    if (day > 0) {
      for (std::size_t i = 0; i < prev.size(); ++i)
        EXPECT_EQ(prev[i].next_state_features, res.fragments[i].state_features);
    }
    prev = std::move(res.fragments);
  }
}

TEST(PopulationSnapshot, RoundTrips) {
  EnvParams p = small_params(12, 17);
  p.dormant_fraction = 0.4;
  Population pop = init_population(p);
  Rng rng(1);
  for (int day = 0; day < 3; ++day) {
    const DecideFn random_policy = [&](std::span<const double>) {
      return kActions.at(rng.uniform_int(6));
    };
    run_day(pop, random_policy, kActions, DriftSpec{}, RewardParams{}, day);
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "freqctrl_pop.jsonl").string();
  save_population(path, pop);
  const Population back = load_population(path);
  ASSERT_EQ(back.users.size(), pop.users.size());
  EXPECT_EQ(back.params.seed, pop.params.seed);
  for (std::size_t i = 0; i < pop.users.size(); ++i) {
    EXPECT_EQ(back.users[i].theta, pop.users[i].theta);
    EXPECT_EQ(back.users[i].phi, pop.users[i].phi);
    EXPECT_EQ(back.users[i].active, pop.users[i].active);
    EXPECT_EQ(back.users[i].cohort, pop.users[i].cohort);
    EXPECT_EQ(back.users[i].history, pop.users[i].history);
  }
  std::filesystem::remove(path);
}
