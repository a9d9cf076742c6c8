#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "freqctrl/experiment.hpp"

namespace {

using freqctrl::experiment::ExperimentConfig;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
  cmd->add_option("--config", opts->config_path, "Experiment config (JSON)")
      ->required();
  cmd->add_option("--seed", opts->seed, "Run a single seed instead of the configured list");
  cmd->add_option("--out", opts->out, "Override the configured output directory");
}

ExperimentConfig load(const CommonOpts& opts) {
  ExperimentConfig cfg = freqctrl::experiment::load_config(opts.config_path);
  if (opts.seed) cfg.seeds = {*opts.seed};
  if (opts.out) cfg.output_dir = *opts.out;
  return cfg;
}

int run_collect(const CommonOpts& opts) {
  const ExperimentConfig cfg = load(opts);
  for (const std::string& path : freqctrl::experiment::collect(cfg))
    std::printf("wrote %s\n", path.c_str());
  return 0;
}

int run_train(const CommonOpts& opts, std::string log_path) {
  const ExperimentConfig cfg = load(opts);
  if (log_path.empty())
    log_path = cfg.output_dir + "/episodes_seed" +
               std::to_string(cfg.seeds.front()) + ".jsonl";
  const auto out = freqctrl::experiment::train(cfg, log_path);
  std::printf("wrote %s\n", out.checkpoint_path.c_str());
  std::printf("wrote %s (%zu steps, final loss %s)\n",
              out.loss_curve_path.c_str(), out.losses.size(),
              out.losses.empty()
                  ? "n/a"
                  : freqctrl::format_double(out.losses.back()).c_str());
  return 0;
}

void print_mode_summary(const freqctrl::experiment::EvaluationReport& report) {
  using freqctrl::experiment::SeedReport;
  const std::string name = freqctrl::experiment::mode_name(report.mode);
  for (const SeedReport& sr : report.seeds) {
    std::printf("%s seed=%llu volume=%.0f weighted_metrics=%.3f efficiency=%s\n",
                name.c_str(), static_cast<unsigned long long>(sr.seed),
                sr.total_volume, sr.total_weighted_metrics,
                sr.efficiency ? freqctrl::format_double(*sr.efficiency).c_str()
                              : "undefined");
  }
}

int run_evaluate(const CommonOpts& opts, std::string checkpoint,
                 const std::string& mode_text) {
  const ExperimentConfig cfg = load(opts);
  if (checkpoint.empty()) checkpoint = cfg.output_dir + "/checkpoint.json";
  const auto mode = freqctrl::experiment::parse_mode(mode_text);
  print_mode_summary(freqctrl::experiment::evaluate(cfg, checkpoint, mode));
  return 0;
}

// Closed-loop stabilization demo: greedy open loop versus the PID-driven EF
// policy against the same target, with deviation and EF-range statistics.
int run_control_demo(const CommonOpts& opts, std::string checkpoint) {
  namespace exp = freqctrl::experiment;
  const ExperimentConfig cfg = load(opts);
  if (checkpoint.empty()) checkpoint = cfg.output_dir + "/checkpoint.json";

  const exp::EvaluationReport open_loop =
      exp::evaluate(cfg, checkpoint, exp::parse_mode("greedy"));
  const exp::EvaluationReport closed_loop =
      exp::evaluate(cfg, checkpoint, exp::parse_mode("ef_pid"));

  const int settle = std::min(15, cfg.horizon_days - 1);
  const int window = std::min(7, settle + 1);
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const auto open_vols = exp::day_volumes(open_loop.seeds[i]);
    const auto closed_vols = exp::day_volumes(closed_loop.seeds[i]);
    const double open_peak =
        exp::peak_deviation_from_target(open_vols, cfg.target_volume);
    const double closed_dev = exp::max_trailing_mean_deviation(
        closed_vols, cfg.target_volume, window, settle);
    std::printf("seed=%llu open_loop_peak_dev=%.1f%% closed_loop_mean_dev(from tick %d)=%.1f%%\n",
                static_cast<unsigned long long>(cfg.seeds[i]),
                open_peak * 100.0, settle, closed_dev * 100.0);
    std::vector<double> efs;
    for (const auto& row : closed_loop.seeds[i].ef_trace) efs.push_back(row.ef);
    if (!efs.empty()) {
      std::sort(efs.begin(), efs.end());
      const auto q = [&](double p) {
        const double pos = p * static_cast<double>(efs.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        if (lo + 1 >= efs.size()) return efs.back();
        const double frac = pos - static_cast<double>(lo);
        return efs[lo] * (1.0 - frac) + efs[lo + 1] * frac;
      };
      std::printf("seed=%llu ef_quartiles p25=%.3f p50=%.3f p75=%.3f\n",
                  static_cast<unsigned long long>(cfg.seeds[i]), q(0.25),
                  q(0.5), q(0.75));
    }
  }
  return 0;
}

int run_report(const CommonOpts& opts) {
  const ExperimentConfig cfg = load(opts);
  freqctrl::experiment::report(cfg.output_dir);
  std::printf("wrote %s/summary.json\n", cfg.output_dir.c_str());
  std::printf("wrote %s/cohorts.csv\n", cfg.output_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-term-value frequency control: data collection, DQN "
               "training, effective-factor serving, and volume control"};
  app.require_subcommand(1);

  CommonOpts collect_opts;
  CLI::App* collect = app.add_subcommand("collect", "Generate episode logs under the explore policy");
  add_common(collect, &collect_opts);

  CommonOpts train_opts;
  std::string train_log;
  CLI::App* train = app.add_subcommand("train", "Train the Q-network from an episode log");
  add_common(train, &train_opts);
  train->add_option("--log", train_log, "Episode log path (default: first seed's log)");

  CommonOpts eval_opts;
  std::string eval_checkpoint;
  std::string eval_mode = "ef_pid";
  CLI::App* evaluate = app.add_subcommand("evaluate", "Run a policy over the evaluation population");
  add_common(evaluate, &eval_opts);
  evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint path (default: <out>/checkpoint.json)");
  evaluate->add_option("--mode", eval_mode, "greedy | ef_fixed | ef_pid | fixed_frequency:<k>");

  CommonOpts demo_opts;
  std::string demo_checkpoint;
  CLI::App* demo = app.add_subcommand("control-demo", "Compare open-loop greedy with PID-stabilized EF");
  add_common(demo, &demo_opts);
  demo->add_option("--checkpoint", demo_checkpoint, "Checkpoint path (default: <out>/checkpoint.json)");

  CommonOpts report_opts;
  CLI::App* report = app.add_subcommand("report", "Aggregate evaluation outputs into summary artifacts");
  add_common(report, &report_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (collect->parsed()) return run_collect(collect_opts);
    if (train->parsed()) return run_train(train_opts, train_log);
    if (evaluate->parsed())
      return run_evaluate(eval_opts, eval_checkpoint, eval_mode);
    if (demo->parsed()) return run_control_demo(demo_opts, demo_checkpoint);
    if (report->parsed()) return run_report(report_opts);
  } catch (const freqctrl::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
