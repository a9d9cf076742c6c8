#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqctrl/core.hpp"
#include "freqctrl/network.hpp"
#include "freqctrl/rng.hpp"
#include "json.hpp"

namespace freqctrl::learner {

struct Hyperparams {
  double gamma = 0.5;  // tuned in [0.25, 0.9] in practice
  double alpha = 0.01;
  int batch_size = 64;
  int replay_capacity = 200000;
  int target_sync_interval = 500;
  std::vector<int> hidden_sizes{64, 32};
  int training_steps = 30000;
  std::uint64_t seed = 0;
};

inline void validate(const Hyperparams& hp) {
  if (hp.gamma < 0 || hp.gamma >= 1)
    throw std::invalid_argument("gamma must be in [0,1)");
  if (hp.alpha <= 0) throw std::invalid_argument("alpha must be > 0");
  if (hp.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (hp.replay_capacity < 1)
    throw std::invalid_argument("replay_capacity must be >= 1");
  if (hp.target_sync_interval < 1)
    throw std::invalid_argument("target_sync_interval must be >= 1");
  if (hp.training_steps < 0)
    throw std::invalid_argument("training_steps must be >= 0");
  for (int h : hp.hidden_sizes)
    if (h < 1) throw std::invalid_argument("hidden sizes must be >= 1");
}

// Bounded FIFO with uniform, seed-deterministic sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw std::invalid_argument("replay capacity must be >= 1");
  }

  void push(EpisodeRecord rec) {
    records_.push_back(std::move(rec));
    if (records_.size() > capacity_) records_.pop_front();
  }

  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  const EpisodeRecord& at(std::size_t i) const { return records_.at(i); }

  const EpisodeRecord& sample(Rng& rng) const {
    if (records_.empty()) throw std::invalid_argument("sampling from empty replay");
    return records_[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(records_.size())))];
  }

  std::vector<EpisodeRecord> sample_batch(Rng& rng, int n) const {
    std::vector<EpisodeRecord> batch;
    batch.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) batch.push_back(sample(rng));
    return batch;
  }

 private:
  std::size_t capacity_;
  std::deque<EpisodeRecord> records_;
};

// Double-DQN target: the online net picks the argmax action, the target net
// evaluates it. Ties in the argmax go to the lowest action index.
inline double double_q_target(const QNetwork& online, const QNetwork& target,
                              const EpisodeRecord& rec, double gamma) {
  if (rec.terminal) return rec.reward;
  const std::vector<double> q_online = online.forward(rec.next_state_features);
  int best = 0;
  for (std::size_t a = 1; a < q_online.size(); ++a)
    if (q_online[a] > q_online[static_cast<std::size_t>(best)])
      best = static_cast<int>(a);
  const std::vector<double> q_target = target.forward(rec.next_state_features);
  return rec.reward + gamma * q_target[static_cast<std::size_t>(best)];
}

// One SGD step on the mean squared TD error of the batch. Returns the
// pre-step loss. Targets are computed against the (frozen) target net before
// any parameter moves, so the step is a plain regression update.
inline double train_batch(QNetwork& net, const QNetwork& target,
                          std::span<const EpisodeRecord> batch,
                          const Hyperparams& hp) {
  if (batch.empty()) throw std::invalid_argument("train_batch needs a non-empty batch");
  std::vector<double> grad(net.parameters().size(), 0.0);
  double loss = 0.0;
  for (const EpisodeRecord& rec : batch) {
    const double y = double_q_target(net, target, rec, hp.gamma);
    loss += net.backprop(rec.state_features, rec.action_index, y, grad);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  loss *= scale;
  if (!std::isfinite(loss))
    throw std::runtime_error("training diverged: non-finite loss");
  std::vector<double>& p = net.parameters();
  for (std::size_t k = 0; k < p.size(); ++k)
    p[k] -= hp.alpha * scale * grad[k];
  return loss;
}

// Splits a flat log into per-user episodes (a new episode starts whenever a
// user's step counter returns to 0) and validates each one.
inline std::map<std::string, std::vector<std::vector<EpisodeRecord>>>
group_episodes(std::span<const EpisodeRecord> log) {
  std::map<std::string, std::vector<std::vector<EpisodeRecord>>> grouped;
  for (const EpisodeRecord& rec : log) {
    auto& episodes = grouped[rec.user_id];
    if (episodes.empty() || rec.step == 0) episodes.emplace_back();
    episodes.back().push_back(rec);
  }
  return grouped;
}

inline void validate_log(std::span<const EpisodeRecord> log) {
  if (log.empty()) throw std::invalid_argument("episode log is empty");
  for (const auto& [user, episodes] : group_episodes(log)) {
    for (const auto& episode : episodes) {
      const std::vector<std::string> violations = validate_episode(episode);
      if (!violations.empty())
        throw std::invalid_argument("invalid episode for " + user + ": " +
                                    violations.front());
    }
  }
}

struct TrainResult {
  QNetwork net;
  std::vector<double> losses;  // pre-step loss per training step
};

inline QNetwork initial_network(int input_dim, const Hyperparams& hp,
                                int n_actions) {
  return QNetwork::initialized(input_dim, hp.hidden_sizes, n_actions,
                               derive_seed(hp.seed, 0x1417));
}

using TrainProbe =
    std::function<void(int step, const QNetwork& online, const QNetwork& target)>;

// Off-policy training from a logged dataset: fill the replay buffer in log
// order, then run hp.training_steps batch updates with the target net synced
// every target_sync_interval steps. Bit-deterministic given (log, hp).
inline TrainResult train_from_log(std::span<const EpisodeRecord> log,
                                  const Hyperparams& hp, int n_actions,
                                  const TrainProbe& probe = nullptr) {
  validate(hp);
  validate_log(log);
  const int input_dim = static_cast<int>(log.front().state_features.size());

  ReplayBuffer replay(static_cast<std::size_t>(hp.replay_capacity));
  for (const EpisodeRecord& rec : log) replay.push(rec);

  QNetwork net = initial_network(input_dim, hp, n_actions);
  QNetwork target = net;
  Rng rng(derive_seed(hp.seed, 0x5a3f));

  TrainResult result{net, {}};
  result.losses.reserve(static_cast<std::size_t>(hp.training_steps));
  for (int step = 0; step < hp.training_steps; ++step) {
    if (step % hp.target_sync_interval == 0) target = result.net;
    const std::vector<EpisodeRecord> batch =
        replay.sample_batch(rng, hp.batch_size);
    result.losses.push_back(train_batch(result.net, target, batch, hp));
    if (probe) probe(step, result.net, target);
  }
  return result;
}

// --- checkpoints ---

inline constexpr int kCheckpointVersion = 1;

inline void to_json(nlohmann::json& j, const Hyperparams& hp) {
  j = nlohmann::json{{"gamma", hp.gamma},
                     {"alpha", hp.alpha},
                     {"batch_size", hp.batch_size},
                     {"replay_capacity", hp.replay_capacity},
                     {"target_sync_interval", hp.target_sync_interval},
                     {"hidden_sizes", hp.hidden_sizes},
                     {"training_steps", hp.training_steps},
                     {"seed", hp.seed}};
}

inline void from_json(const nlohmann::json& j, Hyperparams& hp) {
  Hyperparams defaults;
  hp.gamma = j.value("gamma", defaults.gamma);
  hp.alpha = j.value("alpha", defaults.alpha);
  hp.batch_size = j.value("batch_size", defaults.batch_size);
  hp.replay_capacity = j.value("replay_capacity", defaults.replay_capacity);
  hp.target_sync_interval =
      j.value("target_sync_interval", defaults.target_sync_interval);
  hp.hidden_sizes = j.value("hidden_sizes", defaults.hidden_sizes);
  hp.training_steps = j.value("training_steps", defaults.training_steps);
  hp.seed = j.value("seed", defaults.seed);
}

// JSON checkpoint: architecture descriptor plus the flat parameter array in
// row-major layer order. Doubles serialize via shortest round-trip
// representation, so save/load is bit-exact.
inline void save_checkpoint(const std::string& path, const QNetwork& net,
                            const Hyperparams& hp) {
  nlohmann::json j{
      {"format_version", kCheckpointVersion},
      {"architecture",
       {{"input_dim", net.input_dim()},
        {"hidden_sizes", net.hidden_sizes()},
        {"n_actions", net.n_actions()}}},
      {"parameters", net.parameters()},
      {"hyperparams", hp}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

inline QNetwork load_checkpoint(const std::string& path,
                                Hyperparams* hyper_echo = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format_version", -1) != kCheckpointVersion)
    throw std::invalid_argument("unsupported checkpoint version in " + path);
  const nlohmann::json& arch = j.at("architecture");
  QNetwork net(arch.at("input_dim").get<int>(),
               arch.at("hidden_sizes").get<std::vector<int>>(),
               arch.at("n_actions").get<int>());
  std::vector<double> params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != net.parameters().size())
    throw std::invalid_argument("checkpoint parameter count does not match architecture");
  net.parameters() = std::move(params);
  if (hyper_echo) *hyper_echo = j.at("hyperparams").get<Hyperparams>();
  return net;
}

}  // namespace freqctrl::learner
