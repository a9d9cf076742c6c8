#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "freqctrl/core.hpp"
#include "json.hpp"

namespace freqctrl {

inline constexpr int kEpisodeLogVersion = 1;

inline nlohmann::json episode_record_to_json(const EpisodeRecord& rec) {
  return nlohmann::json{{"user_id", rec.user_id},
                        {"step", rec.step},
                        {"state_features", rec.state_features},
                        {"action_index", rec.action_index},
                        {"reward", rec.reward},
                        {"next_state_features", rec.next_state_features},
                        {"terminal", rec.terminal}};
}

inline EpisodeRecord episode_record_from_json(const nlohmann::json& j) {
  EpisodeRecord rec;
  rec.user_id = j.at("user_id").get<std::string>();
  rec.step = j.at("step").get<int>();
  rec.state_features = j.at("state_features").get<std::vector<double>>();
  rec.action_index = j.at("action_index").get<int>();
  rec.reward = j.at("reward").get<double>();
  rec.next_state_features =
      j.at("next_state_features").get<std::vector<double>>();
  rec.terminal = j.at("terminal").get<bool>();
  return rec;
}

// Newline-delimited JSON, one record per line, with a single header line
// carrying the format version. Files are append-only.
inline void write_episode_log(const std::string& path,
                              std::span<const EpisodeRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open episode log for writing: " + path);
  out << nlohmann::json{{"format_version", kEpisodeLogVersion}}.dump() << '\n';
  for (const EpisodeRecord& rec : records)
    out << episode_record_to_json(rec).dump() << '\n';
  if (!out) throw IoError("failed writing episode log: " + path);
}

inline void append_episode_log(const std::string& path,
                               std::span<const EpisodeRecord> records) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open episode log for append: " + path);
  for (const EpisodeRecord& rec : records)
    out << episode_record_to_json(rec).dump() << '\n';
  if (!out) throw IoError("failed appending episode log: " + path);
}

inline std::vector<EpisodeRecord> read_episode_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open episode log: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("episode log has no header line: " + path);
  const nlohmann::json head = nlohmann::json::parse(line);
  if (head.at("format_version").get<int>() != kEpisodeLogVersion)
    throw std::invalid_argument("unsupported episode log version in " + path);
  std::vector<EpisodeRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(episode_record_from_json(nlohmann::json::parse(line)));
  }
  return records;
}

}  // namespace freqctrl
