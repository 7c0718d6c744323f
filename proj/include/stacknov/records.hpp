#pragma once

#include <Eigen/Dense>
#include <array>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "stacknov/object.hpp"

namespace stacknov {

inline constexpr int kFeatureCount = 19;
inline constexpr int kAblatedFeatureCount = 16;
inline constexpr int kEpisodeLen = 10;
inline constexpr int kSchemaVersion = 1;

// Jitter-vector columns within the 19-feature layout (the VoxML-derived
// inputs removed by the ablation).
inline constexpr int kJitterFirstCol = 10;
inline constexpr int kJitterColCount = 3;

// One evaluation timestep: 19 feature scalars in a fixed order plus
// non-feature metadata.
struct TimestepRecord {
  Eigen::Vector3d start_rotation = Eigen::Vector3d::Zero();
  double start_upright_offset = 0.0;
  Eigen::Vector2d action = Eigen::Vector2d::Zero();
  Eigen::Vector3d post_rotation = Eigen::Vector3d::Zero();
  double post_upright_offset = 0.0;
  Eigen::Vector3d jitter_vector = Eigen::Vector3d::Zero();
  double obs_height = 1.0;
  Eigen::Vector2d obs_cog = Eigen::Vector2d::Zero();
  double reward = 0.0;
  double cum_episode_reward = 0.0;
  double cum_mean_episode_reward = 0.0;

  ObjectKind theme = ObjectKind::Cube;
  int episode_id = 0;
  int attempt = 1;           // 1-based attempt index within the episode
  std::string policy_label;  // "accurate" or "imprecise"
  std::uint64_t seed = 0;
  bool supplemental = false;

  std::array<double, kFeatureCount> features() const {
    return {start_rotation.x(), start_rotation.y(), start_rotation.z(),
            start_upright_offset,
            action.x(), action.y(),
            post_rotation.x(), post_rotation.y(), post_rotation.z(),
            post_upright_offset,
            jitter_vector.x(), jitter_vector.y(), jitter_vector.z(),
            obs_height, obs_cog.x(), obs_cog.y(),
            reward, cum_episode_reward, cum_mean_episode_reward};
  }
};

// One padded episode: the classifier's input unit.
struct EpisodeTensor {
  Eigen::MatrixXd rows;   // kEpisodeLen x c
  int true_length = 0;
  ObjectKind label = ObjectKind::Cube;
  int episode_id = 0;
  bool supplemental = false;

  int feature_count() const { return static_cast<int>(rows.cols()); }
};

// Group records into padded episodes. Rows past the true length are exact
// copies of the last real row.
inline std::vector<EpisodeTensor> collect(
    const std::vector<TimestepRecord>& records) {
  std::vector<EpisodeTensor> out;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    while (j < records.size() &&
           records[j].episode_id == records[i].episode_id &&
           records[j].supplemental == records[i].supplemental)
      ++j;
    int len = static_cast<int>(j - i);
    if (len > kEpisodeLen)
      throw std::runtime_error("collect: episode " +
                               std::to_string(records[i].episode_id) +
                               " longer than 10 timesteps");
    EpisodeTensor ep;
    ep.rows.resize(kEpisodeLen, kFeatureCount);
    ep.true_length = len;
    ep.label = records[i].theme;
    ep.episode_id = records[i].episode_id;
    ep.supplemental = records[i].supplemental;
    for (int t = 0; t < kEpisodeLen; ++t) {
      const TimestepRecord& r = records[i + std::min(t, len - 1)];
      auto f = r.features();
      for (int c = 0; c < kFeatureCount; ++c) ep.rows(t, c) = f[c];
    }
    out.push_back(std::move(ep));
    i = j;
  }
  return out;
}

// Remove the jitter-vector columns (19 -> 16 features).
inline EpisodeTensor ablate_voxml(const EpisodeTensor& ep) {
  if (ep.feature_count() != kFeatureCount)
    throw std::invalid_argument(
        "ablate_voxml: expected a full 19-feature tensor");
  EpisodeTensor out = ep;
  out.rows.resize(kEpisodeLen, kAblatedFeatureCount);
  for (int t = 0; t < kEpisodeLen; ++t) {
    int at = 0;
    for (int c = 0; c < kFeatureCount; ++c) {
      if (c >= kJitterFirstCol && c < kJitterFirstCol + kJitterColCount)
        continue;
      out.rows(t, at++) = ep.rows(t, c);
    }
  }
  return out;
}

inline std::vector<EpisodeTensor> ablate_voxml(
    const std::vector<EpisodeTensor>& eps) {
  std::vector<EpisodeTensor> out;
  out.reserve(eps.size());
  for (const auto& e : eps) out.push_back(ablate_voxml(e));
  return out;
}

// First 90 episodes train, next 10 dev-test, remainder detection pool; split
// by evaluation order, never shuffled.
struct DatasetSplit {
  std::vector<EpisodeTensor> train;
  std::vector<EpisodeTensor> dev_test;
  std::vector<EpisodeTensor> detection_pool;
};

inline constexpr int kTrainEpisodes = 90;
inline constexpr int kDevTestEpisodes = 10;

inline DatasetSplit make_split(const std::vector<EpisodeTensor>& episodes,
                               int detection_min,
                               const std::string& class_name = "") {
  std::string who = class_name.empty() ? "dataset" : class_name;
  if (static_cast<int>(episodes.size()) < kTrainEpisodes + kDevTestEpisodes)
    throw std::runtime_error("make_split: fewer than 100 episodes for " + who);
  DatasetSplit split;
  split.train.assign(episodes.begin(), episodes.begin() + kTrainEpisodes);
  split.dev_test.assign(episodes.begin() + kTrainEpisodes,
                        episodes.begin() + kTrainEpisodes + kDevTestEpisodes);
  split.detection_pool.assign(
      episodes.begin() + kTrainEpisodes + kDevTestEpisodes, episodes.end());
  if (static_cast<int>(split.detection_pool.size()) < detection_min)
    throw std::runtime_error(
        "make_split: detection pool for " + who + " has " +
        std::to_string(split.detection_pool.size()) + " episodes, need " +
        std::to_string(detection_min) +
        "; run supplemental evaluation timesteps");
  return split;
}

// ---------------------------------------------------------------------------
// Persistence: line-delimited JSON, one timestep per line, header line first.

struct LogHeader {
  int schema_version = kSchemaVersion;
  int feature_count = kFeatureCount;
  std::string policy_label;
  std::string env_config_hash;
  std::uint64_t seed = 0;
  bool supplemental = false;
};

namespace detail {

inline nlohmann::json vec_json(const Eigen::Vector3d& v) {
  return {v.x(), v.y(), v.z()};
}
inline nlohmann::json vec_json(const Eigen::Vector2d& v) {
  return {v.x(), v.y()};
}

}  // namespace detail

inline nlohmann::json to_json(const TimestepRecord& r) {
  return {{"start_rotation", detail::vec_json(r.start_rotation)},
          {"start_upright_offset", r.start_upright_offset},
          {"action", detail::vec_json(r.action)},
          {"post_rotation", detail::vec_json(r.post_rotation)},
          {"post_upright_offset", r.post_upright_offset},
          {"jitter_vector", detail::vec_json(r.jitter_vector)},
          {"obs_height", r.obs_height},
          {"obs_cog", detail::vec_json(r.obs_cog)},
          {"reward", r.reward},
          {"cum_episode_reward", r.cum_episode_reward},
          {"cum_mean_episode_reward", r.cum_mean_episode_reward},
          {"theme", kind_name(r.theme)},
          {"episode_id", r.episode_id},
          {"attempt", r.attempt},
          {"policy", r.policy_label},
          {"seed", r.seed},
          {"supplemental", r.supplemental}};
}

inline TimestepRecord record_from_json(const nlohmann::json& j) {
  TimestepRecord r;
  auto v3 = [&](const char* key) {
    const auto& a = j.at(key);
    return Eigen::Vector3d(a[0].get<double>(), a[1].get<double>(),
                           a[2].get<double>());
  };
  auto v2 = [&](const char* key) {
    const auto& a = j.at(key);
    return Eigen::Vector2d(a[0].get<double>(), a[1].get<double>());
  };
  r.start_rotation = v3("start_rotation");
  r.start_upright_offset = j.at("start_upright_offset").get<double>();
  r.action = v2("action");
  r.post_rotation = v3("post_rotation");
  r.post_upright_offset = j.at("post_upright_offset").get<double>();
  r.jitter_vector = v3("jitter_vector");
  r.obs_height = j.at("obs_height").get<double>();
  r.obs_cog = v2("obs_cog");
  r.reward = j.at("reward").get<double>();
  r.cum_episode_reward = j.at("cum_episode_reward").get<double>();
  r.cum_mean_episode_reward = j.at("cum_mean_episode_reward").get<double>();
  r.theme = kind_from_name(j.at("theme").get<std::string>());
  r.episode_id = j.at("episode_id").get<int>();
  r.attempt = j.at("attempt").get<int>();
  r.policy_label = j.at("policy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.supplemental = j.at("supplemental").get<bool>();
  return r;
}

inline void write_log(const std::string& path, const LogHeader& header,
                      const std::vector<TimestepRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_log: cannot open " + path);
  nlohmann::json h = {{"schema_version", header.schema_version},
                      {"c", header.feature_count},
                      {"policy", header.policy_label},
                      {"env_config_hash", header.env_config_hash},
                      {"seed", header.seed},
                      {"supplemental", header.supplemental}};
  out << h.dump() << "\n";
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

struct LogFile {
  LogHeader header;
  std::vector<TimestepRecord> records;
};

inline LogFile read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_log: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_log: empty file " + path);
  nlohmann::json h = nlohmann::json::parse(line);
  LogFile f;
  f.header.schema_version = h.at("schema_version").get<int>();
  if (f.header.schema_version != kSchemaVersion)
    throw std::runtime_error("read_log: unsupported schema version in " + path);
  f.header.feature_count = h.at("c").get<int>();
  f.header.policy_label = h.at("policy").get<std::string>();
  f.header.env_config_hash = h.at("env_config_hash").get<std::string>();
  f.header.seed = h.at("seed").get<std::uint64_t>();
  f.header.supplemental = h.at("supplemental").get<bool>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    f.records.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  return f;
}

// Feature matrix (one row per timestep) for CCA and CSV export.
inline Eigen::MatrixXd feature_matrix(const std::vector<TimestepRecord>& recs) {
  Eigen::MatrixXd m(recs.size(), kFeatureCount);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto f = recs[i].features();
    for (int c = 0; c < kFeatureCount; ++c)
      m(static_cast<Eigen::Index>(i), c) = f[c];
  }
  return m;
}

// Feature matrix on the padded-episode grid: episode e contributes rows
// 10e..10e+9 regardless of its true length. Row i of two such matrices then
// refers to the same (episode, attempt) coordinate for any two objects, which
// is what makes them a valid paired sample for CCA (raw evaluation order
// drifts apart as soon as episode lengths differ).
inline Eigen::MatrixXd episode_feature_matrix(
    const std::vector<EpisodeTensor>& episodes) {
  if (episodes.empty())
    throw std::invalid_argument("episode_feature_matrix: no episodes");
  const Eigen::Index c = episodes.front().rows.cols();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(episodes.size()) * kEpisodeLen, c);
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    if (episodes[e].rows.cols() != c)
      throw std::invalid_argument("episode_feature_matrix: mixed widths");
    m.middleRows(static_cast<Eigen::Index>(e) * kEpisodeLen, kEpisodeLen) =
        episodes[e].rows;
  }
  return m;
}

inline void export_csv(const std::string& path,
                       const std::vector<TimestepRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_csv: cannot open " + path);
  out.precision(17);
  out << "theme,episode_id,attempt,policy,seed,supplemental,"
         "start_rot_x,start_rot_y,start_rot_z,start_upright_offset,"
         "action_x,action_z,post_rot_x,post_rot_y,post_rot_z,"
         "post_upright_offset,jitter_x,jitter_y,jitter_z,"
         "obs_height,obs_cog_x,obs_cog_z,reward,cum_episode_reward,"
         "cum_mean_episode_reward\n";
  for (const auto& r : records) {
    out << kind_name(r.theme) << ',' << r.episode_id << ',' << r.attempt << ','
        << r.policy_label << ',' << r.seed << ',' << (r.supplemental ? 1 : 0);
    for (double v : r.features()) out << ',' << v;
    out << "\n";
  }
}

}  // namespace stacknov
