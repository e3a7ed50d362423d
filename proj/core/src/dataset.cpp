#include "pole/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pole/errors.hpp"

namespace pole {

using nlohmann::json;

std::array<double, HardwareProfile::kNumFeatures> FeatureStats::normalize(
    const std::array<double, HardwareProfile::kNumFeatures>& raw) const {
  std::array<double, HardwareProfile::kNumFeatures> out{};
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
    out[f] = (raw[f] - mean[f]) / stddev[f];
  }
  return out;
}

std::array<double, HardwareProfile::kNumFeatures> FeatureStats::denormalize(
    const std::array<double, HardwareProfile::kNumFeatures>& norm) const {
  std::array<double, HardwareProfile::kNumFeatures> out{};
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
    out[f] = norm[f] * stddev[f] + mean[f];
  }
  return out;
}

double FeatureStats::normalize_rtg(double rtg) const { return (rtg - rtg_mean) / rtg_std; }

double FeatureStats::denormalize_rtg(double norm) const { return norm * rtg_std + rtg_mean; }

void OfflineDataset::append_episode(const Episode& episode) {
  validate_episode(episode);
  total_steps_ += static_cast<int64_t>(episode.steps.size());
  if (episode.num_cores > max_cores_) max_cores_ = episode.num_cores;
  episodes_.push_back(episode);
}

FeatureStats OfflineDataset::compute_stats() const {
  if (episodes_.empty()) {
    throw ContractError("cannot compute stats on an empty dataset");
  }
  FeatureStats stats;
  std::array<double, HardwareProfile::kNumFeatures> sum{};
  std::array<double, HardwareProfile::kNumFeatures> sum_sq{};
  double rtg_sum = 0.0;
  double rtg_sum_sq = 0.0;
  int64_t n = 0;
  for (const Episode& ep : episodes_) {
    for (const StepRecord& s : ep.steps) {
      const auto v = s.state.to_vector();
      for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
        sum[f] += v[f];
        sum_sq[f] += v[f] * v[f];
      }
      rtg_sum += s.rtg;
      rtg_sum_sq += s.rtg * s.rtg;
      ++n;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
    stats.mean[f] = sum[f] * inv_n;
    const double var = std::max(0.0, sum_sq[f] * inv_n - stats.mean[f] * stats.mean[f]);
    stats.stddev[f] = std::max(std::sqrt(var), FeatureStats::kMinStd);
  }
  stats.rtg_mean = rtg_sum * inv_n;
  const double rtg_var = std::max(0.0, rtg_sum_sq * inv_n - stats.rtg_mean * stats.rtg_mean);
  stats.rtg_std = std::max(std::sqrt(rtg_var), FeatureStats::kMinStd);
  return stats;
}

ContextWindow OfflineDataset::make_window(int episode, int end_t, int length,
                                          const FeatureStats& stats) const {
  if (episode < 0 || episode >= static_cast<int>(episodes_.size())) {
    throw ContractError("episode index out of range");
  }
  const Episode& ep = episodes_[episode];
  if (end_t < 0 || end_t >= static_cast<int>(ep.steps.size())) {
    throw ContractError("window end timestep out of range");
  }
  if (length < 1) throw ContractError("context length must be >= 1");

  ContextWindow w;
  w.length = length;
  w.rtg.assign(length, 0.0);
  w.states.assign(static_cast<size_t>(length) * HardwareProfile::kNumFeatures, 0.0);
  w.actions.assign(length, 0);
  w.timesteps.assign(length, 0);
  w.valid.assign(length, 0);
  w.targets.assign(length, -1);

  const int first_t = std::max(0, end_t - length + 1);
  const int pad = length - (end_t - first_t + 1);
  for (int t = first_t; t <= end_t; ++t) {
    const int slot = pad + (t - first_t);
    const StepRecord& s = ep.steps[t];
    w.rtg[slot] = stats.normalize_rtg(s.rtg);
    const auto norm = stats.normalize(s.state.to_vector());
    for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
      w.states[static_cast<size_t>(slot) * HardwareProfile::kNumFeatures + f] = norm[f];
    }
    w.actions[slot] = s.action.index;
    w.timesteps[slot] = s.timestep;
    w.valid[slot] = 1;
    w.targets[slot] = s.action.index;
  }
  return w;
}

std::vector<ContextWindow> OfflineDataset::sample_batch(int batch_size, int length,
                                                        const FeatureStats& stats,
                                                        Rng& rng) const {
  if (episodes_.empty()) throw ContractError("cannot sample from an empty dataset");
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  // Uniform over (episode, end-timestep) pairs, i.e. proportional to episode
  // length. Build a flat index once per call; datasets here are small.
  std::vector<ContextWindow> batch;
  batch.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const int64_t flat = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(total_steps_)));
    int64_t offset = flat;
    int epi = 0;
    while (offset >= static_cast<int64_t>(episodes_[epi].steps.size())) {
      offset -= static_cast<int64_t>(episodes_[epi].steps.size());
      ++epi;
    }
    batch.push_back(make_window(epi, static_cast<int>(offset), length, stats));
  }
  return batch;
}

std::string episode_to_json_line(const Episode& episode) {
  json steps = json::array();
  for (const StepRecord& s : episode.steps) {
    steps.push_back(json{{"action", s.action.index},
                         {"reward", s.reward},
                         {"rtg", s.rtg},
                         {"state", s.state.to_vector()},
                         {"t", s.timestep}});
  }
  json j{{"local_accesses", episode.total_local_accesses},
         {"mean_throughput_qps", episode.mean_throughput_qps},
         {"num_cores", episode.num_cores},
         {"policy", episode.policy},
         {"remote_accesses", episode.total_remote_accesses},
         {"schema_version", kDatasetSchemaVersion},
         {"seed", episode.seed},
         {"steps", std::move(steps)},
         {"topology", episode.topology_name},
         {"total_return", episode.total_return},
         {"workload", episode.workload_name}};
  return j.dump();
}

namespace {

HardwareProfile profile_from_vector(const std::vector<double>& v) {
  if (v.size() != static_cast<size_t>(HardwareProfile::kNumFeatures)) {
    throw IoError("state vector has " + std::to_string(v.size()) + " entries, expected " +
                  std::to_string(int(HardwareProfile::kNumFeatures)));
  }
  HardwareProfile p;
  p.clock_cycles = v[0];
  p.cache_misses = v[1];
  p.branch_misses = v[2];
  p.local_dram_accesses = v[3];
  p.remote_dram_accesses = v[4];
  p.throughput_qps = v[5];
  return p;
}

}  // namespace

Episode episode_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed episode record: ") + e.what());
  }
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kDatasetSchemaVersion) {
      throw IoError("unsupported dataset schema_version " + std::to_string(version));
    }
    Episode ep;
    ep.topology_name = j.at("topology").get<std::string>();
    ep.workload_name = j.at("workload").get<std::string>();
    ep.seed = j.at("seed").get<uint64_t>();
    ep.policy = j.at("policy").get<std::string>();
    ep.num_cores = j.at("num_cores").get<int>();
    ep.total_return = j.at("total_return").get<double>();
    ep.mean_throughput_qps = j.at("mean_throughput_qps").get<double>();
    ep.total_local_accesses = j.at("local_accesses").get<double>();
    ep.total_remote_accesses = j.at("remote_accesses").get<double>();
    for (const json& sj : j.at("steps")) {
      StepRecord s;
      s.timestep = sj.at("t").get<int>();
      s.rtg = sj.at("rtg").get<double>();
      s.state = profile_from_vector(sj.at("state").get<std::vector<double>>());
      s.action = CoreId{sj.at("action").get<int>()};
      s.reward = sj.at("reward").get<double>();
      ep.steps.push_back(s);
    }
    return ep;
  } catch (const json::exception& e) {
    throw IoError(std::string("episode record missing field: ") + e.what());
  }
}

void OfflineDataset::write_jsonl(std::ostream& out) const {
  for (const Episode& ep : episodes_) {
    out << episode_to_json_line(ep) << '\n';
  }
}

OfflineDataset OfflineDataset::read_jsonl(std::istream& in, const std::string& origin) {
  OfflineDataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ds.append_episode(episode_from_json_line(line));
    } catch (const PoleError& e) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

void OfflineDataset::save_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_jsonl(out);
  if (!out) throw IoError("failed while writing '" + path + "'");
}

OfflineDataset OfflineDataset::load_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_jsonl(in, path);
}

}  // namespace pole
