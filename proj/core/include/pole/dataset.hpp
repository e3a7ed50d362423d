#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pole/rng.hpp"
#include "pole/simulator.hpp"

namespace pole {

// Per-feature first/second moments over every state vector in a dataset.
// Used to z-score states before they reach the model; a tiny std clamp keeps
// constant features from dividing by zero.
struct FeatureStats {
  std::array<double, HardwareProfile::kNumFeatures> mean{};
  std::array<double, HardwareProfile::kNumFeatures> stddev{};
  double rtg_mean = 0.0;
  double rtg_std = 1.0;

  static constexpr double kMinStd = 1e-6;

  std::array<double, HardwareProfile::kNumFeatures> normalize(
      const std::array<double, HardwareProfile::kNumFeatures>& raw) const;
  std::array<double, HardwareProfile::kNumFeatures> denormalize(
      const std::array<double, HardwareProfile::kNumFeatures>& norm) const;
  double normalize_rtg(double rtg) const;
  double denormalize_rtg(double norm) const;
};

// A fixed-length slice of an episode ending at some timestep, left-padded when
// the episode has fewer than `length` steps before that point. Padded slots
// are zero-filled and masked out.
struct ContextWindow {
  int length = 0;
  std::vector<double> rtg;        // [length]
  std::vector<double> states;     // [length * kNumFeatures], row-major
  std::vector<int> actions;       // [length]; input token ids
  std::vector<int> timesteps;     // [length]; absolute episode timestep
  std::vector<uint8_t> valid;     // [length]; 0 = padding
  std::vector<int> targets;       // [length]; action to predict at each slot, -1 on padding
};

class OfflineDataset {
 public:
  void append_episode(const Episode& episode);

  const std::vector<Episode>& episodes() const { return episodes_; }
  int64_t total_steps() const { return total_steps_; }
  // Largest core count across episodes; the minimum usable action vocab.
  int action_vocab_size() const { return max_cores_; }

  FeatureStats compute_stats() const;

  // Window over episodes_[episode] ending at timestep `end_t` (inclusive).
  ContextWindow make_window(int episode, int end_t, int length,
                            const FeatureStats& stats) const;

  // Uniform over all (episode, end timestep) pairs.
  std::vector<ContextWindow> sample_batch(int batch_size, int length,
                                          const FeatureStats& stats, Rng& rng) const;

  void save_jsonl(const std::string& path) const;
  static OfflineDataset load_jsonl(const std::string& path);

  void write_jsonl(std::ostream& out) const;
  static OfflineDataset read_jsonl(std::istream& in, const std::string& origin);

 private:
  std::vector<Episode> episodes_;
  int64_t total_steps_ = 0;
  int max_cores_ = 0;
};

// One line per episode; doubles round-trip bitwise.
std::string episode_to_json_line(const Episode& episode);
Episode episode_from_json_line(const std::string& line);

constexpr int kDatasetSchemaVersion = 1;

}  // namespace pole
