#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pole/machine.hpp"
#include "pole/policies.hpp"
#include "pole/workload.hpp"

namespace pole {

// One DB-token: synthesized PMU counters plus throughput for a measurement
// window.
struct HardwareProfile {
  double clock_cycles = 0.0;
  double cache_misses = 0.0;
  double branch_misses = 0.0;
  double local_dram_accesses = 0.0;
  double remote_dram_accesses = 0.0;
  double throughput_qps = 0.0;

  static constexpr int kNumFeatures = 6;
  std::array<double, kNumFeatures> to_vector() const {
    return {clock_cycles,         cache_misses,          branch_misses,
            local_dram_accesses,  remote_dram_accesses,  throughput_qps};
  }
};

struct StepRecord {
  int timestep = 0;
  double rtg = 0.0;
  HardwareProfile state;
  CoreId action;
  double reward = 0.0;
};

struct Episode {
  std::string topology_name;
  std::string workload_name;
  uint64_t seed = 0;
  std::string policy;  // provenance label, e.g. "os-interleave" or "random:b0.50:s3"
  int num_cores = 0;   // action space of the originating topology
  std::vector<StepRecord> steps;
  double total_return = 0.0;
  // Aggregates over all executed windows (bootstrap excluded).
  double mean_throughput_qps = 0.0;
  double total_local_accesses = 0.0;
  double total_remote_accesses = 0.0;
};

void validate_episode(const Episode& episode);

// How serving cores are resolved each window.
//   OsManaged:    per-window rotation noise within the chunk's node (OS:D,
//                 OS:I, SE:N run this way).
//   Pinned:       the schedule's core serves, exactly (inferred policies).
//   SharedNothing: pinned plus the isolation discount on the contention term.
enum class SchedulingMode { OsManaged, Pinned, SharedNothing };

struct SimParams {
  double cache_miss_rate = 0.2;
  double branch_rate = 0.05;
  double unassigned_penalty = 1.5;   // latency factor for not-yet-assigned chunks
  double rotation_prob = 0.25;       // per-chunk per-window re-draw under OsManaged
  double sn_contention_discount = 0.95;
};

struct RunOptions {
  SchedulingMode mode = SchedulingMode::OsManaged;
  SimParams params;
  // Normalization denominator for rewards. <= 0 means compute it on the fly
  // via reference_throughput().
  double reference_throughput = 0.0;
};

// Step-wise episode execution. The same machinery backs offline probing
// (run_episode) and closed-loop inference, so the two produce identical
// trajectories for identical inputs.
class EpisodeSession {
 public:
  EpisodeSession(const MachineTopology& topology, const IndexConfig& index,
                 const WorkloadSpec& workload, uint64_t seed, const RunOptions& options);

  // s_0: one probe window executed before any chunk is assigned.
  const HardwareProfile& bootstrap_profile() const { return bootstrap_; }

  int current_step() const { return step_; }
  bool done() const { return step_ >= index_.num_chunks; }

  // Assigns chunk `current_step()` to `core`, executes one window, and
  // returns the normalized (and grid-quantized) reward.
  double step(CoreId core);

  // Profile of the most recently executed window (s_{t+1} after step t).
  const HardwareProfile& last_profile() const { return last_profile_; }

  double reference() const { return reference_; }

  Episode finish(const std::string& policy_label) const;

 private:
  HardwareProfile execute_window(uint64_t window_seed, int assigned_upto);

  MachineTopology topology_;
  IndexConfig index_;       // as configured at episode start
  WorkloadSpec workload_;
  uint64_t seed_;
  RunOptions options_;
  IndexConfig live_index_;  // grows as updates insert records
  double reference_ = 1.0;
  double accesses_per_op_ = 1.0;
  int64_t window_updates_ = 0;

  std::vector<CoreId> assigned_;
  HardwareProfile bootstrap_;
  HardwareProfile last_profile_;
  std::vector<HardwareProfile> profiles_;  // profile after each executed window
  std::vector<CoreId> actions_;
  std::vector<double> rewards_;
  int step_ = 0;
};

Episode run_episode(const MachineTopology& topology, const IndexConfig& index,
                    const WorkloadSpec& workload, const Schedule& schedule, uint64_t seed,
                    const RunOptions& options = {}, const std::string& policy_label = "");

// Mean raw window throughput of os_interleave under seed 0; the reward
// normalization denominator, comparable across topologies.
double reference_throughput(const MachineTopology& topology, const IndexConfig& index,
                            const WorkloadSpec& workload, const SimParams& params = {});

// Rewards and RTGs are kept on a 2^-20 grid so return arithmetic is exact in
// double precision (sums and differences of grid values this size never
// round).
double quantize_reward(double value);

}  // namespace pole
