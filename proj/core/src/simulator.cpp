#include "pole/simulator.hpp"

#include <cmath>

#include "pole/errors.hpp"
#include "pole/rng.hpp"

namespace pole {

namespace {

constexpr uint64_t kWindowTag = 0x77494e44;     // batch sampling stream
constexpr uint64_t kRotationTag = 0x524f5441;   // serving-core rotation stream
constexpr uint64_t kBootstrapWindow = 0xb007ull << 32;

// Accesses-per-op is snapped to a 2^-8 grid: integer op counts times a dyadic
// rational keep every counter sum exact, which is what makes the
// local+remote == total conservation bitwise.
double quantize_accesses(double value) { return std::round(value * 256.0) / 256.0; }

}  // namespace

double quantize_reward(double value) {
  return std::round(value * 1048576.0) / 1048576.0;
}

void validate_episode(const Episode& episode) {
  if (episode.steps.empty()) throw ContractError("episode has no steps");
  if (episode.num_cores < 1) throw ContractError("episode num_cores must be >= 1");
  double expect_rtg = episode.steps.front().rtg;
  for (size_t t = 0; t < episode.steps.size(); ++t) {
    const StepRecord& s = episode.steps[t];
    if (s.timestep != static_cast<int>(t)) {
      throw ContractError("episode timesteps not contiguous at index " + std::to_string(t));
    }
    if (s.action.index < 0 || s.action.index >= episode.num_cores) {
      throw ContractError("episode action out of range at t=" + std::to_string(t));
    }
    if (s.rtg != expect_rtg) {
      throw ContractError("episode RTG chain broken at t=" + std::to_string(t));
    }
    expect_rtg = s.rtg - s.reward;
    for (double v : s.state.to_vector()) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ContractError("episode has a negative or non-finite profile value at t=" +
                            std::to_string(t));
      }
    }
  }
  if (expect_rtg != 0.0) {
    throw ContractError("episode RTGs do not telescope to zero");
  }
  if (episode.total_return != episode.steps.front().rtg) {
    throw ContractError("episode total_return does not equal the initial RTG");
  }
}

EpisodeSession::EpisodeSession(const MachineTopology& topology, const IndexConfig& index,
                               const WorkloadSpec& workload, uint64_t seed,
                               const RunOptions& options)
    : topology_(topology), index_(index), workload_(workload), seed_(seed), options_(options) {
  validate_topology(topology_);
  validate_index(index_);
  validate_workload(workload_);
  live_index_ = index_;
  accesses_per_op_ = quantize_accesses(
      1.0 + options_.params.cache_miss_rate * std::log2(live_index_.keys_per_chunk));
  reference_ = options_.reference_throughput > 0.0
                   ? options_.reference_throughput
                   : reference_throughput(topology_, index_, workload_, options_.params);
  assigned_.assign(index_.num_chunks, CoreId{-1});
  bootstrap_ = execute_window(mix_seed(seed_, kWindowTag, kBootstrapWindow), /*assigned_upto=*/0);
  last_profile_ = bootstrap_;
  profiles_.reserve(index_.num_chunks);
}

double EpisodeSession::step(CoreId core) {
  if (done()) throw ContractError("episode is complete; no further steps");
  if (core.index < 0 || core.index >= topology_.total_cores()) {
    throw ContractError("action core " + std::to_string(core.index) + " out of range for '" +
                        topology_.name + "'");
  }
  assigned_[step_] = core;
  const int t = step_;
  ++step_;
  last_profile_ = execute_window(mix_seed(seed_, kWindowTag, static_cast<uint64_t>(t)), step_);
  profiles_.push_back(last_profile_);
  actions_.push_back(core);
  // Updates insert fresh records, so the index deepens a little between
  // windows; the bootstrap probe does not grow it.
  if (window_updates_ > 0) {
    live_index_ = grow_index(live_index_, window_updates_);
    accesses_per_op_ = quantize_accesses(
        1.0 + options_.params.cache_miss_rate * std::log2(live_index_.keys_per_chunk));
  }
  const double reward = quantize_reward(last_profile_.throughput_qps / reference_);
  rewards_.push_back(reward);
  return reward;
}

HardwareProfile EpisodeSession::execute_window(uint64_t window_seed, int assigned_upto) {
  const int chunks = live_index_.num_chunks;
  const int cores = topology_.total_cores();
  const int nodes = topology_.num_nodes;
  const SimParams& p = options_.params;

  QueryBatch batch = sample_batch(live_index_, workload_, window_seed);
  window_updates_ = 0;
  for (int64_t u : batch.updates) window_updates_ += u;

  // Resolve serving core and data node per chunk. Data follows the assigned
  // core (implicit placement); rotation noise moves compute within the node
  // only, so it never moves data.
  std::vector<int> serve_core(chunks, 0);
  std::vector<int> data_node(chunks, 0);
  std::vector<bool> penalized(chunks, false);
  Rng rotation(mix_seed(seed_, kRotationTag, window_seed));
  const bool rotate = options_.mode == SchedulingMode::OsManaged;
  for (int c = 0; c < chunks; ++c) {
    if (c < assigned_upto && assigned_[c].index >= 0) {
      const int base = assigned_[c].index;
      const int node = base / topology_.cores_per_node;
      int core = base;
      if (rotate && rotation.next_double() < p.rotation_prob) {
        core = node * topology_.cores_per_node +
               static_cast<int>(rotation.next_below(
                   static_cast<uint64_t>(topology_.cores_per_node)));
      }
      serve_core[c] = core;
      data_node[c] = node;
    } else {
      serve_core[c] = 0;
      data_node[c] = 0;
      penalized[c] = true;
    }
  }

  // Pass 1: integer access-unit counts per destination node (for the
  // saturation term) and the local/remote split.
  std::vector<int64_t> units_to_node(nodes, 0);
  int64_t local_units = 0;
  int64_t remote_units = 0;
  int64_t total_units = 0;
  for (int c = 0; c < chunks; ++c) {
    const int64_t points = batch.reads[c] + batch.updates[c];
    if (points == 0) continue;
    units_to_node[data_node[c]] += points;
    total_units += points;
    local_units += points;  // point ops always hit their own chunk's node
  }
  for (const ScanOp& s : batch.scans) {
    const int origin_node = serve_core[s.origin_chunk] / topology_.cores_per_node;
    for (int j = s.origin_chunk; j < s.origin_chunk + s.length; ++j) {
      units_to_node[data_node[j]] += 1;
      total_units += 1;
      if (data_node[j] == origin_node) {
        local_units += 1;
      } else {
        remote_units += 1;
      }
    }
  }

  // Saturation factor per destination node, shared by every access in the
  // window (steady-state load model).
  const double discount =
      options_.mode == SchedulingMode::SharedNothing ? p.sn_contention_discount : 1.0;
  std::vector<double> node_factor(nodes, 1.0);
  for (int n = 0; n < nodes; ++n) {
    double saturation = 0.0;
    if (topology_.contention_exponent > 0.0) {
      const double load = static_cast<double>(units_to_node[n]) * accesses_per_op_;
      saturation = std::pow(load / topology_.node_bandwidth_capacity,
                            topology_.contention_exponent);
    }
    node_factor[n] = 1.0 + discount * saturation;
  }

  // Pass 2: per-core busy time.
  std::vector<double> core_time_ns(cores, 0.0);
  auto unit_latency = [&](int from_node, int to_node, bool penalty) {
    double lat = topology_.local_latency_ns * topology_.distance_matrix[from_node][to_node] *
                 node_factor[to_node];
    if (penalty) lat *= p.unassigned_penalty;
    return lat;
  };
  for (int c = 0; c < chunks; ++c) {
    const int64_t points = batch.reads[c] + batch.updates[c];
    if (points == 0) continue;
    const int node = serve_core[c] / topology_.cores_per_node;
    core_time_ns[serve_core[c]] += static_cast<double>(points) * accesses_per_op_ *
                                   unit_latency(node, data_node[c], penalized[c]);
  }
  for (const ScanOp& s : batch.scans) {
    const int core = serve_core[s.origin_chunk];
    const int origin_node = core / topology_.cores_per_node;
    const bool penalty = penalized[s.origin_chunk];
    double scan_ns = 0.0;
    for (int j = s.origin_chunk; j < s.origin_chunk + s.length; ++j) {
      scan_ns += accesses_per_op_ * unit_latency(origin_node, data_node[j], penalty);
    }
    core_time_ns[core] += scan_ns;
  }

  double critical_ns = 0.0;
  double busy_ns = 0.0;
  for (double t : core_time_ns) {
    busy_ns += t;
    if (t > critical_ns) critical_ns = t;
  }
  if (critical_ns <= 0.0) {
    throw NumericError("window produced a zero critical path");
  }

  HardwareProfile profile;
  profile.clock_cycles = busy_ns * topology_.clock_ghz;
  profile.cache_misses = static_cast<double>(total_units) * (accesses_per_op_ - 1.0);
  profile.branch_misses = static_cast<double>(total_units) * p.branch_rate;
  profile.local_dram_accesses = static_cast<double>(local_units) * accesses_per_op_;
  profile.remote_dram_accesses = static_cast<double>(remote_units) * accesses_per_op_;
  profile.throughput_qps =
      static_cast<double>(workload_.queries_per_window) / (critical_ns * 1e-9);
  return profile;
}

Episode EpisodeSession::finish(const std::string& policy_label) const {
  if (!done()) throw ContractError("episode is not complete");
  const int n = index_.num_chunks;
  Episode ep;
  ep.topology_name = topology_.name;
  ep.workload_name = workload_.name;
  ep.seed = seed_;
  ep.policy = policy_label;
  ep.num_cores = topology_.total_cores();
  ep.steps.resize(n);
  // Rewards sit on the 2^-20 grid, so the backward RTG accumulation is exact
  // and telescopes bitwise in both directions.
  double rtg = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    rtg += rewards_[t];
    ep.steps[t].timestep = t;
    ep.steps[t].rtg = rtg;
    ep.steps[t].state = t == 0 ? bootstrap_ : profiles_[t - 1];
    ep.steps[t].action = actions_[t];
    ep.steps[t].reward = rewards_[t];
  }
  ep.total_return = rtg;
  double qps_sum = 0.0;
  for (const HardwareProfile& p : profiles_) {
    qps_sum += p.throughput_qps;
    ep.total_local_accesses += p.local_dram_accesses;
    ep.total_remote_accesses += p.remote_dram_accesses;
  }
  ep.mean_throughput_qps = qps_sum / static_cast<double>(n);
  validate_episode(ep);
  return ep;
}

Episode run_episode(const MachineTopology& topology, const IndexConfig& index,
                    const WorkloadSpec& workload, const Schedule& schedule, uint64_t seed,
                    const RunOptions& options, const std::string& policy_label) {
  if (schedule.num_chunks() != index.num_chunks) {
    throw ContractError("schedule length " + std::to_string(schedule.num_chunks()) +
                        " does not match index.num_chunks " + std::to_string(index.num_chunks));
  }
  validate_schedule(schedule, topology);
  EpisodeSession session(topology, index, workload, seed, options);
  for (const CoreId& core : schedule.assignments) session.step(core);
  return session.finish(policy_label);
}

double reference_throughput(const MachineTopology& topology, const IndexConfig& index,
                            const WorkloadSpec& workload, const SimParams& params) {
  RunOptions options;
  options.mode = SchedulingMode::OsManaged;
  options.params = params;
  options.reference_throughput = 1.0;  // raw throughput in the rewards' place
  const Schedule schedule = os_interleave(topology, index);
  EpisodeSession session(topology, index, workload, /*seed=*/0, options);
  double sum_qps = 0.0;
  for (const CoreId& core : schedule.assignments) {
    session.step(core);
    sum_qps += session.last_profile().throughput_qps;
  }
  return sum_qps / static_cast<double>(index.num_chunks);
}

}  // namespace pole
