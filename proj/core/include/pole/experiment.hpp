#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pole/dataset.hpp"
#include "pole/dtmodel.hpp"
#include "pole/machine.hpp"
#include "pole/report.hpp"
#include "pole/simulator.hpp"
#include "pole/workload.hpp"

namespace pole {

// One entry of the probe policy pool. Baseline kinds contribute `count`
// episodes per cell under distinct seeds; "random" draws a fresh schedule per
// episode with the given locality bias.
struct PolicySpec {
  std::string kind;  // os-default | os-interleave | se-numa | shared-nothing | random
  int count = 1;
  double locality_bias = 0.5;
};

struct ExperimentPlan {
  std::vector<std::string> topologies;
  std::vector<std::string> workloads;
  std::vector<PolicySpec> policy_pool;
  int num_chunks = 256;
  SimParams sim;
};

void validate_plan(const ExperimentPlan& plan);
ExperimentPlan load_plan_file(const std::string& path);  // JSON
// Probe plan shaped like the reference experiment: the two training machines,
// three workload mixes, baselines plus a random pool.
ExperimentPlan default_plan();

struct ProbeCellSummary {
  std::string topology;
  std::string workload;
  std::string policy;
  int episodes = 0;
  double mean_return = 0.0;
  double min_return = 0.0;
  double max_return = 0.0;
};

struct ProbeResult {
  OfflineDataset dataset;
  std::vector<ProbeCellSummary> cells;
};

ProbeResult run_probe(const ExperimentPlan& plan, uint64_t base_seed);

struct EvalOptions {
  int num_seeds = 5;
  uint64_t base_seed = 0;
  double target_return = 0.0;  // <= 0: 1.1 x the dataset's best return
  int num_chunks = 256;
  SimParams sim;
  SelectMode select = SelectMode::Greedy;
};

struct PoleRun {
  std::string topology;
  std::string workload;
  uint64_t seed = 0;
  Schedule schedule;
  double realized_return = 0.0;
};

struct EvalOutput {
  EvalReport report;
  std::vector<Episode> episodes;  // every measured episode, plan order
  std::vector<PoleRun> pole_runs;
};

// Paired comparison: per (topology, workload, seed), the four baselines and
// the inferred schedule all execute under the same episode seed.
EvalOutput run_evaluation(const ModelParams& params, const FeatureStats& stats,
                          const OfflineDataset* provenance,
                          const std::vector<std::string>& topologies,
                          const std::vector<std::string>& workloads, const EvalOptions& options);

// Scheduling mode a policy label runs under: OS-managed for the os-*
// baselines, shared-nothing for its namesake, pinned otherwise.
SchedulingMode mode_for_policy(const std::string& label);

struct NoveltyReport {
  int min_distance = -1;   // -1: nothing comparable in the dataset
  int nearest_episode = -1;
  std::string nearest_policy;
  int compared = 0;
};

// Minimum Hamming distance between `schedule` and every same-topology
// training schedule.
NoveltyReport novelty_scan(const Schedule& schedule, const std::string& topology_name,
                           const OfflineDataset& dataset);

}  // namespace pole
