#pragma once

#include <string>
#include <vector>

#include "pole/machine.hpp"
#include "pole/policies.hpp"
#include "pole/simulator.hpp"

namespace pole {

// Per-policy aggregate over the evaluation seeds of one (topology, workload)
// cell.
struct PolicySummary {
  std::string policy;
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_throughput = 0.0;
  double mean_local = 0.0;
  double mean_remote = 0.0;
};

struct EvalCell {
  std::string topology;
  std::string workload;
  bool seen = false;  // (topology, workload) present in the training dataset
  std::vector<PolicySummary> policies;
  double pole_mean = 0.0;
  double best_baseline_mean = 0.0;
  std::string best_baseline;
  double speedup = 0.0;  // pole_mean / best_baseline_mean
};

struct EvalReport {
  std::vector<EvalCell> cells;
};

// One row per evaluated episode: the raw numbers behind the summary.
std::string eval_raw_csv(const std::vector<Episode>& episodes);

std::string eval_summary_csv(const EvalReport& report);

// Training-curve CSV: epoch, loss, accuracy.
std::string train_curve_csv(const std::vector<double>& losses, const std::vector<double>& accs);

// 16-column chunk grid; row i starts at chunk i*16. Text cells carry the
// NUMA node as a bracketed prefix: "[node] core".
std::string policy_grid_text(const Schedule& schedule, const MachineTopology& topology);

// Same layout as a standalone SVG: one rect per cell, label = core id, fill
// from a fixed 8-color palette indexed by NUMA node.
std::string policy_grid_svg(const Schedule& schedule, const MachineTopology& topology);

// Schedule file: "chunk,core" CSV with a header row.
std::string schedule_to_csv(const Schedule& schedule);
Schedule schedule_from_csv_file(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace pole
