#include "pole/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "pole/errors.hpp"
#include "pole/policies.hpp"
#include "pole/rng.hpp"

namespace pole {

using nlohmann::json;

namespace {

constexpr uint64_t kProbeTag = 0x70726f626500ULL;
constexpr uint64_t kEvalTag = 0x6576616c00ULL;
constexpr uint64_t kRandomPolicyTag = 0x72616e64706f6cULL;

uint64_t label_hash(const std::string& s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t cell_seed(uint64_t base, uint64_t tag, const std::string& topo, const std::string& wl,
                   const std::string& policy, int i) {
  const uint64_t cell = label_hash(topo + "|" + wl + "|" + policy);
  return mix_seed(mix_seed(base, tag, cell), static_cast<uint64_t>(i));
}

bool is_baseline_kind(const std::string& kind) {
  return kind == "os-default" || kind == "os-interleave" || kind == "se-numa" ||
         kind == "shared-nothing";
}

BaselineKind baseline_kind_from_name(const std::string& kind) {
  if (kind == "os-default") return BaselineKind::OsDefault;
  if (kind == "os-interleave") return BaselineKind::OsInterleave;
  if (kind == "se-numa") return BaselineKind::SharedEverythingNuma;
  if (kind == "shared-nothing") return BaselineKind::SharedNothing;
  throw ConfigError("unknown baseline policy '" + kind + "'");
}

SimParams sim_from_json(const json& j, SimParams base) {
  if (j.contains("cache_miss_rate")) base.cache_miss_rate = j.at("cache_miss_rate").get<double>();
  if (j.contains("branch_rate")) base.branch_rate = j.at("branch_rate").get<double>();
  if (j.contains("unassigned_penalty")) {
    base.unassigned_penalty = j.at("unassigned_penalty").get<double>();
  }
  if (j.contains("rotation_prob")) base.rotation_prob = j.at("rotation_prob").get<double>();
  if (j.contains("sn_contention_discount")) {
    base.sn_contention_discount = j.at("sn_contention_discount").get<double>();
  }
  return base;
}

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

void validate_plan(const ExperimentPlan& plan) {
  if (plan.topologies.empty()) throw ConfigError("plan lists no topologies");
  if (plan.workloads.empty()) throw ConfigError("plan lists no workloads");
  if (plan.policy_pool.empty()) throw ConfigError("plan lists no policies");
  if (plan.num_chunks < 1) throw ConfigError("plan num_chunks must be >= 1");
  for (const PolicySpec& p : plan.policy_pool) {
    if (!is_baseline_kind(p.kind) && p.kind != "random") {
      throw ConfigError("unknown policy kind '" + p.kind + "' in the plan");
    }
    if (p.count < 1) throw ConfigError("policy '" + p.kind + "' has count < 1");
    if (p.kind == "random" && (p.locality_bias < 0.0 || p.locality_bias > 1.0)) {
      throw ConfigError("random policy locality_bias must be in [0, 1]");
    }
  }
  // Resolve every name up front so a bad plan fails before any episode runs.
  for (const std::string& t : plan.topologies) resolve_topology(t);
  for (const std::string& w : plan.workloads) resolve_workload(w);
}

ExperimentPlan load_plan_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  ExperimentPlan plan;
  try {
    plan.topologies = j.at("topologies").get<std::vector<std::string>>();
    plan.workloads = j.at("workloads").get<std::vector<std::string>>();
    if (j.contains("num_chunks")) plan.num_chunks = j.at("num_chunks").get<int>();
    if (j.contains("sim")) plan.sim = sim_from_json(j.at("sim"), plan.sim);
    for (const json& pj : j.at("policies")) {
      PolicySpec spec;
      spec.kind = pj.at("kind").get<std::string>();
      if (pj.contains("count")) spec.count = pj.at("count").get<int>();
      if (pj.contains("locality_bias")) spec.locality_bias = pj.at("locality_bias").get<double>();
      plan.policy_pool.push_back(spec);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  validate_plan(plan);
  return plan;
}

ExperimentPlan default_plan() {
  ExperimentPlan plan;
  plan.topologies = {"sandy-bridge", "grace-hopper"};
  plan.workloads = {"ycsb-a", "ycsb-c", "ycsb-e"};
  plan.policy_pool = {
      {"os-default", 2, 0.0},      {"os-interleave", 2, 0.0}, {"se-numa", 2, 0.0},
      {"shared-nothing", 2, 0.0},  {"random", 20, 0.5},       {"random", 20, 0.85},
  };
  return plan;
}

SchedulingMode mode_for_policy(const std::string& label) {
  if (label.rfind("os-", 0) == 0) return SchedulingMode::OsManaged;
  if (label.rfind("shared-nothing", 0) == 0) return SchedulingMode::SharedNothing;
  return SchedulingMode::Pinned;
}

ProbeResult run_probe(const ExperimentPlan& plan, uint64_t base_seed) {
  validate_plan(plan);
  ProbeResult result;
  for (const std::string& topo_name : plan.topologies) {
    const MachineTopology topo = resolve_topology(topo_name);
    for (const std::string& wl_name : plan.workloads) {
      const WorkloadSpec workload = resolve_workload(wl_name);
      IndexConfig index;
      index.num_chunks = plan.num_chunks;
      const double reference = reference_throughput(topo, index, workload, plan.sim);
      for (const PolicySpec& spec : plan.policy_pool) {
        std::string label = spec.kind;
        if (spec.kind == "random") {
          char b[32];
          std::snprintf(b, sizeof(b), "random:b%.2f", spec.locality_bias);
          label = b;
        }
        ProbeCellSummary cell;
        cell.topology = topo.name;
        cell.workload = workload.name;
        cell.policy = label;
        cell.min_return = std::numeric_limits<double>::infinity();
        cell.max_return = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        for (int i = 0; i < spec.count; ++i) {
          const uint64_t seed = cell_seed(base_seed, kProbeTag, topo.name, workload.name, label, i);
          Schedule schedule;
          if (spec.kind == "random") {
            schedule = random_policy(topo, index, mix_seed(seed, kRandomPolicyTag),
                                     spec.locality_bias);
          } else {
            schedule = make_baseline(baseline_kind_from_name(spec.kind), topo, index);
          }
          RunOptions options;
          options.mode = mode_for_policy(label);
          options.params = plan.sim;
          options.reference_throughput = reference;
          const Episode ep = run_episode(topo, index, workload, schedule, seed, options, label);
          sum += ep.total_return;
          cell.min_return = std::min(cell.min_return, ep.total_return);
          cell.max_return = std::max(cell.max_return, ep.total_return);
          ++cell.episodes;
          result.dataset.append_episode(ep);
        }
        cell.mean_return = sum / spec.count;
        result.cells.push_back(cell);
      }
    }
  }
  return result;
}

EvalOutput run_evaluation(const ModelParams& params, const FeatureStats& stats,
                          const OfflineDataset* provenance,
                          const std::vector<std::string>& topologies,
                          const std::vector<std::string>& workloads, const EvalOptions& options) {
  if (topologies.empty() || workloads.empty()) {
    throw ConfigError("evaluation needs at least one topology and one workload");
  }
  if (options.num_seeds < 1) throw ConfigError("evaluation needs at least one seed");

  double target = options.target_return;
  if (target <= 0.0) {
    if (provenance == nullptr || provenance->episodes().empty()) {
      throw ConfigError(
          "no target return given and no dataset to derive one from; pass a dataset or an "
          "explicit target");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const Episode& ep : provenance->episodes()) best = std::max(best, ep.total_return);
    target = 1.1 * best;
  }

  const BaselineKind kinds[4] = {BaselineKind::OsDefault, BaselineKind::OsInterleave,
                                 BaselineKind::SharedEverythingNuma, BaselineKind::SharedNothing};

  EvalOutput out;
  for (const std::string& topo_name : topologies) {
    const MachineTopology topo = resolve_topology(topo_name);
    for (const std::string& wl_name : workloads) {
      const WorkloadSpec workload = resolve_workload(wl_name);
      IndexConfig index;
      index.num_chunks = options.num_chunks;
      const double reference = reference_throughput(topo, index, workload, options.sim);

      EvalCell cell;
      cell.topology = topo.name;
      cell.workload = workload.name;
      if (provenance != nullptr) {
        for (const Episode& ep : provenance->episodes()) {
          if (ep.topology_name == topo.name && ep.workload_name == workload.name) {
            cell.seen = true;
            break;
          }
        }
      }

      std::vector<std::vector<double>> returns(5);
      std::vector<std::vector<double>> qps(5);
      std::vector<std::vector<double>> local(5), remote(5);
      std::vector<std::string> labels;
      for (const BaselineKind k : kinds) labels.push_back(baseline_name(k));
      labels.push_back("pole-dt");

      for (int s = 0; s < options.num_seeds; ++s) {
        const uint64_t seed =
            cell_seed(options.base_seed, kEvalTag, topo.name, workload.name, "eval", s);
        for (int p = 0; p < 4; ++p) {
          const Schedule schedule = make_baseline(kinds[p], topo, index);
          RunOptions ro;
          ro.mode = mode_for_policy(labels[p]);
          ro.params = options.sim;
          ro.reference_throughput = reference;
          const Episode ep =
              run_episode(topo, index, workload, schedule, seed, ro, labels[p]);
          returns[p].push_back(ep.total_return);
          qps[p].push_back(ep.mean_throughput_qps);
          local[p].push_back(ep.total_local_accesses);
          remote[p].push_back(ep.total_remote_accesses);
          out.episodes.push_back(ep);
        }
        RunOptions ro;
        ro.mode = SchedulingMode::Pinned;
        ro.params = options.sim;
        ro.reference_throughput = reference;
        InferResult inf = infer_schedule(params, stats, topo, index, workload, target,
                                         options.select, seed, ro);
        returns[4].push_back(inf.episode.total_return);
        qps[4].push_back(inf.episode.mean_throughput_qps);
        local[4].push_back(inf.episode.total_local_accesses);
        remote[4].push_back(inf.episode.total_remote_accesses);
        out.episodes.push_back(inf.episode);
        PoleRun run;
        run.topology = topo.name;
        run.workload = workload.name;
        run.seed = seed;
        run.schedule = std::move(inf.schedule);
        run.realized_return = inf.episode.total_return;
        out.pole_runs.push_back(std::move(run));
      }

      double best_mean = -std::numeric_limits<double>::infinity();
      for (int p = 0; p < 5; ++p) {
        const Summary ret = summarize(returns[p]);
        PolicySummary ps;
        ps.policy = labels[p];
        ps.mean_return = ret.mean;
        ps.std_return = ret.stddev;
        ps.mean_throughput = summarize(qps[p]).mean;
        ps.mean_local = summarize(local[p]).mean;
        ps.mean_remote = summarize(remote[p]).mean;
        cell.policies.push_back(ps);
        if (p < 4 && ret.mean > best_mean) {
          best_mean = ret.mean;
          cell.best_baseline = labels[p];
        }
      }
      cell.best_baseline_mean = best_mean;
      cell.pole_mean = cell.policies[4].mean_return;
      cell.speedup = cell.pole_mean / cell.best_baseline_mean;
      out.report.cells.push_back(std::move(cell));
    }
  }
  return out;
}

NoveltyReport novelty_scan(const Schedule& schedule, const std::string& topology_name,
                           const OfflineDataset& dataset) {
  NoveltyReport report;
  const int n = schedule.num_chunks();
  if (n == 0) throw ContractError("cannot scan an empty schedule");
  for (size_t e = 0; e < dataset.episodes().size(); ++e) {
    const Episode& ep = dataset.episodes()[e];
    if (ep.topology_name != topology_name) continue;
    if (static_cast<int>(ep.steps.size()) != n) {
      throw ContractError("episode " + std::to_string(e) + " has a length-" +
                          std::to_string(ep.steps.size()) +
                          " schedule; cannot compare against length " + std::to_string(n));
    }
    int dist = 0;
    for (int i = 0; i < n; ++i) {
      if (ep.steps[i].action.index != schedule.assignments[i].index) ++dist;
    }
    ++report.compared;
    if (report.min_distance < 0 || dist < report.min_distance) {
      report.min_distance = dist;
      report.nearest_episode = static_cast<int>(e);
      report.nearest_policy = ep.policy;
    }
  }
  return report;
}

}  // namespace pole
