// pole: probe a simulated NUMA machine under known scheduling policies, train
// a return-conditioned transformer on the recorded episodes, and generate new
// index-scheduling policies from it.
//
// Subcommands: probe, train, infer, evaluate, novelty, dataset-stats.
// Global flags: --seed, --out-dir, --config. Every subcommand is
// deterministic given its flags; reruns produce byte-identical files.

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pole/dataset.hpp"
#include "pole/dtmodel.hpp"
#include "pole/errors.hpp"
#include "pole/experiment.hpp"
#include "pole/machine.hpp"
#include "pole/report.hpp"
#include "pole/simulator.hpp"
#include "pole/workload.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pole;

namespace {

struct GlobalArgs {
  uint64_t seed = 0;
  std::string out_dir = ".";
  std::string config_path;
};

// Output names resolve against --out-dir unless given as absolute paths.
std::string out_path(const GlobalArgs& g, const std::string& name) {
  fs::path p(name);
  if (p.is_absolute()) return p.string();
  return (fs::path(g.out_dir) / p).string();
}

void ensure_out_dir(const GlobalArgs& g) {
  std::error_code ec;
  fs::create_directories(g.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + g.out_dir + "': " + ec.message());
}

json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

SimParams sim_params_from_json(const json& j, SimParams base) {
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

double dataset_max_return(const OfflineDataset& ds) {
  double best = 0.0;
  bool any = false;
  for (const Episode& e : ds.episodes()) {
    if (!any || e.total_return > best) best = e.total_return;
    any = true;
  }
  if (!any) throw ConfigError("dataset holds no episodes; cannot derive a target return");
  return best;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeArgs {
  std::string plan_path;
  std::string dataset_out = "dataset.jsonl";
  std::vector<std::string> topologies;
  std::vector<std::string> workloads;
  int num_chunks = 0;  // 0: keep the plan's value
  bool append = false;
};

int cmd_probe(const GlobalArgs& g, const ProbeArgs& a) {
  ExperimentPlan plan;
  std::string plan_src = a.plan_path.empty() ? g.config_path : a.plan_path;
  if (!plan_src.empty()) {
    plan = load_plan_file(plan_src);
  } else {
    plan = default_plan();
  }
  if (!a.topologies.empty()) plan.topologies = a.topologies;
  if (!a.workloads.empty()) plan.workloads = a.workloads;
  if (a.num_chunks > 0) plan.num_chunks = a.num_chunks;
  validate_plan(plan);

  ProbeResult result = run_probe(plan, g.seed);

  ensure_out_dir(g);
  const std::string path = out_path(g, a.dataset_out);
  int64_t prior = 0;
  if (a.append && fs::exists(path)) {
    OfflineDataset existing = OfflineDataset::load_jsonl(path);
    prior = static_cast<int64_t>(existing.episodes().size());
    for (const Episode& e : result.dataset.episodes()) existing.append_episode(e);
    existing.save_jsonl(path);
  } else {
    result.dataset.save_jsonl(path);
  }

  for (const ProbeCellSummary& c : result.cells) {
    std::printf("%-14s %-8s %-16s episodes=%-3d return mean=%.4f min=%.4f max=%.4f\n",
                c.topology.c_str(), c.workload.c_str(), c.policy.c_str(), c.episodes,
                c.mean_return, c.min_return, c.max_return);
  }
  std::printf("wrote %zu episodes (%" PRId64 " steps) to %s", result.dataset.episodes().size(),
              result.dataset.total_steps(), path.c_str());
  if (prior > 0) std::printf(" (appended to %" PRId64 " existing)", prior);
  std::printf("\n");
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string dataset_path;
  std::string checkpoint_out = "model.ckpt";
  std::string curve_out = "train_curve.csv";
  std::string resume_path;
  bool full_scale = false;
  // Sentinels below mean "not set on the command line".
  int context_length = -1;
  int embed_dim = -1;
  int num_layers = -1;
  int num_heads = -1;
  int vocab = -1;
  int max_timestep = -1;
  double dropout = -1.0;
  int epochs = -1;
  int steps_per_epoch = -1;
  int batch_size = -1;
  double lr = -1.0;
  int warmup = -1;
  double clip = -1.0;
};

void model_from_json(const json& j, ModelConfig& cfg) {
  if (j.contains("context_length")) cfg.context_length = j.at("context_length").get<int>();
  if (j.contains("embed_dim")) cfg.embed_dim = j.at("embed_dim").get<int>();
  if (j.contains("num_layers")) cfg.num_layers = j.at("num_layers").get<int>();
  if (j.contains("num_heads")) cfg.num_heads = j.at("num_heads").get<int>();
  if (j.contains("action_vocab_size")) {
    cfg.action_vocab_size = j.at("action_vocab_size").get<int>();
  }
  if (j.contains("max_timestep")) cfg.max_timestep = j.at("max_timestep").get<int>();
  if (j.contains("dropout_rate")) cfg.dropout_rate = j.at("dropout_rate").get<double>();
}

void optimizer_from_json(const json& j, OptimizerSettings& opt) {
  if (j.contains("learning_rate")) opt.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("warmup_steps")) opt.warmup_steps = j.at("warmup_steps").get<int>();
  if (j.contains("clip_norm")) opt.clip_norm = j.at("clip_norm").get<double>();
  if (j.contains("epochs")) opt.epochs = j.at("epochs").get<int>();
  if (j.contains("steps_per_epoch")) opt.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  if (j.contains("batch_size")) opt.batch_size = j.at("batch_size").get<int>();
}

int cmd_train(const GlobalArgs& g, const TrainArgs& a) {
  OfflineDataset ds = OfflineDataset::load_jsonl(a.dataset_path);

  ModelConfig cfg = a.full_scale ? full_scale_config() : ModelConfig{};
  OptimizerSettings opt;
  bool vocab_set = false;
  if (!g.config_path.empty()) {
    json j = load_config_json(g.config_path);
    if (j.contains("model")) {
      model_from_json(j.at("model"), cfg);
      vocab_set = vocab_set || j.at("model").contains("action_vocab_size");
    }
    if (j.contains("optimizer")) optimizer_from_json(j.at("optimizer"), opt);
  }
  if (a.context_length > 0) cfg.context_length = a.context_length;
  if (a.embed_dim > 0) cfg.embed_dim = a.embed_dim;
  if (a.num_layers > 0) cfg.num_layers = a.num_layers;
  if (a.num_heads > 0) cfg.num_heads = a.num_heads;
  if (a.vocab > 0) {
    cfg.action_vocab_size = a.vocab;
    vocab_set = true;
  }
  if (a.max_timestep > 0) cfg.max_timestep = a.max_timestep;
  if (a.dropout >= 0.0) cfg.dropout_rate = a.dropout;
  if (a.epochs > 0) opt.epochs = a.epochs;
  if (a.steps_per_epoch > 0) opt.steps_per_epoch = a.steps_per_epoch;
  if (a.batch_size > 0) opt.batch_size = a.batch_size;
  if (a.lr > 0.0) opt.learning_rate = a.lr;
  if (a.warmup >= 0) opt.warmup_steps = a.warmup;
  if (a.clip > 0.0) opt.clip_norm = a.clip;
  cfg.seed = g.seed;
  // The vocabulary has to cover every core id the dataset uses; grow the
  // default quietly, but respect an explicit choice (train rejects it if it
  // is too small).
  if (!vocab_set && ds.action_vocab_size() > cfg.action_vocab_size) {
    cfg.action_vocab_size = ds.action_vocab_size();
  }

  TrainState resume_state;
  const TrainState* resume = nullptr;
  if (!a.resume_path.empty()) {
    Checkpoint ck = load_checkpoint(a.resume_path);
    resume_state = std::move(ck.state);
    cfg = resume_state.params.config;  // resuming keeps the stored architecture
    cfg.seed = g.seed;
    resume = &resume_state;
  }

  TrainResult result = train(ds, cfg, opt, resume);

  ensure_out_dir(g);
  const std::string ckpt_path = out_path(g, a.checkpoint_out);
  const std::string curve_path = out_path(g, a.curve_out);
  save_checkpoint(ckpt_path, result.state, result.stats);
  write_text_file(curve_path,
                  train_curve_csv(result.report.epoch_loss, result.report.epoch_accuracy));

  const TrainReport& rep = result.report;
  for (size_t i = 0; i < rep.epoch_loss.size(); ++i) {
    std::printf("epoch %2zu  loss=%.6f  accuracy=%.4f\n", i + 1, rep.epoch_loss[i],
                rep.epoch_accuracy[i]);
  }
  std::printf("parameters=%" PRId64 "  steps=%" PRId64 "  wall=%.1fs  checksum=%016" PRIx64 "\n",
              rep.parameter_count, result.state.global_step, rep.wall_seconds,
              rep.final_checksum);
  std::printf("checkpoint: %s\ncurve: %s\n", ckpt_path.c_str(), curve_path.c_str());
  if (rep.diverged) {
    throw NumericError("training diverged (" + rep.note +
                       "); checkpoint holds the last finite epoch");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string checkpoint_path;
  std::string topology;
  std::string workload;
  std::string dataset_path;  // optional; source of the default target return
  std::string schedule_out = "schedule.csv";
  std::string mode = "greedy";
  double target_return = std::numeric_limits<double>::quiet_NaN();
  int num_chunks = 256;
  bool grid = false;
};

int cmd_infer(const GlobalArgs& g, const InferArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  MachineTopology topo = resolve_topology(a.topology);
  WorkloadSpec wl = resolve_workload(a.workload);
  IndexConfig index;
  index.num_chunks = a.num_chunks;

  double target = a.target_return;
  if (!std::isfinite(target)) {
    if (a.dataset_path.empty()) {
      throw ConfigError("no --target-return given and no --dataset to derive one from");
    }
    OfflineDataset ds = OfflineDataset::load_jsonl(a.dataset_path);
    target = 1.1 * dataset_max_return(ds);
  }

  RunOptions run;
  run.mode = SchedulingMode::Pinned;
  if (!g.config_path.empty()) {
    json j = load_config_json(g.config_path);
    if (j.contains("sim")) run.params = sim_params_from_json(j.at("sim"), run.params);
  }

  InferResult result = infer_schedule(ck.state.params, ck.stats, topo, index, wl, target,
                                      parse_select_mode(a.mode), g.seed, run);

  ensure_out_dir(g);
  const std::string sched_path = out_path(g, a.schedule_out);
  write_text_file(sched_path, schedule_to_csv(result.schedule));
  if (a.grid) {
    write_text_file(sched_path + ".grid.txt", policy_grid_text(result.schedule, topo));
    write_text_file(sched_path + ".grid.svg", policy_grid_svg(result.schedule, topo));
  }

  const Episode& ep = result.episode;
  std::printf("topology=%s workload=%s chunks=%d mode=%s\n", topo.name.c_str(), wl.name.c_str(),
              a.num_chunks, a.mode.c_str());
  std::printf("target_return=%.6f realized_return=%.6f mean_qps=%.1f\n", target, ep.total_return,
              ep.mean_throughput_qps);
  std::printf("schedule: %s\n", sched_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string checkpoint_path;
  std::string dataset_path;  // optional; provenance for seen/unseen + target
  std::vector<std::string> topologies = {"sandy-bridge", "grace-hopper"};
  std::vector<std::string> workloads = {"ycsb-a", "ycsb-c", "ycsb-e"};
  std::string raw_out = "eval_raw.csv";
  std::string summary_out = "eval_summary.csv";
  std::string mode = "greedy";
  double target_return = std::numeric_limits<double>::quiet_NaN();
  int num_seeds = 5;
  int num_chunks = 256;
  bool grids = true;
};

std::string file_token(const std::string& s) {
  std::string t = s;
  for (char& c : t) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '_')) c = '_';
  }
  return t;
}

int cmd_evaluate(const GlobalArgs& g, const EvaluateArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint_path);
  OfflineDataset provenance;
  const OfflineDataset* prov = nullptr;
  if (!a.dataset_path.empty()) {
    provenance = OfflineDataset::load_jsonl(a.dataset_path);
    prov = &provenance;
  }

  EvalOptions opts;
  opts.num_seeds = a.num_seeds;
  opts.base_seed = g.seed;
  opts.num_chunks = a.num_chunks;
  opts.select = parse_select_mode(a.mode);
  if (std::isfinite(a.target_return)) opts.target_return = a.target_return;
  if (!g.config_path.empty()) {
    json j = load_config_json(g.config_path);
    if (j.contains("sim")) opts.sim = sim_params_from_json(j.at("sim"), opts.sim);
  }

  EvalOutput out = run_evaluation(ck.state.params, ck.stats, prov, a.topologies, a.workloads,
                                  opts);

  ensure_out_dir(g);
  const std::string raw_path = out_path(g, a.raw_out);
  const std::string summary_path = out_path(g, a.summary_out);
  write_text_file(raw_path, eval_raw_csv(out.episodes));
  write_text_file(summary_path, eval_summary_csv(out.report));
  if (a.grids) {
    for (const PoleRun& run : out.pole_runs) {
      MachineTopology topo = resolve_topology(run.topology);
      char name[256];
      std::snprintf(name, sizeof(name), "pole_%s_%s_s%" PRIu64,
                    file_token(run.topology).c_str(), file_token(run.workload).c_str(), run.seed);
      write_text_file(out_path(g, std::string(name) + ".grid.txt"),
                      policy_grid_text(run.schedule, topo));
      write_text_file(out_path(g, std::string(name) + ".grid.svg"),
                      policy_grid_svg(run.schedule, topo));
    }
  }

  for (const EvalCell& cell : out.report.cells) {
    std::printf("%-14s %-8s [%s]\n", cell.topology.c_str(), cell.workload.c_str(),
                cell.seen ? "seen" : "unseen");
    for (const PolicySummary& p : cell.policies) {
      std::printf("  %-16s return %.4f ± %.4f  qps %.1f\n", p.policy.c_str(), p.mean_return,
                  p.std_return, p.mean_throughput);
    }
    std::printf("  speedup over best baseline (%s): %.3fx\n", cell.best_baseline.c_str(),
                cell.speedup);
  }
  std::printf("raw: %s\nsummary: %s\n", raw_path.c_str(), summary_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// novelty

struct NoveltyArgs {
  std::string schedule_path;
  std::string dataset_path;
  std::string topology;
  std::string checkpoint_path;  // optional; printed for provenance only
};

int cmd_novelty(const GlobalArgs&, const NoveltyArgs& a) {
  Schedule schedule = schedule_from_csv_file(a.schedule_path);
  OfflineDataset ds = OfflineDataset::load_jsonl(a.dataset_path);
  MachineTopology topo = resolve_topology(a.topology);
  validate_schedule(schedule, topo);

  if (!a.checkpoint_path.empty()) {
    Checkpoint ck = load_checkpoint(a.checkpoint_path);
    std::printf("model checksum=%016" PRIx64 "\n", params_checksum(ck.state.params));
  }

  NoveltyReport rep = novelty_scan(schedule, topo.name, ds);
  if (rep.compared == 0) {
    std::printf("no %s episodes in the dataset to compare against\n", topo.name.c_str());
    return 0;
  }
  std::printf("compared=%d min_hamming=%d (%.1f%% of %d chunks)\n", rep.compared,
              rep.min_distance,
              100.0 * rep.min_distance / std::max(1, schedule.num_chunks()),
              schedule.num_chunks());
  std::printf("nearest episode=%d policy=%s\n", rep.nearest_episode,
              rep.nearest_policy.c_str());
  if (rep.min_distance == 0) std::printf("schedule replicates a training episode exactly\n");
  return 0;
}

// ---------------------------------------------------------------------------
// dataset-stats

struct StatsArgs {
  std::string dataset_path;
};

int cmd_dataset_stats(const GlobalArgs&, const StatsArgs& a) {
  OfflineDataset ds = OfflineDataset::load_jsonl(a.dataset_path);

  struct Agg {
    int episodes = 0;
    double sum = 0.0;
    double min = 0.0;
    double max = 0.0;
  };
  std::map<std::string, Agg> groups;  // "topology|workload|policy"
  std::map<std::string, int> per_topology;
  for (const Episode& e : ds.episodes()) {
    const std::string key = e.topology_name + "|" + e.workload_name + "|" + e.policy;
    Agg& agg = groups[key];
    if (agg.episodes == 0) {
      agg.min = e.total_return;
      agg.max = e.total_return;
    }
    agg.episodes += 1;
    agg.sum += e.total_return;
    agg.min = std::min(agg.min, e.total_return);
    agg.max = std::max(agg.max, e.total_return);
    per_topology[e.topology_name] += 1;
  }

  std::printf("episodes=%zu steps=%" PRId64 " action_vocab=%d\n", ds.episodes().size(),
              ds.total_steps(), ds.action_vocab_size());
  for (const auto& [topo, count] : per_topology) {
    std::printf("  %-14s %d episodes\n", topo.c_str(), count);
  }
  std::printf("%-14s %-8s %-16s %8s %10s %10s %10s\n", "topology", "workload", "policy", "n",
              "mean", "min", "max");
  for (const auto& [key, agg] : groups) {
    const size_t p1 = key.find('|');
    const size_t p2 = key.find('|', p1 + 1);
    std::printf("%-14s %-8s %-16s %8d %10.4f %10.4f %10.4f\n",
                key.substr(0, p1).c_str(), key.substr(p1 + 1, p2 - p1 - 1).c_str(),
                key.substr(p2 + 1).c_str(), agg.episodes, agg.sum / agg.episodes, agg.min,
                agg.max);
  }

  if (!ds.episodes().empty()) {
    FeatureStats stats = ds.compute_stats();
    static const char* kFeatureNames[HardwareProfile::kNumFeatures] = {
        "clock_cycles", "cache_misses", "branch_misses",
        "local_dram",   "remote_dram",  "throughput_qps"};
    std::printf("feature means/stddevs:\n");
    for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
      std::printf("  %-16s %14.4f %14.4f\n", kFeatureNames[f], stats.mean[f], stats.stddev[f]);
    }
    std::printf("  %-16s %14.4f %14.4f\n", "rtg", stats.rtg_mean, stats.rtg_std);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probe-and-learn index scheduling on a simulated NUMA machine"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--seed", g.seed, "base RNG seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "directory for output files")->capture_default_str();
  app.add_option("--config", g.config_path,
                 "JSON config file (probe: plan; train: model/optimizer; "
                 "infer/evaluate: sim parameters)");

  ProbeArgs pa;
  CLI::App* probe = app.add_subcommand(
      "probe", "run scheduling policies over topology x workload cells; record episodes");
  probe->add_option("--plan", pa.plan_path, "plan JSON (defaults to the built-in plan)");
  probe->add_option("--dataset", pa.dataset_out, "output dataset file")->capture_default_str();
  probe->add_option("--topologies", pa.topologies, "override plan topologies")->delimiter(',');
  probe->add_option("--workloads", pa.workloads, "override plan workloads")->delimiter(',');
  probe->add_option("--chunks", pa.num_chunks, "override plan chunk count");
  probe->add_flag("--append", pa.append, "append to an existing dataset file");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train the scheduling model on a dataset");
  train->add_option("--dataset", ta.dataset_path, "episode dataset (JSONL)")->required();
  train->add_option("--checkpoint", ta.checkpoint_out, "output checkpoint")
      ->capture_default_str();
  train->add_option("--curve", ta.curve_out, "output training-curve CSV")->capture_default_str();
  train->add_option("--resume", ta.resume_path, "continue from an existing checkpoint");
  train->add_flag("--full-scale", ta.full_scale, "use the full-scale model preset (~3.37M)");
  train->add_option("--context-length", ta.context_length, "timesteps per training window");
  train->add_option("--embed-dim", ta.embed_dim, "embedding width");
  train->add_option("--layers", ta.num_layers, "transformer blocks");
  train->add_option("--heads", ta.num_heads, "attention heads");
  train->add_option("--vocab", ta.vocab, "action vocabulary (defaults to cover the dataset)");
  train->add_option("--max-timestep", ta.max_timestep, "timestep embedding capacity");
  train->add_option("--dropout", ta.dropout, "dropout rate");
  train->add_option("--epochs", ta.epochs, "training epochs");
  train->add_option("--steps-per-epoch", ta.steps_per_epoch, "optimizer steps per epoch");
  train->add_option("--batch-size", ta.batch_size, "windows per step");
  train->add_option("--lr", ta.lr, "learning rate");
  train->add_option("--warmup-steps", ta.warmup, "linear warmup steps");
  train->add_option("--clip-norm", ta.clip, "global gradient-norm clip");

  InferArgs ia;
  CLI::App* infer = app.add_subcommand("infer", "generate a schedule from a trained model");
  infer->add_option("--checkpoint", ia.checkpoint_path, "trained checkpoint")->required();
  infer->add_option("--topology", ia.topology, "topology preset or config file")->required();
  infer->add_option("--workload", ia.workload, "workload preset or config file")->required();
  infer->add_option("--dataset", ia.dataset_path,
                    "dataset used to derive the default target return");
  infer->add_option("--target-return", ia.target_return,
                    "conditioning return (default: 1.1 x dataset best)");
  infer->add_option("--mode", ia.mode, "action selection: greedy|sample")->capture_default_str();
  infer->add_option("--schedule", ia.schedule_out, "output schedule CSV")->capture_default_str();
  infer->add_option("--chunks", ia.num_chunks, "index chunks")->capture_default_str();
  infer->add_flag("--grid", ia.grid, "also write the policy grid (.txt/.svg)");

  EvaluateArgs ea;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "compare the model against the four baselines");
  evaluate->add_option("--checkpoint", ea.checkpoint_path, "trained checkpoint")->required();
  evaluate->add_option("--dataset", ea.dataset_path,
                       "training dataset (marks seen cells, derives the default target)");
  evaluate->add_option("--topologies", ea.topologies, "topologies to evaluate")
      ->delimiter(',')
      ->capture_default_str();
  evaluate->add_option("--workloads", ea.workloads, "workloads to evaluate")
      ->delimiter(',')
      ->capture_default_str();
  evaluate->add_option("--eval-seeds", ea.num_seeds, "paired seeds per cell")
      ->capture_default_str();
  evaluate->add_option("--target-return", ea.target_return,
                       "conditioning return (default: 1.1 x dataset best)");
  evaluate->add_option("--mode", ea.mode, "action selection: greedy|sample")
      ->capture_default_str();
  evaluate->add_option("--raw", ea.raw_out, "output per-episode CSV")->capture_default_str();
  evaluate->add_option("--summary", ea.summary_out, "output summary CSV")->capture_default_str();
  evaluate->add_option("--chunks", ea.num_chunks, "index chunks")->capture_default_str();
  evaluate->add_flag("!--no-grids", ea.grids, "skip policy-grid output files");

  NoveltyArgs na;
  CLI::App* novelty = app.add_subcommand(
      "novelty", "minimum Hamming distance between a schedule and the training set");
  novelty->add_option("--schedule", na.schedule_path, "schedule CSV")->required();
  novelty->add_option("--dataset", na.dataset_path, "training dataset")->required();
  novelty->add_option("--topology", na.topology, "topology the schedule targets")->required();
  novelty->add_option("--checkpoint", na.checkpoint_path,
                      "checkpoint to report the model checksum from");

  StatsArgs sa;
  CLI::App* stats = app.add_subcommand("dataset-stats", "summarize a dataset file");
  stats->add_option("--dataset", sa.dataset_path, "episode dataset (JSONL)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (probe->parsed()) return cmd_probe(g, pa);
    if (train->parsed()) return cmd_train(g, ta);
    if (infer->parsed()) return cmd_infer(g, ia);
    if (evaluate->parsed()) return cmd_evaluate(g, ea);
    if (novelty->parsed()) return cmd_novelty(g, na);
    if (stats->parsed()) return cmd_dataset_stats(g, sa);
  } catch (const PoleError& e) {
    std::fprintf(stderr, "error[%s]: %s\n", category_name(e.category()), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
