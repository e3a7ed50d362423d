#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pole/dataset.hpp"
#include "pole/machine.hpp"
#include "pole/policies.hpp"
#include "pole/rng.hpp"
#include "pole/simulator.hpp"
#include "pole/workload.hpp"

namespace pole {

using Mat = Eigen::MatrixXd;

struct ModelConfig {
  int context_length = 20;   // timesteps per window (3 tokens each)
  int embed_dim = 64;
  int num_layers = 4;
  int num_heads = 4;
  int action_vocab_size = 128;
  int state_dim = HardwareProfile::kNumFeatures;
  int max_timestep = 256;
  double dropout_rate = 0.1;
  uint64_t seed = 0;
};

void validate_config(const ModelConfig& config);

// Roughly the trainable-parameter budget of the reference full-scale model
// (~3.37M); the default config above is a desk-scale stand-in (~0.23M).
ModelConfig full_scale_config();

struct LayerParams {
  Mat w_qkv, b_qkv;    // D x 3D, 1 x 3D
  Mat w_attn, b_attn;  // D x D, 1 x D
  Mat ln1_g, ln1_b;    // 1 x D
  Mat w_fc, b_fc;      // D x 4D, 1 x 4D
  Mat w_proj, b_proj;  // 4D x D, 1 x D
  Mat ln2_g, ln2_b;    // 1 x D
};

struct ModelParams {
  ModelConfig config;
  Mat w_rtg, b_rtg;      // 1 x D (scalar input), 1 x D
  Mat w_state, b_state;  // S x D, 1 x D
  Mat emb_action;        // V x D
  Mat emb_timestep;      // maxT x D
  std::vector<LayerParams> layers;
  Mat lnf_g, lnf_b;      // 1 x D
  Mat w_head, b_head;    // D x V, 1 x V
};

// Applies fn(name, tensor&...) to corresponding tensors of every params
// object passed, in a fixed order. All objects must share the same layer
// count; used for gradient checks, Adam, clipping, and serialization.
template <typename Fn, typename... Ps>
void visit_tensors(Fn&& fn, Ps&... ps) {
  auto first_layers = [](auto& p0, auto&...) -> size_t { return p0.layers.size(); };
  fn("embed.rtg.w", ps.w_rtg...);
  fn("embed.rtg.b", ps.b_rtg...);
  fn("embed.state.w", ps.w_state...);
  fn("embed.state.b", ps.b_state...);
  fn("embed.action", ps.emb_action...);
  fn("embed.timestep", ps.emb_timestep...);
  const size_t n_layers = first_layers(ps...);
  for (size_t i = 0; i < n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    fn(p + "attn.w_qkv", ps.layers[i].w_qkv...);
    fn(p + "attn.b_qkv", ps.layers[i].b_qkv...);
    fn(p + "attn.w_out", ps.layers[i].w_attn...);
    fn(p + "attn.b_out", ps.layers[i].b_attn...);
    fn(p + "ln1.g", ps.layers[i].ln1_g...);
    fn(p + "ln1.b", ps.layers[i].ln1_b...);
    fn(p + "mlp.w_fc", ps.layers[i].w_fc...);
    fn(p + "mlp.b_fc", ps.layers[i].b_fc...);
    fn(p + "mlp.w_proj", ps.layers[i].w_proj...);
    fn(p + "mlp.b_proj", ps.layers[i].b_proj...);
    fn(p + "ln2.g", ps.layers[i].ln2_g...);
    fn(p + "ln2.b", ps.layers[i].ln2_b...);
  }
  fn("lnf.g", ps.lnf_g...);
  fn("lnf.b", ps.lnf_b...);
  fn("head.w", ps.w_head...);
  fn("head.b", ps.b_head...);
}

ModelParams init_params(const ModelConfig& config);
ModelParams zeros_like(const ModelParams& params);
int64_t parameter_count(const ModelParams& params);
uint64_t params_checksum(const ModelParams& params);

// Context windows packed into flat row-major arrays; row index = b*K + k.
struct Batch {
  int B = 0;
  int K = 0;
  Eigen::VectorXd rtg;
  Mat states;  // (B*K) x state_dim
  std::vector<int> actions;
  std::vector<int> timesteps;
  std::vector<uint8_t> valid;
  std::vector<int> targets;
};

Batch pack_batch(const std::vector<ContextWindow>& windows);

struct LayerCache {
  Mat x_in;              // (B*T) x D
  Mat ln1_hat, ln2_hat;  // normalized (pre-gain) activations
  Eigen::VectorXd ln1_rstd, ln2_rstd;
  Mat qkv;               // (B*T) x 3D
  Mat attn_probs;        // (B*H*T) x T
  Mat attn_concat;       // (B*T) x D
  Mat attn_drop, mlp_drop;  // dropout masks (empty when disabled)
  Mat x_mid;             // after attention residual
  Mat fc_pre, fc_act;    // (B*T) x 4D
};

struct ForwardCache {
  int B = 0, K = 0, T = 0;
  std::vector<uint8_t> tok_valid;  // B*T
  Mat emb;                         // (B*T) x D, post-dropout
  Mat emb_drop;
  std::vector<LayerCache> layers;
  Mat x_final;  // input to final layer norm
  Mat lnf_hat;
  Eigen::VectorXd lnf_rstd;
};

// Returns per-step action logits, shape (B*K) x V, read at each state-token
// position. `cache` is required for backward; `dropout_rng` enables dropout
// (training only).
Mat forward(const ModelParams& params, const Batch& batch, ForwardCache* cache = nullptr,
            Rng* dropout_rng = nullptr);

// Mean NLL over unmasked positions. Optionally produces dlogits and argmax
// accuracy (ties broken toward the lowest action id).
double action_loss(const Mat& logits, const Batch& batch, Mat* dlogits = nullptr,
                   double* accuracy = nullptr);

ModelParams backward(const ModelParams& params, const Batch& batch, const ForwardCache& cache,
                     const Mat& dlogits);

struct OptimizerSettings {
  double learning_rate = 1e-3;
  int warmup_steps = 100;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10;
  int steps_per_epoch = 50;
  int batch_size = 64;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
};

// Scales gradients in place to cap their global L2 norm; returns the
// pre-clip norm.
double clip_gradients(ModelParams& grads, double max_norm);

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& adam, int64_t step,
               const OptimizerSettings& opt);

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
  double wall_seconds = 0.0;
  int64_t parameter_count = 0;
  uint64_t final_checksum = 0;
  bool diverged = false;
  std::string note;
};

struct TrainState {
  ModelParams params;
  AdamState adam;
  int64_t global_step = 0;
};

struct TrainResult {
  TrainState state;
  FeatureStats stats;
  TrainReport report;
};

// Teacher-forcing training: labels are the recorded actions; model outputs
// are never fed back. Deterministic given config.seed. Pass `resume` to
// continue a run from a loaded checkpoint.
TrainResult train(const OfflineDataset& dataset, const ModelConfig& config,
                  const OptimizerSettings& opt, const TrainState* resume = nullptr);

enum class SelectMode { Greedy, Sample };

SelectMode parse_select_mode(const std::string& name);

struct InferResult {
  Schedule schedule;
  Episode episode;
};

// Autoregressive return-conditioned rollout against the simulator: start from
// the bootstrap profile and the target return, pick a core per chunk from the
// masked action distribution, execute it, decrement the return by the realized
// reward, repeat until the schedule is complete.
InferResult infer_schedule(const ModelParams& params, const FeatureStats& stats,
                           const MachineTopology& topology, const IndexConfig& index,
                           const WorkloadSpec& workload, double target_return, SelectMode select,
                           uint64_t seed, const RunOptions& run_options);

struct Checkpoint {
  TrainState state;
  FeatureStats stats;
};

void save_checkpoint(const std::string& path, const TrainState& state, const FeatureStats& stats);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pole
