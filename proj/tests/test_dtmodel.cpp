// Transformer tests. The gradient check is the anchor: every analytic
// gradient the backward pass produces is compared against central finite
// differences of the actual loss, so the rest of the suite can trust
// backward() and focus on training/inference behavior.
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "pole/dataset.hpp"
#include "pole/dtmodel.hpp"
#include "pole/errors.hpp"
#include "pole/machine.hpp"
#include "pole/policies.hpp"
#include "pole/rng.hpp"
#include "pole/simulator.hpp"
#include "pole/workload.hpp"

using namespace pole;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.context_length = 4;
  c.embed_dim = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.action_vocab_size = 4;
  c.max_timestep = 16;
  c.dropout_rate = 0.0;
  c.seed = 7;
  return c;
}

// One fully valid window plus one left-padded window, with deterministic
// hand-rolled contents. Exercises masking, the timestep table, and every
// input head.
std::vector<ContextWindow> toy_windows(const ModelConfig& cfg) {
  const int K = cfg.context_length;
  const int S = cfg.state_dim;
  const int V = cfg.action_vocab_size;
  Rng rng(0x70e57u);

  ContextWindow full;
  full.length = K;
  full.rtg.resize(K);
  full.states.assign(static_cast<size_t>(K) * S, 0.0);
  full.actions.resize(K);
  full.timesteps.resize(K);
  full.valid.assign(K, 1);
  full.targets.resize(K);
  for (int k = 0; k < K; ++k) {
    full.rtg[k] = 1.0 - 0.13 * k;
    for (int f = 0; f < S; ++f) full.states[k * S + f] = 0.5 * rng.next_gaussian();
    full.actions[k] = k % V;
    full.timesteps[k] = k;
    full.targets[k] = (k + 1) % V;
  }

  ContextWindow padded = full;
  const int pad = K / 2;
  for (int k = 0; k < pad; ++k) {
    padded.rtg[k] = 0.0;
    for (int f = 0; f < S; ++f) padded.states[k * S + f] = 0.0;
    padded.actions[k] = 0;
    padded.timesteps[k] = 0;
    padded.valid[k] = 0;
    padded.targets[k] = -1;
  }
  for (int k = pad; k < K; ++k) {
    padded.timesteps[k] = 3 + (k - pad);
    padded.actions[k] = (k + 1) % V;
    padded.targets[k] = k % V;
  }
  return {full, padded};
}

// Cheap offline data for end-to-end train/infer tests: random placements on
// the 4-core toy machine, short windows.
struct ProbeFixture {
  MachineTopology topo = builtin_topology("tiny-2x2");
  IndexConfig index;
  WorkloadSpec workload = make_workload("ycsb-a");
  RunOptions options;

  ProbeFixture() {
    index.num_chunks = 8;
    index.keys_per_chunk = 2048.0;
    workload.queries_per_window = 2000;
    options.mode = SchedulingMode::Pinned;
  }

  OfflineDataset dataset(int episodes) const {
    OfflineDataset ds;
    for (int e = 0; e < episodes; ++e) {
      const Schedule s = random_policy(topo, index, 1000 + e, 0.6);
      ds.append_episode(
          run_episode(topo, index, workload, s, 42 + e, options, "random"));
    }
    return ds;
  }
};

ModelConfig fixture_config() {
  ModelConfig c;
  c.context_length = 4;
  c.embed_dim = 16;
  c.num_layers = 2;
  c.num_heads = 2;
  c.action_vocab_size = 4;
  c.max_timestep = 16;
  c.dropout_rate = 0.0;
  c.seed = 11;
  return c;
}

OptimizerSettings fast_opt() {
  OptimizerSettings o;
  o.learning_rate = 3e-3;
  o.warmup_steps = 10;
  o.epochs = 3;
  o.steps_per_epoch = 10;
  o.batch_size = 8;
  return o;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  bool equal = true;
  auto& ma = const_cast<ModelParams&>(a);
  auto& mb = const_cast<ModelParams&>(b);
  visit_tensors(
      [&equal](const std::string&, Mat& x, Mat& y) {
        if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) equal = false;
      },
      ma, mb);
  return equal;
}

std::string temp_path(const char* stem) {
  return std::string("/tmp/pole_test_") + stem + "_" + std::to_string(::getpid());
}

}  // namespace

TEST_SUITE("dtmodel") {

TEST_CASE("config validation rejects inconsistent settings") {
  CHECK_NOTHROW(validate_config(ModelConfig{}));

  ModelConfig c;
  c.context_length = 0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = ModelConfig{};
  c.embed_dim = 6;  // not divisible by 4 heads
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = ModelConfig{};
  c.num_heads = 0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = ModelConfig{};
  c.action_vocab_size = 1;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = ModelConfig{};
  c.state_dim = 5;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = ModelConfig{};
  c.max_timestep = 0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);

  c = ModelConfig{};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  c.dropout_rate = -0.01;
  CHECK_THROWS_AS(validate_config(c), ConfigError);
}

TEST_CASE("full-scale config lands on the reference parameter budget") {
  const ModelConfig c = full_scale_config();
  const ModelParams p = init_params(c);

  // Independent count from the architecture itself.
  const int64_t d = c.embed_dim, v = c.action_vocab_size, s = c.state_dim;
  const int64_t embeddings = (d + d) + (s * d + d) + v * d + c.max_timestep * d;
  const int64_t attn = d * 3 * d + 3 * d + d * d + d;
  const int64_t mlp = d * 4 * d + 4 * d + 4 * d * d + d;
  const int64_t norms = 4 * d;  // two layer norms, gain + bias each
  const int64_t per_layer = attn + mlp + norms;
  const int64_t head = 2 * d + d * v + v;  // final norm + projection
  const int64_t expected = embeddings + c.num_layers * per_layer + head;

  CHECK(parameter_count(p) == expected);
  CHECK(parameter_count(p) == 3365672);  // ~3.37M
  // The desk-scale default is much smaller but still a real transformer.
  CHECK(parameter_count(init_params(ModelConfig{})) < 500000);
}

TEST_CASE("initialization: unit gains, zero biases, small gaussian weights") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = init_params(cfg);

  visit_tensors(
      [](const std::string& name, Mat& t) {
        const std::string leaf = name.substr(name.rfind('.') + 1);
        if (leaf == "g") {
          CHECK(t == Mat::Ones(t.rows(), t.cols()));
        } else if (!leaf.empty() && leaf[0] == 'b') {
          CHECK(t.isZero(0.0));
        } else {
          CHECK(t.cwiseAbs().maxCoeff() > 0.0);
          CHECK(t.cwiseAbs().maxCoeff() < 0.2);  // 0.02 std, ~10 sigma cap
        }
      },
      p);

  // Deterministic per seed, distinct across seeds.
  CHECK(params_checksum(init_params(cfg)) == params_checksum(init_params(cfg)));
  ModelConfig other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(params_checksum(init_params(other)) != params_checksum(init_params(cfg)));
}

TEST_CASE("zeroed model yields the uniform-distribution loss exactly") {
  const ModelConfig cfg = tiny_config();
  const ModelParams zero = zeros_like(init_params(cfg));
  const Batch batch = pack_batch(toy_windows(cfg));

  const Mat logits = forward(zero, batch);
  CHECK(logits.isZero(0.0));

  double acc = -1.0;
  const double loss = action_loss(logits, batch, nullptr, &acc);
  CHECK(loss == doctest::Approx(std::log(double(cfg.action_vocab_size))).epsilon(1e-12));

  // All-equal rows argmax to action 0; accuracy is the share of 0-targets.
  int64_t m = 0, zeros = 0;
  for (size_t i = 0; i < batch.valid.size(); ++i) {
    if (!batch.valid[i]) continue;
    ++m;
    if (batch.targets[i] == 0) ++zeros;
  }
  CHECK(acc == doctest::Approx(double(zeros) / double(m)).epsilon(1e-15));
}

TEST_CASE("loss matches a hand-rolled masked cross entropy") {
  Batch b;
  b.B = 1;
  b.K = 4;
  const int V = 3;
  b.rtg = Eigen::VectorXd::Zero(4);
  b.states = Mat::Zero(4, HardwareProfile::kNumFeatures);
  b.actions = {0, 0, 0, 0};
  b.timesteps = {0, 1, 2, 3};
  b.valid = {1, 0, 1, 1};
  b.targets = {2, -1, 0, 1};

  Mat logits(4, V);
  logits << 0.3, -0.1, 0.7,   //
      9.0, 9.0, 9.0,          // masked row, contents irrelevant
      1.5, 1.5, -2.0,         // tie between 0 and 1 -> argmax 0, target 0
      0.4, -0.2, 0.1;         // argmax 0, target 1 -> miss

  double expected = 0.0;
  for (int i : {0, 2, 3}) {
    double mx = logits.row(i).maxCoeff();
    double denom = 0.0;
    for (int j = 0; j < V; ++j) denom += std::exp(logits(i, j) - mx);
    expected += mx + std::log(denom) - logits(i, b.targets[i]);
  }
  expected /= 3.0;

  Mat dlogits;
  double acc = -1.0;
  const double loss = action_loss(logits, b, &dlogits, &acc);
  CHECK(loss == doctest::Approx(expected).epsilon(1e-14));
  CHECK(acc == doctest::Approx(2.0 / 3.0).epsilon(1e-15));  // rows 0 and 2 hit

  // Masked rows contribute nothing; valid rows carry (softmax - onehot)/m.
  CHECK(dlogits.row(1).isZero(0.0));
  for (int i : {0, 2, 3}) {
    CHECK(std::abs(dlogits.row(i).sum()) < 1e-15);
  }
  const double p0 = std::exp(logits(0, 2)) /
                    (std::exp(logits(0, 0)) + std::exp(logits(0, 1)) + std::exp(logits(0, 2)));
  CHECK(dlogits(0, 2) == doctest::Approx((p0 - 1.0) / 3.0).epsilon(1e-12));

  // Shifting a whole row leaves the cross entropy untouched.
  Mat shifted = logits;
  shifted.row(0).array() += 37.5;
  double acc2 = -1.0;
  const double loss2 = action_loss(shifted, b, nullptr, &acc2);
  CHECK(loss2 == doctest::Approx(loss).epsilon(1e-12));
  CHECK(acc2 == acc);

  SUBCASE("guards") {
    Batch all_masked = b;
    all_masked.valid = {0, 0, 0, 0};
    CHECK_THROWS_AS(action_loss(logits, all_masked), ContractError);

    Batch bad_target = b;
    bad_target.targets[0] = V;  // outside the vocabulary
    CHECK_THROWS_AS(action_loss(logits, bad_target), ContractError);

    CHECK_THROWS_AS(action_loss(Mat::Zero(3, V), b), ContractError);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  const ModelConfig cfg = tiny_config();
  ModelParams params = init_params(cfg);
  const Batch batch = pack_batch(toy_windows(cfg));

  ForwardCache cache;
  Mat dlogits;
  const Mat logits = forward(params, batch, &cache);
  action_loss(logits, batch, &dlogits);
  ModelParams grads = backward(params, batch, cache, dlogits);

  auto loss_at = [&]() { return action_loss(forward(params, batch), batch); };

  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_tensor;
  int checked = 0;
  visit_tensors(
      [&](const std::string& name, Mat& p, Mat& g) {
        const Eigen::Index R = p.rows(), C = p.cols();
        std::vector<std::pair<Eigen::Index, Eigen::Index>> pts = {
            {0, 0},
            {R - 1, C - 1},
            {R / 2, C / 2},
            {R / 3, (2 * C) / 3},
            {(2 * R) / 3, C / 3}};
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        for (const auto& [r, c] : pts) {
          const double saved = p(r, c);
          p(r, c) = saved + h;
          const double lp = loss_at();
          p(r, c) = saved - h;
          const double lm = loss_at();
          p(r, c) = saved;
          const double fd = (lp - lm) / (2.0 * h);
          const double an = g(r, c);
          // Below ~1e-6 the FD signal drowns in roundoff; genuinely dead
          // parameters (unused embedding rows) sit here too.
          if (std::abs(fd) < 1e-6 && std::abs(an) < 1e-6) continue;
          const double rel = std::abs(fd - an) / (std::abs(fd) + std::abs(an));
          if (rel > worst) {
            worst = rel;
            worst_tensor = name;
          }
          ++checked;
        }
      },
      params, grads);

  CAPTURE(worst_tensor);
  CHECK(checked > 80);
  CHECK(worst < 1e-4);
}

TEST_CASE("unused embedding rows receive exactly zero gradient") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = init_params(cfg);
  const Batch batch = pack_batch(toy_windows(cfg));

  ForwardCache cache;
  Mat dlogits;
  const Mat logits = forward(params, batch, &cache);
  action_loss(logits, batch, &dlogits);
  const ModelParams grads = backward(params, batch, cache, dlogits);

  std::vector<bool> action_used(cfg.action_vocab_size, false);
  std::vector<bool> t_used(cfg.max_timestep, false);
  for (size_t i = 0; i < batch.valid.size(); ++i) {
    if (!batch.valid[i]) continue;
    action_used[batch.actions[i]] = true;
    t_used[batch.timesteps[i]] = true;
  }
  // Input embeddings only see their own rows; the head sees every action.
  for (int a = 0; a < cfg.action_vocab_size; ++a) {
    if (!action_used[a]) CHECK(grads.emb_action.row(a).isZero(0.0));
  }
  bool some_unused_t = false;
  for (int t = 0; t < cfg.max_timestep; ++t) {
    if (!t_used[t]) {
      some_unused_t = true;
      CHECK(grads.emb_timestep.row(t).isZero(0.0));
    }
  }
  CHECK(some_unused_t);
  CHECK(!grads.w_head.isZero(0.0));
}

TEST_CASE("later tokens never influence earlier logits") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = init_params(cfg);
  std::vector<ContextWindow> ws = toy_windows(cfg);
  const ContextWindow base = ws[0];

  ContextWindow fut = base;
  const int S = cfg.state_dim;
  for (int k = 2; k < cfg.context_length; ++k) {
    fut.rtg[k] += 0.37;
    fut.actions[k] = (base.actions[k] + 1) % cfg.action_vocab_size;
    fut.timesteps[k] = base.timesteps[k] + 4;
    for (int f = 0; f < S; ++f) fut.states[k * S + f] = -base.states[k * S + f] + 0.25;
  }

  const Mat la = forward(params, pack_batch({base}));
  const Mat lb = forward(params, pack_batch({fut}));
  // Steps before the perturbation: identical to the last bit.
  CHECK(la.row(0) == lb.row(0));
  CHECK(la.row(1) == lb.row(1));
  // The perturbed region does change, so the comparison above is not vacuous.
  CHECK(la.row(2) != lb.row(2));

  // Trailing padding is likewise invisible to earlier steps.
  ContextWindow cut = base;
  const int last = cfg.context_length - 1;
  cut.valid[last] = 0;
  cut.targets[last] = -1;
  cut.rtg[last] = 0.0;
  cut.actions[last] = 0;
  cut.timesteps[last] = 0;
  for (int f = 0; f < S; ++f) cut.states[last * S + f] = 0.0;
  const Mat lc = forward(params, pack_batch({cut}));
  for (int k = 0; k < last; ++k) CHECK(la.row(k) == lc.row(k));
}

TEST_CASE("forward enforces batch and table bounds") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = init_params(cfg);

  CHECK_THROWS_AS(pack_batch({}), ContractError);

  std::vector<ContextWindow> ws = toy_windows(cfg);
  ContextWindow shorter = ws[0];
  shorter.length = cfg.context_length - 1;
  shorter.rtg.pop_back();
  shorter.actions.pop_back();
  shorter.timesteps.pop_back();
  shorter.valid.pop_back();
  shorter.targets.pop_back();
  shorter.states.resize(static_cast<size_t>(shorter.length) * cfg.state_dim);
  CHECK_THROWS_AS(pack_batch({ws[0], shorter}), ContractError);

  // Window length must equal the model's context length.
  CHECK_THROWS_AS(forward(params, pack_batch({shorter})), ContractError);

  Batch overt = pack_batch(toy_windows(cfg));
  overt.timesteps[1] = cfg.max_timestep;
  CHECK_THROWS_AS(forward(params, overt), ContractError);

  Batch badact = pack_batch(toy_windows(cfg));
  badact.actions[2] = cfg.action_vocab_size;
  CHECK_THROWS_AS(forward(params, badact), ContractError);
}

TEST_CASE("training is deterministic and actually learns") {
  const ProbeFixture fx;
  const OfflineDataset ds = fx.dataset(6);
  const ModelConfig cfg = fixture_config();
  const OptimizerSettings opt = fast_opt();

  const TrainResult a = train(ds, cfg, opt);
  const TrainResult b = train(ds, cfg, opt);

  REQUIRE(a.report.epoch_loss.size() == size_t(opt.epochs));
  CHECK(a.report.epoch_loss == b.report.epoch_loss);  // bitwise reproducible
  CHECK(a.report.final_checksum == b.report.final_checksum);
  CHECK(params_equal(a.state.params, b.state.params));
  CHECK(a.state.global_step == int64_t(opt.epochs) * opt.steps_per_epoch);

  CHECK(a.report.epoch_loss.back() < a.report.epoch_loss.front());
  for (double acc : a.report.epoch_accuracy) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  CHECK(a.report.parameter_count == parameter_count(a.state.params));
  CHECK_FALSE(a.report.diverged);

  // A different seed trains a different model on the same data.
  ModelConfig cfg2 = cfg;
  cfg2.seed = cfg.seed + 1;
  CHECK(train(ds, cfg2, opt).report.final_checksum != a.report.final_checksum);
}

TEST_CASE("training rejects data the model cannot represent") {
  const ProbeFixture fx;
  const OfflineDataset ds = fx.dataset(2);

  CHECK_THROWS_AS(train(OfflineDataset{}, fixture_config(), fast_opt()), ContractError);

  ModelConfig small_vocab = fixture_config();
  small_vocab.action_vocab_size = 2;  // the 4-core machine needs >= 4
  CHECK_THROWS_AS(train(ds, small_vocab, fast_opt()), ConfigError);

  ModelConfig short_table = fixture_config();
  short_table.max_timestep = 4;  // episodes run 8 steps
  CHECK_THROWS_AS(train(ds, short_table, fast_opt()), ConfigError);

  OptimizerSettings bad = fast_opt();
  bad.steps_per_epoch = 0;
  CHECK_THROWS_AS(train(ds, fixture_config(), bad), ConfigError);
}

TEST_CASE("the model can memorize a single episode") {
  const ProbeFixture fx;
  OfflineDataset ds;
  const Schedule s = random_policy(fx.topo, fx.index, 77, 0.5);
  ds.append_episode(run_episode(fx.topo, fx.index, fx.workload, s, 5, fx.options, "random"));

  ModelConfig cfg;
  cfg.context_length = 8;
  cfg.embed_dim = 32;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.action_vocab_size = 4;
  cfg.max_timestep = 16;
  cfg.dropout_rate = 0.0;
  cfg.seed = 3;

  OptimizerSettings opt;
  opt.learning_rate = 1e-2;
  opt.warmup_steps = 20;
  opt.epochs = 30;
  opt.steps_per_epoch = 10;
  opt.batch_size = 8;

  const TrainResult r = train(ds, cfg, opt);
  CHECK_FALSE(r.report.diverged);
  CHECK(r.report.epoch_accuracy.back() == 1.0);
  CHECK(r.report.epoch_loss.back() < 0.1);
}

TEST_CASE("checkpoints restore the exact training state") {
  const ProbeFixture fx;
  const OfflineDataset ds = fx.dataset(4);
  const ModelConfig cfg = fixture_config();
  OptimizerSettings opt = fast_opt();
  opt.epochs = 1;

  const TrainResult r = train(ds, cfg, opt);
  const std::string path = temp_path("ckpt");
  save_checkpoint(path, r.state, r.stats);

  const Checkpoint ck = load_checkpoint(path);
  CHECK(params_equal(ck.state.params, r.state.params));
  CHECK(params_equal(ck.state.adam.m, r.state.adam.m));
  CHECK(params_equal(ck.state.adam.v, r.state.adam.v));
  CHECK(ck.state.global_step == r.state.global_step);
  CHECK(params_checksum(ck.state.params) == r.report.final_checksum);
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
    CHECK(ck.stats.mean[f] == r.stats.mean[f]);
    CHECK(ck.stats.stddev[f] == r.stats.stddev[f]);
  }
  CHECK(ck.stats.rtg_mean == r.stats.rtg_mean);
  CHECK(ck.stats.rtg_std == r.stats.rtg_std);

  SUBCASE("corruption is detected") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    std::string flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;
    const std::string bad = temp_path("ckpt_bad");
    std::ofstream(bad, std::ios::binary).write(flipped.data(), flipped.size());
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);

    std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size() / 3);
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
    std::remove(bad.c_str());
  }
  std::remove(path.c_str());
}

TEST_CASE("resuming from a checkpoint continues the identical run") {
  const ProbeFixture fx;
  const OfflineDataset ds = fx.dataset(4);
  const ModelConfig cfg = fixture_config();

  OptimizerSettings two = fast_opt();
  two.epochs = 2;
  const TrainResult unbroken = train(ds, cfg, two);

  OptimizerSettings one = two;
  one.epochs = 1;
  const TrainResult first = train(ds, cfg, one);
  const std::string path = temp_path("resume");
  save_checkpoint(path, first.state, first.stats);
  const Checkpoint ck = load_checkpoint(path);
  const TrainResult second = train(ds, cfg, one, &ck.state);
  std::remove(path.c_str());

  CHECK(second.report.final_checksum == unbroken.report.final_checksum);
  CHECK(params_equal(second.state.params, unbroken.state.params));
  CHECK(second.state.global_step == unbroken.state.global_step);
  REQUIRE(second.report.epoch_loss.size() == 1);
  CHECK(second.report.epoch_loss[0] == unbroken.report.epoch_loss[1]);

  // Resume refuses a mismatched architecture.
  ModelConfig wider = cfg;
  wider.embed_dim = 32;
  wider.num_heads = 4;
  CHECK_THROWS_AS(train(ds, wider, one, &ck.state), ConfigError);
}

TEST_CASE("inference rolls out complete, reproducible schedules") {
  const ProbeFixture fx;
  const OfflineDataset ds = fx.dataset(6);
  const ModelConfig cfg = fixture_config();
  OptimizerSettings opt = fast_opt();
  opt.epochs = 2;
  const TrainResult r = train(ds, cfg, opt);

  double best = 0.0;
  for (const Episode& ep : ds.episodes()) best = std::max(best, ep.total_return);

  const InferResult g1 = infer_schedule(r.state.params, r.stats, fx.topo, fx.index, fx.workload,
                                        1.1 * best, SelectMode::Greedy, 5, fx.options);
  CHECK(g1.schedule.num_chunks() == fx.index.num_chunks);
  CHECK_NOTHROW(validate_schedule(g1.schedule, fx.topo));
  CHECK(g1.episode.policy == "pole-dt:greedy");
  CHECK(g1.episode.steps.size() == size_t(fx.index.num_chunks));
  CHECK(g1.episode.total_return > 0.0);
  for (size_t t = 0; t < g1.episode.steps.size(); ++t) {
    CHECK(g1.episode.steps[t].action.index == g1.schedule.assignments[t].index);
  }

  const InferResult g2 = infer_schedule(r.state.params, r.stats, fx.topo, fx.index, fx.workload,
                                        1.1 * best, SelectMode::Greedy, 5, fx.options);
  CHECK(episode_to_json_line(g2.episode) == episode_to_json_line(g1.episode));

  const InferResult s1 = infer_schedule(r.state.params, r.stats, fx.topo, fx.index, fx.workload,
                                        1.1 * best, SelectMode::Sample, 9, fx.options);
  const InferResult s2 = infer_schedule(r.state.params, r.stats, fx.topo, fx.index, fx.workload,
                                        1.1 * best, SelectMode::Sample, 9, fx.options);
  CHECK(s1.episode.policy == "pole-dt:sample");
  CHECK(episode_to_json_line(s1.episode) == episode_to_json_line(s2.episode));

  // A zero target still yields a complete, executable schedule.
  const InferResult z = infer_schedule(r.state.params, r.stats, fx.topo, fx.index, fx.workload,
                                       0.0, SelectMode::Greedy, 5, fx.options);
  CHECK(z.schedule.num_chunks() == fx.index.num_chunks);
  CHECK(z.episode.total_return > 0.0);
}

TEST_CASE("inference guards topology and schedule bounds") {
  const ProbeFixture fx;
  const OfflineDataset ds = fx.dataset(2);
  const ModelConfig cfg = fixture_config();
  OptimizerSettings opt = fast_opt();
  opt.epochs = 1;
  const TrainResult r = train(ds, cfg, opt);

  // More cores than the action vocabulary covers.
  const MachineTopology big = builtin_topology("sandy-bridge");
  CHECK_THROWS_AS(infer_schedule(r.state.params, r.stats, big, fx.index, fx.workload, 1.0,
                                 SelectMode::Greedy, 5, fx.options),
                  ContractError);

  IndexConfig long_index = fx.index;
  long_index.num_chunks = cfg.max_timestep + 1;
  CHECK_THROWS_AS(infer_schedule(r.state.params, r.stats, fx.topo, long_index, fx.workload, 1.0,
                                 SelectMode::Greedy, 5, fx.options),
                  ContractError);

  CHECK_THROWS_AS(infer_schedule(r.state.params, r.stats, fx.topo, fx.index, fx.workload,
                                 std::numeric_limits<double>::infinity(), SelectMode::Greedy, 5,
                                 fx.options),
                  ContractError);

  // One core: the masked head has a single legal choice everywhere.
  MachineTopology uni;
  uni.name = "uni";
  uni.num_nodes = 1;
  uni.cores_per_node = 1;
  uni.local_latency_ns = 100.0;
  uni.clock_ghz = 2.0;
  uni.distance_matrix = {{1.0}};
  const InferResult u = infer_schedule(r.state.params, r.stats, uni, fx.index, fx.workload, 1.0,
                                       SelectMode::Sample, 3, fx.options);
  for (const CoreId& c : u.schedule.assignments) CHECK(c.index == 0);

  CHECK(parse_select_mode("greedy") == SelectMode::Greedy);
  CHECK(parse_select_mode("sample") == SelectMode::Sample);
  CHECK_THROWS_AS(parse_select_mode("argmax"), ConfigError);
}

TEST_CASE("gradient clipping caps the global norm and reports it") {
  const ModelConfig cfg = tiny_config();
  ModelParams g = init_params(cfg);  // gaussian entries, nonzero norm

  double sq = 0.0;
  visit_tensors([&sq](const std::string&, Mat& t) { sq += t.squaredNorm(); }, g);
  const double norm = std::sqrt(sq);

  ModelParams clipped = g;
  const double reported = clip_gradients(clipped, norm * 0.5);
  CHECK(reported == doctest::Approx(norm).epsilon(1e-12));
  double sq2 = 0.0;
  visit_tensors([&sq2](const std::string&, Mat& t) { sq2 += t.squaredNorm(); }, clipped);
  CHECK(std::sqrt(sq2) == doctest::Approx(norm * 0.5).epsilon(1e-9));

  // Under the cap nothing moves.
  ModelParams untouched = g;
  clip_gradients(untouched, norm * 2.0);
  CHECK(params_equal(untouched, g));
}

}  // TEST_SUITE
