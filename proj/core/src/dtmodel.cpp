#include "pole/dtmodel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "pole/errors.hpp"

namespace pole {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

constexpr uint64_t kInitTag = 0x6d6f64656c697400ULL;     // model init stream
constexpr uint64_t kBatchTag = 0x62617463680000ULL;      // minibatch sampling
constexpr uint64_t kDropoutTag = 0x64726f700000ULL;      // dropout masks
constexpr uint64_t kInferTag = 0x696e6665720000ULL;      // inference sampling

constexpr double kInvSqrt2 = 0.7071067811865476;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;  // 1/sqrt(2*pi)
  return cdf + x * pdf;
}

// y = x_hat * g + b per row; writes x_hat and 1/std for the backward pass.
void ln_forward(const Mat& x, const Mat& g, const Mat& b, Mat& hat, Eigen::VectorXd& rstd,
                Mat& out) {
  Eigen::VectorXd mu = x.rowwise().mean();
  Mat centered = x;
  centered.colwise() -= mu;
  Eigen::VectorXd var = centered.array().square().rowwise().mean().matrix();
  rstd = (var.array() + kLnEps).rsqrt().matrix();
  hat = (centered.array().colwise() * rstd.array()).matrix();
  out = hat;
  out.array().rowwise() *= g.row(0).array();
  out.array().rowwise() += b.row(0).array();
}

// Given d(out), recovers d(x) and accumulates d(g), d(b).
Mat ln_backward(const Mat& dout, const Mat& hat, const Eigen::VectorXd& rstd, const Mat& g,
                Mat& dg, Mat& db) {
  dg.row(0) += (dout.array() * hat.array()).colwise().sum().matrix();
  db.row(0) += dout.colwise().sum();
  Eigen::ArrayXXd dhat = dout.array().rowwise() * g.row(0).array();
  Eigen::VectorXd m1 = dhat.rowwise().mean().matrix();
  Eigen::VectorXd m2 = (dhat * hat.array()).rowwise().mean().matrix();
  Eigen::ArrayXXd dx = dhat;
  dx.colwise() -= m1.array();
  dx -= hat.array().colwise() * m2.array();
  dx.colwise() *= rstd.array();
  return dx.matrix();
}

void apply_dropout(Mat& x, Mat& mask, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) {
    mask.resize(0, 0);
    return;
  }
  const double inv_keep = 1.0 / (1.0 - rate);
  mask.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      mask(r, c) = rng->next_double() < rate ? 0.0 : inv_keep;
    }
  }
  x.array() *= mask.array();
}

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 14695981039346656037ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void validate_config(const ModelConfig& c) {
  if (c.context_length < 1) throw ConfigError("context_length must be >= 1");
  if (c.embed_dim < 1 || c.num_layers < 1 || c.num_heads < 1) {
    throw ConfigError("embed_dim, num_layers, and num_heads must be >= 1");
  }
  if (c.embed_dim % c.num_heads != 0) {
    throw ConfigError("embed_dim (" + std::to_string(c.embed_dim) +
                      ") must be divisible by num_heads (" + std::to_string(c.num_heads) + ")");
  }
  if (c.action_vocab_size < 2) throw ConfigError("action_vocab_size must be >= 2");
  if (c.state_dim != HardwareProfile::kNumFeatures) {
    throw ConfigError("state_dim must be " + std::to_string(int(HardwareProfile::kNumFeatures)));
  }
  if (c.max_timestep < 1) throw ConfigError("max_timestep must be >= 1");
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
}

ModelConfig full_scale_config() {
  ModelConfig c;
  c.embed_dim = 184;
  c.num_layers = 8;
  c.num_heads = 8;
  return c;
}

ModelParams init_params(const ModelConfig& config) {
  validate_config(config);
  const int d = config.embed_dim;
  const int v = config.action_vocab_size;
  ModelParams p;
  p.config = config;
  p.w_rtg = Mat(1, d);
  p.b_rtg = Mat(1, d);
  p.w_state = Mat(config.state_dim, d);
  p.b_state = Mat(1, d);
  p.emb_action = Mat(v, d);
  p.emb_timestep = Mat(config.max_timestep, d);
  p.layers.resize(config.num_layers);
  for (LayerParams& l : p.layers) {
    l.w_qkv = Mat(d, 3 * d);
    l.b_qkv = Mat(1, 3 * d);
    l.w_attn = Mat(d, d);
    l.b_attn = Mat(1, d);
    l.ln1_g = Mat(1, d);
    l.ln1_b = Mat(1, d);
    l.w_fc = Mat(d, 4 * d);
    l.b_fc = Mat(1, 4 * d);
    l.w_proj = Mat(4 * d, d);
    l.b_proj = Mat(1, d);
    l.ln2_g = Mat(1, d);
    l.ln2_b = Mat(1, d);
  }
  p.lnf_g = Mat(1, d);
  p.lnf_b = Mat(1, d);
  p.w_head = Mat(d, v);
  p.b_head = Mat(1, v);

  Rng rng(mix_seed(config.seed, kInitTag));
  visit_tensors(
      [&rng](const std::string& name, Mat& t) {
        const std::string leaf = name.substr(name.rfind('.') + 1);
        if (leaf == "g") {
          t.setOnes();
        } else if (!leaf.empty() && leaf[0] == 'b') {
          t.setZero();
        } else {
          for (Eigen::Index r = 0; r < t.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.cols(); ++c) {
              t(r, c) = kInitStd * rng.next_gaussian();
            }
          }
        }
      },
      p);
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  visit_tensors([](const std::string&, Mat& t) { t.setZero(); }, z);
  return z;
}

int64_t parameter_count(const ModelParams& params) {
  int64_t n = 0;
  // visit_tensors requires mutable refs; counting does not modify.
  auto& p = const_cast<ModelParams&>(params);
  visit_tensors([&n](const std::string&, Mat& t) { n += static_cast<int64_t>(t.size()); }, p);
  return n;
}

uint64_t params_checksum(const ModelParams& params) {
  uint64_t h = 14695981039346656037ULL;
  auto& p = const_cast<ModelParams&>(params);
  visit_tensors(
      [&h](const std::string& name, Mat& t) {
        h = fnv1a(name.data(), name.size(), h);
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
          for (Eigen::Index c = 0; c < t.cols(); ++c) {
            const double v = t(r, c);
            h = fnv1a(&v, sizeof(v), h);
          }
        }
      },
      p);
  return h;
}

Batch pack_batch(const std::vector<ContextWindow>& windows) {
  if (windows.empty()) throw ContractError("cannot pack an empty batch");
  Batch b;
  b.B = static_cast<int>(windows.size());
  b.K = windows[0].length;
  const int n = b.B * b.K;
  b.rtg.resize(n);
  b.states.resize(n, HardwareProfile::kNumFeatures);
  b.actions.resize(n);
  b.timesteps.resize(n);
  b.valid.resize(n);
  b.targets.resize(n);
  for (int w = 0; w < b.B; ++w) {
    const ContextWindow& cw = windows[w];
    if (cw.length != b.K) throw ContractError("context windows in a batch must share one length");
    for (int k = 0; k < b.K; ++k) {
      const int i = w * b.K + k;
      b.rtg(i) = cw.rtg[k];
      for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
        b.states(i, f) = cw.states[static_cast<size_t>(k) * HardwareProfile::kNumFeatures + f];
      }
      b.actions[i] = cw.actions[k];
      b.timesteps[i] = cw.timesteps[k];
      b.valid[i] = cw.valid[k];
      b.targets[i] = cw.targets[k];
    }
  }
  return b;
}

Mat forward(const ModelParams& params, const Batch& batch, ForwardCache* cache,
            Rng* dropout_rng) {
  const ModelConfig& cfg = params.config;
  const int B = batch.B;
  const int K = batch.K;
  if (B < 1 || K < 1) throw ContractError("batch is empty");
  if (K != cfg.context_length) {
    throw ContractError("batch window length " + std::to_string(K) +
                        " does not match model context length " +
                        std::to_string(cfg.context_length));
  }
  if (batch.states.rows() != B * K || batch.states.cols() != cfg.state_dim) {
    throw ContractError("batch state tensor has the wrong shape");
  }
  const int T = 3 * K;
  const int D = cfg.embed_dim;
  const int H = cfg.num_heads;
  const int Dh = D / H;
  const int V = cfg.action_vocab_size;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(Dh));

  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  c.B = B;
  c.K = K;
  c.T = T;
  c.tok_valid.assign(static_cast<size_t>(B) * T, 0);

  Mat x = Mat::Zero(static_cast<Eigen::Index>(B) * T, D);
  for (int w = 0; w < B; ++w) {
    for (int k = 0; k < K; ++k) {
      const int i = w * K + k;
      if (!batch.valid[i]) continue;
      const int t = batch.timesteps[i];
      const int a = batch.actions[i];
      if (t < 0 || t >= cfg.max_timestep) {
        throw ContractError("timestep " + std::to_string(t) + " outside the embedding table (0.." +
                            std::to_string(cfg.max_timestep - 1) + ")");
      }
      if (a < 0 || a >= V) {
        throw ContractError("action id " + std::to_string(a) + " outside the vocabulary");
      }
      const Eigen::Index base = static_cast<Eigen::Index>(w) * T + 3 * k;
      const auto te = params.emb_timestep.row(t);
      x.row(base + 0) = batch.rtg(i) * params.w_rtg.row(0) + params.b_rtg.row(0) + te;
      x.row(base + 1) = batch.states.row(i) * params.w_state + params.b_state.row(0) + te;
      x.row(base + 2) = params.emb_action.row(a) + te;
      c.tok_valid[base + 0] = 1;
      c.tok_valid[base + 1] = 1;
      c.tok_valid[base + 2] = 1;
    }
  }
  apply_dropout(x, c.emb_drop, cfg.dropout_rate, dropout_rng);
  c.emb = x;

  c.layers.assign(cfg.num_layers, LayerCache{});
  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerParams& lp = params.layers[l];
    LayerCache& lc = c.layers[l];
    lc.x_in = x;

    Mat xn;
    ln_forward(lc.x_in, lp.ln1_g, lp.ln1_b, lc.ln1_hat, lc.ln1_rstd, xn);
    lc.qkv = xn * lp.w_qkv;
    lc.qkv.rowwise() += lp.b_qkv.row(0);

    lc.attn_probs = Mat::Zero(static_cast<Eigen::Index>(B) * H * T, T);
    lc.attn_concat.resize(static_cast<Eigen::Index>(B) * T, D);
    for (int w = 0; w < B; ++w) {
      const Eigen::Index row0 = static_cast<Eigen::Index>(w) * T;
      for (int h = 0; h < H; ++h) {
        const auto Q = lc.qkv.block(row0, h * Dh, T, Dh);
        const auto Km = lc.qkv.block(row0, D + h * Dh, T, Dh);
        const auto Vm = lc.qkv.block(row0, 2 * D + h * Dh, T, Dh);
        Mat scores = (Q * Km.transpose()) * inv_sqrt_dh;
        const Eigen::Index prow0 = (static_cast<Eigen::Index>(w) * H + h) * T;
        for (int i = 0; i < T; ++i) {
          // Causal, and padded tokens are invisible to everyone but
          // themselves (a pure-padding row still needs a finite softmax).
          double mx = -std::numeric_limits<double>::infinity();
          for (int j = 0; j <= i; ++j) {
            if (c.tok_valid[row0 + j] || j == i) mx = std::max(mx, scores(i, j));
          }
          double denom = 0.0;
          for (int j = 0; j <= i; ++j) {
            if (c.tok_valid[row0 + j] || j == i) {
              const double e = std::exp(scores(i, j) - mx);
              lc.attn_probs(prow0 + i, j) = e;
              denom += e;
            }
          }
          lc.attn_probs.row(prow0 + i) /= denom;
        }
        lc.attn_concat.block(row0, h * Dh, T, Dh) =
            lc.attn_probs.middleRows(prow0, T) * Vm;
      }
    }

    Mat attn_out = lc.attn_concat * lp.w_attn;
    attn_out.rowwise() += lp.b_attn.row(0);
    apply_dropout(attn_out, lc.attn_drop, cfg.dropout_rate, dropout_rng);
    lc.x_mid = lc.x_in + attn_out;

    Mat xn2;
    ln_forward(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.ln2_hat, lc.ln2_rstd, xn2);
    lc.fc_pre = xn2 * lp.w_fc;
    lc.fc_pre.rowwise() += lp.b_fc.row(0);
    lc.fc_act = lc.fc_pre.unaryExpr([](double v) { return gelu(v); });
    Mat mlp_out = lc.fc_act * lp.w_proj;
    mlp_out.rowwise() += lp.b_proj.row(0);
    apply_dropout(mlp_out, lc.mlp_drop, cfg.dropout_rate, dropout_rng);
    x = lc.x_mid + mlp_out;
    if (!x.allFinite()) {
      throw NumericError("non-finite activations after transformer layer " + std::to_string(l));
    }
  }

  c.x_final = x;
  Mat xn;
  ln_forward(c.x_final, params.lnf_g, params.lnf_b, c.lnf_hat, c.lnf_rstd, xn);

  Mat logits(static_cast<Eigen::Index>(B) * K, V);
  for (int w = 0; w < B; ++w) {
    for (int k = 0; k < K; ++k) {
      // Read at the state-token position: the last token that may influence
      // the action without seeing it.
      logits.row(static_cast<Eigen::Index>(w) * K + k) =
          xn.row(static_cast<Eigen::Index>(w) * T + 3 * k + 1) * params.w_head +
          params.b_head.row(0);
    }
  }
  if (!logits.allFinite()) throw NumericError("non-finite action logits");
  return logits;
}

double action_loss(const Mat& logits, const Batch& batch, Mat* dlogits, double* accuracy) {
  const Eigen::Index rows = logits.rows();
  const int V = static_cast<int>(logits.cols());
  if (rows != static_cast<Eigen::Index>(batch.B) * batch.K) {
    throw ContractError("logits row count does not match the batch");
  }
  if (dlogits != nullptr) {
    dlogits->resize(rows, V);
    dlogits->setZero();
  }
  int64_t m = 0;
  for (uint8_t f : batch.valid) m += f;
  if (m == 0) throw ContractError("loss over an all-masked batch");

  double total = 0.0;
  int64_t correct = 0;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!batch.valid[i]) continue;
    const int target = batch.targets[i];
    if (target < 0 || target >= V) {
      throw ContractError("target action " + std::to_string(target) + " outside the vocabulary");
    }
    const auto row = logits.row(i);
    const double mx = row.maxCoeff();
    double denom = 0.0;
    for (int j = 0; j < V; ++j) denom += std::exp(row(j) - mx);
    const double lse = mx + std::log(denom);
    total += lse - row(target);

    int arg = 0;
    for (int j = 1; j < V; ++j) {
      if (row(j) > row(arg)) arg = j;  // ties keep the lowest id
    }
    if (arg == target) ++correct;

    if (dlogits != nullptr) {
      for (int j = 0; j < V; ++j) {
        (*dlogits)(i, j) = std::exp(row(j) - lse) * inv_m;
      }
      (*dlogits)(i, target) -= inv_m;
    }
  }
  if (accuracy != nullptr) *accuracy = static_cast<double>(correct) / static_cast<double>(m);
  return total * inv_m;
}

ModelParams backward(const ModelParams& params, const Batch& batch, const ForwardCache& cache,
                     const Mat& dlogits) {
  const ModelConfig& cfg = params.config;
  const int B = cache.B;
  const int K = cache.K;
  const int T = cache.T;
  const int D = cfg.embed_dim;
  const int H = cfg.num_heads;
  const int Dh = D / H;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(Dh));
  if (dlogits.rows() != static_cast<Eigen::Index>(B) * K ||
      dlogits.cols() != cfg.action_vocab_size) {
    throw ContractError("dlogits shape does not match the cached forward pass");
  }

  ModelParams grads = zeros_like(params);

  // Head: logits were read from the final layer norm at state positions.
  Mat lnf_out = cache.lnf_hat;
  lnf_out.array().rowwise() *= params.lnf_g.row(0).array();
  lnf_out.array().rowwise() += params.lnf_b.row(0).array();
  Mat gathered(static_cast<Eigen::Index>(B) * K, D);
  for (int w = 0; w < B; ++w) {
    for (int k = 0; k < K; ++k) {
      gathered.row(static_cast<Eigen::Index>(w) * K + k) =
          lnf_out.row(static_cast<Eigen::Index>(w) * T + 3 * k + 1);
    }
  }
  grads.w_head += gathered.transpose() * dlogits;
  grads.b_head.row(0) += dlogits.colwise().sum();
  Mat dgathered = dlogits * params.w_head.transpose();
  Mat dxn = Mat::Zero(static_cast<Eigen::Index>(B) * T, D);
  for (int w = 0; w < B; ++w) {
    for (int k = 0; k < K; ++k) {
      dxn.row(static_cast<Eigen::Index>(w) * T + 3 * k + 1) =
          dgathered.row(static_cast<Eigen::Index>(w) * K + k);
    }
  }
  Mat dx = ln_backward(dxn, cache.lnf_hat, cache.lnf_rstd, params.lnf_g, grads.lnf_g,
                       grads.lnf_b);

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const LayerParams& lp = params.layers[l];
    const LayerCache& lc = cache.layers[l];
    LayerParams& lg = grads.layers[l];

    // MLP branch.
    Mat dmlp = dx;
    if (lc.mlp_drop.size() != 0) dmlp.array() *= lc.mlp_drop.array();
    grads.layers[l].b_proj.row(0) += dmlp.colwise().sum();
    lg.w_proj += lc.fc_act.transpose() * dmlp;
    Mat dfc_act = dmlp * lp.w_proj.transpose();
    Mat dfc_pre =
        (dfc_act.array() * lc.fc_pre.unaryExpr([](double v) { return gelu_grad(v); }).array())
            .matrix();
    lg.b_fc.row(0) += dfc_pre.colwise().sum();
    Mat ln2_out = lc.ln2_hat;
    ln2_out.array().rowwise() *= lp.ln2_g.row(0).array();
    ln2_out.array().rowwise() += lp.ln2_b.row(0).array();
    lg.w_fc += ln2_out.transpose() * dfc_pre;
    Mat dln2_out = dfc_pre * lp.w_fc.transpose();
    Mat dx_mid =
        dx + ln_backward(dln2_out, lc.ln2_hat, lc.ln2_rstd, lp.ln2_g, lg.ln2_g, lg.ln2_b);

    // Attention branch.
    Mat dattn_out = dx_mid;
    if (lc.attn_drop.size() != 0) dattn_out.array() *= lc.attn_drop.array();
    lg.b_attn.row(0) += dattn_out.colwise().sum();
    lg.w_attn += lc.attn_concat.transpose() * dattn_out;
    Mat dconcat = dattn_out * lp.w_attn.transpose();

    Mat dqkv = Mat::Zero(static_cast<Eigen::Index>(B) * T, 3 * D);
    for (int w = 0; w < B; ++w) {
      const Eigen::Index row0 = static_cast<Eigen::Index>(w) * T;
      for (int h = 0; h < H; ++h) {
        const auto Q = lc.qkv.block(row0, h * Dh, T, Dh);
        const auto Km = lc.qkv.block(row0, D + h * Dh, T, Dh);
        const auto Vm = lc.qkv.block(row0, 2 * D + h * Dh, T, Dh);
        const Eigen::Index prow0 = (static_cast<Eigen::Index>(w) * H + h) * T;
        const auto P = lc.attn_probs.middleRows(prow0, T);
        const auto dO = dconcat.block(row0, h * Dh, T, Dh);
        Mat dP = dO * Vm.transpose();
        dqkv.block(row0, 2 * D + h * Dh, T, Dh) += P.transpose() * dO;
        Mat dS(T, T);
        for (int i = 0; i < T; ++i) {
          const double s = P.row(i).dot(dP.row(i));
          dS.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - s).matrix());
        }
        dqkv.block(row0, h * Dh, T, Dh) += (dS * Km) * inv_sqrt_dh;
        dqkv.block(row0, D + h * Dh, T, Dh) += (dS.transpose() * Q) * inv_sqrt_dh;
      }
    }

    lg.b_qkv.row(0) += dqkv.colwise().sum();
    Mat ln1_out = lc.ln1_hat;
    ln1_out.array().rowwise() *= lp.ln1_g.row(0).array();
    ln1_out.array().rowwise() += lp.ln1_b.row(0).array();
    lg.w_qkv += ln1_out.transpose() * dqkv;
    Mat dln1_out = dqkv * lp.w_qkv.transpose();
    dx = dx_mid +
         ln_backward(dln1_out, lc.ln1_hat, lc.ln1_rstd, lp.ln1_g, lg.ln1_g, lg.ln1_b);
  }

  // Embedding backward.
  Mat demb = dx;
  if (cache.emb_drop.size() != 0) demb.array() *= cache.emb_drop.array();
  for (int w = 0; w < B; ++w) {
    for (int k = 0; k < K; ++k) {
      const int i = w * K + k;
      if (!batch.valid[i]) continue;
      const Eigen::Index base = static_cast<Eigen::Index>(w) * T + 3 * k;
      const auto dr = demb.row(base + 0);
      const auto ds = demb.row(base + 1);
      const auto da = demb.row(base + 2);
      grads.w_rtg.row(0) += batch.rtg(i) * dr;
      grads.b_rtg.row(0) += dr;
      grads.w_state += batch.states.row(i).transpose() * ds;
      grads.b_state.row(0) += ds;
      grads.emb_action.row(batch.actions[i]) += da;
      grads.emb_timestep.row(batch.timesteps[i]) += dr + ds + da;
    }
  }

  bool finite = true;
  visit_tensors([&finite](const std::string&, Mat& t) { finite = finite && t.allFinite(); },
                grads);
  if (!finite) throw NumericError("non-finite gradients");
  return grads;
}

double clip_gradients(ModelParams& grads, double max_norm) {
  double sum_sq = 0.0;
  visit_tensors([&sum_sq](const std::string&, Mat& t) { sum_sq += t.squaredNorm(); }, grads);
  const double norm = std::sqrt(sum_sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    visit_tensors([scale](const std::string&, Mat& t) { t *= scale; }, grads);
  }
  return norm;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& adam, int64_t step,
               const OptimizerSettings& opt) {
  // `step` is 1-based: the first update passes 1.
  const double warmup =
      opt.warmup_steps > 0
          ? std::min(1.0, static_cast<double>(step) / static_cast<double>(opt.warmup_steps))
          : 1.0;
  const double lr = opt.learning_rate * warmup;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  auto& g = const_cast<ModelParams&>(grads);
  visit_tensors(
      [&](const std::string&, Mat& p, Mat& gt, Mat& m, Mat& v) {
        m = opt.beta1 * m + (1.0 - opt.beta1) * gt;
        v = (opt.beta2 * v.array() + (1.0 - opt.beta2) * gt.array().square()).matrix();
        const auto m_hat = m.array() / bc1;
        const auto v_hat = v.array() / bc2;
        p.array() -= lr * m_hat / (v_hat.sqrt() + opt.epsilon);
      },
      params, g, adam.m, adam.v);
}

TrainResult train(const OfflineDataset& dataset, const ModelConfig& config,
                  const OptimizerSettings& opt, const TrainState* resume) {
  validate_config(config);
  if (dataset.episodes().empty()) throw ContractError("cannot train on an empty dataset");
  if (dataset.action_vocab_size() > config.action_vocab_size) {
    throw ConfigError("dataset actions need a vocabulary of at least " +
                      std::to_string(dataset.action_vocab_size()) + ", model has " +
                      std::to_string(config.action_vocab_size));
  }
  size_t longest = 0;
  for (const Episode& ep : dataset.episodes()) longest = std::max(longest, ep.steps.size());
  if (static_cast<int>(longest) > config.max_timestep) {
    throw ConfigError("episodes reach timestep " + std::to_string(longest - 1) +
                      "; raise max_timestep to at least " + std::to_string(longest));
  }
  if (opt.epochs < 0 || opt.steps_per_epoch < 1 || opt.batch_size < 1) {
    throw ConfigError("optimizer settings must have steps_per_epoch >= 1 and batch_size >= 1");
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult out;
  out.stats = dataset.compute_stats();

  TrainState st;
  if (resume != nullptr) {
    st = *resume;
    const ModelConfig& rc = st.params.config;
    if (rc.context_length != config.context_length || rc.embed_dim != config.embed_dim ||
        rc.num_layers != config.num_layers || rc.num_heads != config.num_heads ||
        rc.action_vocab_size != config.action_vocab_size ||
        rc.max_timestep != config.max_timestep || rc.seed != config.seed) {
      throw ConfigError("resume checkpoint was trained with a different model config");
    }
  } else {
    st.params = init_params(config);
    st.adam.m = zeros_like(st.params);
    st.adam.v = zeros_like(st.params);
    st.global_step = 0;
  }

  out.report.parameter_count = parameter_count(st.params);
  TrainState last_finite = st;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    double loss_sum = 0.0;
    double weighted_correct = 0.0;
    double weighted_total = 0.0;
    for (int s = 0; s < opt.steps_per_epoch; ++s) {
      Rng batch_rng(mix_seed(config.seed, kBatchTag, static_cast<uint64_t>(st.global_step)));
      const std::vector<ContextWindow> windows =
          dataset.sample_batch(opt.batch_size, config.context_length, out.stats, batch_rng);
      const Batch batch = pack_batch(windows);
      Rng drop_rng(mix_seed(config.seed, kDropoutTag, static_cast<uint64_t>(st.global_step)));
      Rng* drop = config.dropout_rate > 0.0 ? &drop_rng : nullptr;

      double loss = 0.0;
      try {
        ForwardCache cache;
        Mat dlogits;
        double acc = 0.0;
        const Mat logits = forward(st.params, batch, &cache, drop);
        loss = action_loss(logits, batch, &dlogits, &acc);
        if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
        ModelParams grads = backward(st.params, batch, cache, dlogits);
        clip_gradients(grads, opt.clip_norm);
        adam_step(st.params, grads, st.adam, st.global_step + 1, opt);
        st.global_step += 1;

        int64_t m = 0;
        for (uint8_t f : batch.valid) m += f;
        loss_sum += loss;
        weighted_correct += acc * static_cast<double>(m);
        weighted_total += static_cast<double>(m);
      } catch (const NumericError& e) {
        out.state = last_finite;
        out.report.diverged = true;
        out.report.note = "diverged at step " + std::to_string(st.global_step) + ": " + e.what() +
                          "; returning the last finite epoch checkpoint";
        out.report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.report.final_checksum = params_checksum(out.state.params);
        return out;
      }
    }
    out.report.epoch_loss.push_back(loss_sum / opt.steps_per_epoch);
    out.report.epoch_accuracy.push_back(weighted_total > 0 ? weighted_correct / weighted_total
                                                           : 0.0);
    last_finite = st;
  }

  out.state = std::move(st);
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.report.final_checksum = params_checksum(out.state.params);
  return out;
}

SelectMode parse_select_mode(const std::string& name) {
  if (name == "greedy") return SelectMode::Greedy;
  if (name == "sample") return SelectMode::Sample;
  throw ConfigError("unknown selection mode '" + name + "' (expected greedy or sample)");
}

InferResult infer_schedule(const ModelParams& params, const FeatureStats& stats,
                           const MachineTopology& topology, const IndexConfig& index,
                           const WorkloadSpec& workload, double target_return, SelectMode select,
                           uint64_t seed, const RunOptions& run_options) {
  const ModelConfig& cfg = params.config;
  validate_config(cfg);
  if (!std::isfinite(target_return)) throw ContractError("target return must be finite");
  const int cores = topology.total_cores();
  if (cores > cfg.action_vocab_size) {
    throw ContractError("topology '" + topology.name + "' has " + std::to_string(cores) +
                        " cores but the model vocabulary covers only " +
                        std::to_string(cfg.action_vocab_size));
  }
  if (index.num_chunks > cfg.max_timestep) {
    throw ContractError("schedule length " + std::to_string(index.num_chunks) +
                        " exceeds the model's max_timestep " + std::to_string(cfg.max_timestep));
  }

  EpisodeSession session(topology, index, workload, seed, run_options);
  const int n = index.num_chunks;
  const int K = cfg.context_length;

  std::vector<double> rtgs{target_return};
  std::vector<HardwareProfile> states{session.bootstrap_profile()};
  std::vector<int> actions;
  Rng sample_rng(mix_seed(seed, kInferTag));

  for (int t = 0; t < n; ++t) {
    const int first = std::max(0, t - K + 1);
    const int count = t - first + 1;
    const int pad = K - count;
    ContextWindow w;
    w.length = K;
    w.rtg.assign(K, 0.0);
    w.states.assign(static_cast<size_t>(K) * HardwareProfile::kNumFeatures, 0.0);
    w.actions.assign(K, 0);
    w.timesteps.assign(K, 0);
    w.valid.assign(K, 0);
    w.targets.assign(K, -1);
    for (int j = first; j <= t; ++j) {
      const int slot = pad + (j - first);
      w.rtg[slot] = stats.normalize_rtg(rtgs[j]);
      const auto norm = stats.normalize(states[j].to_vector());
      for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) {
        w.states[static_cast<size_t>(slot) * HardwareProfile::kNumFeatures + f] = norm[f];
      }
      // The action for the current step is unknown; the causal mask keeps the
      // placeholder invisible to the state position we read from.
      w.actions[slot] = j < t ? actions[j] : 0;
      w.timesteps[slot] = j;
      w.valid[slot] = 1;
    }

    const Batch batch = pack_batch({w});
    const Mat logits = forward(params, batch, nullptr, nullptr);
    const auto row = logits.row(K - 1);

    int chosen = -1;
    if (select == SelectMode::Greedy) {
      for (int j = 0; j < cores; ++j) {
        if (chosen < 0 || row(j) > row(chosen)) chosen = j;
      }
    } else {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < cores; ++j) mx = std::max(mx, row(j));
      std::vector<double> p(cores);
      double denom = 0.0;
      for (int j = 0; j < cores; ++j) {
        p[j] = std::exp(row(j) - mx);
        denom += p[j];
      }
      const double u = sample_rng.next_double() * denom;
      double acc = 0.0;
      chosen = cores - 1;
      for (int j = 0; j < cores; ++j) {
        acc += p[j];
        if (u < acc) {
          chosen = j;
          break;
        }
      }
    }
    if (chosen < 0) throw ContractError("no selectable core (all actions masked)");

    const double reward = session.step(CoreId{chosen});
    actions.push_back(chosen);
    rtgs.push_back(rtgs.back() - reward);
    states.push_back(session.last_profile());
  }

  InferResult out;
  out.episode = session.finish(select == SelectMode::Greedy ? "pole-dt:greedy" : "pole-dt:sample");
  out.schedule.assignments.reserve(n);
  for (int a : actions) out.schedule.assignments.push_back(CoreId{a});
  return out;
}

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'O', 'L', 'E', 'D', 'T', '0', '1'};

struct ByteWriter {
  std::string buf;
  void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
  void u32(uint32_t v) { raw(&v, sizeof(v)); }
  void u64(uint64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;
  explicit ByteReader(const std::string& b) : buf(b) {}
  void raw(void* p, size_t n) {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, sizeof(v));
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, sizeof(v));
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof(v));
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    if (n > (1u << 20)) throw IoError("checkpoint name field too large");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
};

void write_tensor(ByteWriter& w, const std::string& name, const Mat& t) {
  w.str(name);
  w.u32(static_cast<uint32_t>(t.rows()));
  w.u32(static_cast<uint32_t>(t.cols()));
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) w.f64(t(r, c));
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const FeatureStats& stats) {
  ByteWriter w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  const ModelConfig& c = state.params.config;
  w.u32(static_cast<uint32_t>(c.context_length));
  w.u32(static_cast<uint32_t>(c.embed_dim));
  w.u32(static_cast<uint32_t>(c.num_layers));
  w.u32(static_cast<uint32_t>(c.num_heads));
  w.u32(static_cast<uint32_t>(c.action_vocab_size));
  w.u32(static_cast<uint32_t>(c.state_dim));
  w.u32(static_cast<uint32_t>(c.max_timestep));
  w.f64(c.dropout_rate);
  w.u64(c.seed);
  w.u64(static_cast<uint64_t>(state.global_step));
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) w.f64(stats.mean[f]);
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) w.f64(stats.stddev[f]);
  w.f64(stats.rtg_mean);
  w.f64(stats.rtg_std);

  uint32_t count = 0;
  auto& ps = const_cast<TrainState&>(state);
  visit_tensors([&count](const std::string&, Mat&, Mat&, Mat&) { count += 3; }, ps.params,
                ps.adam.m, ps.adam.v);
  w.u32(count);
  visit_tensors(
      [&w](const std::string& name, Mat& p, Mat& m, Mat& v) {
        write_tensor(w, name, p);
        write_tensor(w, "adam_m." + name, m);
        write_tensor(w, "adam_v." + name, v);
      },
      ps.params, ps.adam.m, ps.adam.v);

  const uint64_t checksum = fnv1a(w.buf.data(), w.buf.size());
  w.u64(checksum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw IoError("failed while writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kCheckpointMagic) + sizeof(uint64_t)) {
    throw IoError("checkpoint file too small");
  }
  const size_t payload = buf.size() - sizeof(uint64_t);
  uint64_t stored;
  std::memcpy(&stored, buf.data() + payload, sizeof(stored));
  if (fnv1a(buf.data(), payload) != stored) {
    throw IoError("checkpoint checksum mismatch (corrupt or truncated file)");
  }

  ByteReader r(buf);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("not a model checkpoint (bad magic)");
  }
  ModelConfig c;
  c.context_length = static_cast<int>(r.u32());
  c.embed_dim = static_cast<int>(r.u32());
  c.num_layers = static_cast<int>(r.u32());
  c.num_heads = static_cast<int>(r.u32());
  c.action_vocab_size = static_cast<int>(r.u32());
  c.state_dim = static_cast<int>(r.u32());
  c.max_timestep = static_cast<int>(r.u32());
  c.dropout_rate = r.f64();
  c.seed = r.u64();
  const uint64_t global_step = r.u64();
  try {
    validate_config(c);
  } catch (const PoleError& e) {
    throw IoError(std::string("checkpoint header invalid: ") + e.what());
  }

  Checkpoint ck;
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) ck.stats.mean[f] = r.f64();
  for (int f = 0; f < HardwareProfile::kNumFeatures; ++f) ck.stats.stddev[f] = r.f64();
  ck.stats.rtg_mean = r.f64();
  ck.stats.rtg_std = r.f64();

  ck.state.params = init_params(c);
  ck.state.adam.m = zeros_like(ck.state.params);
  ck.state.adam.v = zeros_like(ck.state.params);
  ck.state.global_step = static_cast<int64_t>(global_step);

  std::map<std::string, Mat*> slots;
  visit_tensors(
      [&slots](const std::string& name, Mat& p, Mat& m, Mat& v) {
        slots[name] = &p;
        slots["adam_m." + name] = &m;
        slots["adam_v." + name] = &v;
      },
      ck.state.params, ck.state.adam.m, ck.state.adam.v);

  const uint32_t count = r.u32();
  if (count != slots.size()) {
    throw IoError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                  std::to_string(slots.size()));
  }
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    auto it = slots.find(name);
    if (it == slots.end()) throw IoError("checkpoint tensor '" + name + "' is not in the model");
    Mat& t = *it->second;
    if (t.rows() != static_cast<Eigen::Index>(rows) ||
        t.cols() != static_cast<Eigen::Index>(cols)) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", expected " + std::to_string(t.rows()) + "x" +
                    std::to_string(t.cols()));
    }
    for (uint32_t rr = 0; rr < rows; ++rr) {
      for (uint32_t cc = 0; cc < cols; ++cc) t(rr, cc) = r.f64();
    }
    if (!seen.insert(name).second) throw IoError("duplicate checkpoint tensor '" + name + "'");
  }
  if (r.pos != payload) throw IoError("checkpoint has trailing bytes");
  return ck;
}

}  // namespace pole
