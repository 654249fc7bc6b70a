#include "beatnet/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace beatnet::model {

using ad::Tensor;

void validate_config(const ModelConfig& cfg) {
  if (cfg.D == 0 || cfg.C == 0 || cfg.L == 0 || cfg.S == 0 || cfg.K == 0 ||
      cfg.max_time_blocks == 0 || cfg.word_channels == 0 || cfg.tx_heads == 0 ||
      cfg.tx_ff_dim == 0)
    throw std::invalid_argument("model config: all counts must be >= 1");
  if (cfg.D % cfg.tx_heads != 0)
    throw std::invalid_argument("model config: D=" + std::to_string(cfg.D) +
                                " not divisible by tx_heads=" + std::to_string(cfg.tx_heads));
}

ad::Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const ad::Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

std::size_t ModelParams::total_elements() const {
  std::size_t n = 0;
  for (const auto& [k, t] : tensors) n += t.size();
  return n;
}

std::map<std::string, std::vector<double>> ModelParams::values() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [k, t] : tensors) out[k] = t.data();
  return out;
}

void ModelParams::set_values(const std::map<std::string, std::vector<double>>& v) {
  for (auto& [k, t] : tensors) {
    auto it = v.find(k);
    if (it == v.end()) throw std::invalid_argument("set_values: missing parameter " + k);
    if (it->second.size() != t.size())
      throw std::invalid_argument("set_values: size mismatch for " + k);
    t.data() = it->second;
  }
}

std::map<std::string, std::vector<double>> ModelParams::grads() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [k, t] : tensors) {
    if (t.grad().size() == t.size()) out[k] = t.grad();
    else out[k] = std::vector<double>(t.size(), 0.0);
  }
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [k, t] : tensors)
    out.tensors.emplace(k, Tensor(t.shape(), t.data(), true));
  return out;
}

namespace {

Tensor randn(ad::Shape shape, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<double> d(ad::shape_numel(shape));
  for (auto& v : d) v = dist(rng);
  return Tensor(std::move(shape), std::move(d), true);
}

Tensor xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> d(in * out);
  for (auto& v : d) v = dist(rng);
  return Tensor({in, out}, std::move(d), true);
}

Tensor const_param(ad::Shape shape, double v) {
  return Tensor::full(std::move(shape), v, true);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  std::mt19937_64 rng(seed);
  ModelParams p;
  auto& t = p.tensors;
  const std::size_t W = cfg.word_channels, D = cfg.D;

  t.emplace("word.stem.w", randn({W, 1, 7}, std::sqrt(2.0 / 7.0), rng));
  t.emplace("word.stem.b", const_param({W}, 0.0));
  for (std::size_t i = 0; i < cfg.word_blocks; ++i) {
    const std::string pre = "word.block" + std::to_string(i) + ".";
    t.emplace(pre + "ln1.g", const_param({W}, 1.0));
    t.emplace(pre + "ln1.b", const_param({W}, 0.0));
    t.emplace(pre + "conv1.w", randn({W, W, 3}, std::sqrt(2.0 / (3.0 * W)), rng));
    t.emplace(pre + "conv1.b", const_param({W}, 0.0));
    t.emplace(pre + "ln2.g", const_param({W}, 1.0));
    t.emplace(pre + "ln2.b", const_param({W}, 0.0));
    t.emplace(pre + "conv2.w", randn({W, W, 3}, std::sqrt(2.0 / (3.0 * W)), rng));
    t.emplace(pre + "conv2.b", const_param({W}, 0.0));
  }
  t.emplace("word.proj.w", xavier(W, D, rng));
  t.emplace("word.proj.b", const_param({D}, 0.0));

  t.emplace("spatial.gamma", const_param({cfg.C, D}, 1.0));
  t.emplace("spatial.beta", const_param({cfg.C, D}, 0.0));
  t.emplace("temporal.emb", randn({cfg.max_time_blocks, D}, 0.02, rng));

  for (std::size_t l = 0; l < cfg.tx_layers; ++l) {
    const std::string pre = "tx" + std::to_string(l) + ".";
    t.emplace(pre + "ln1.g", const_param({D}, 1.0));
    t.emplace(pre + "ln1.b", const_param({D}, 0.0));
    t.emplace(pre + "wq", xavier(D, D, rng));
    t.emplace(pre + "bq", const_param({D}, 0.0));
    t.emplace(pre + "wk", xavier(D, D, rng));
    t.emplace(pre + "bk", const_param({D}, 0.0));
    t.emplace(pre + "wv", xavier(D, D, rng));
    t.emplace(pre + "bv", const_param({D}, 0.0));
    t.emplace(pre + "wo", xavier(D, D, rng));
    t.emplace(pre + "bo", const_param({D}, 0.0));
    t.emplace(pre + "ln2.g", const_param({D}, 1.0));
    t.emplace(pre + "ln2.b", const_param({D}, 0.0));
    t.emplace(pre + "ff1.w", xavier(D, cfg.tx_ff_dim, rng));
    t.emplace(pre + "ff1.b", const_param({cfg.tx_ff_dim}, 0.0));
    t.emplace(pre + "ff2.w", xavier(cfg.tx_ff_dim, D, rng));
    t.emplace(pre + "ff2.b", const_param({D}, 0.0));
  }
  if (cfg.tx_layers > 0) {
    t.emplace("final.ln.g", const_param({D}, 1.0));
    t.emplace("final.ln.b", const_param({D}, 0.0));
  }
  if (cfg.pool == PoolKind::kCls) t.emplace("cls.emb", randn({1, D}, 0.02, rng));

  t.emplace("head.w1", xavier(D, D, rng));
  t.emplace("head.b1", const_param({D}, 0.0));
  t.emplace("head.w2", xavier(D, cfg.K, rng));
  t.emplace("head.b2", const_param({cfg.K}, 0.0));
  return p;
}

namespace {

// LayerNorm across the channel axis of [N,W,T] tensors.
Tensor channel_norm(const Tensor& x, const Tensor& g, const Tensor& b) {
  return ad::transpose_last2(ad::layer_norm(ad::transpose_last2(x), g, b));
}

}  // namespace

ad::Tensor word_encode(const tok::TokenSequence& seq, const ModelParams& params,
                       const ModelConfig& cfg) {
  const std::size_t S = seq.S(), L = seq.L();
  if (L != cfg.L)
    throw std::invalid_argument("word_encode: token length " + std::to_string(L) +
                                " does not match config L=" + std::to_string(cfg.L));
  std::vector<double> xdata(S * L);
  for (std::size_t i = 0; i < S; ++i)
    std::copy(seq.tokens[i].waveform.begin(), seq.tokens[i].waveform.end(),
              xdata.begin() + static_cast<std::ptrdiff_t>(i * L));
  Tensor x(ad::Shape{S, 1, L}, std::move(xdata));

  // Convolutional stem, stride 2.
  Tensor h = ad::conv1d(x, params.at("word.stem.w"), params.at("word.stem.b"), 2, 3);
  // Pre-activation residual blocks.
  for (std::size_t i = 0; i < cfg.word_blocks; ++i) {
    const std::string pre = "word.block" + std::to_string(i) + ".";
    Tensor y = channel_norm(h, params.at(pre + "ln1.g"), params.at(pre + "ln1.b"));
    y = ad::gelu(y);
    y = ad::conv1d(y, params.at(pre + "conv1.w"), params.at(pre + "conv1.b"), 1, 1);
    y = channel_norm(y, params.at(pre + "ln2.g"), params.at(pre + "ln2.b"));
    y = ad::gelu(y);
    y = ad::conv1d(y, params.at(pre + "conv2.w"), params.at(pre + "conv2.b"), 1, 1);
    h = ad::add(h, y);
  }
  // Global average over time, then project to D.
  Tensor pooled = ad::mean_last(h);  // [S,W]
  Tensor z = ad::add(ad::matmul(pooled, params.at("word.proj.w")), params.at("word.proj.b"));

  // Padding tokens are defined to embed to zero.
  std::vector<double> mask(S * cfg.D);
  for (std::size_t i = 0; i < S; ++i)
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(i * cfg.D), cfg.D,
                seq.tokens[i].valid ? 1.0 : 0.0);
  return ad::mul(z, Tensor(ad::Shape{S, cfg.D}, std::move(mask)));
}

ad::Tensor spatial_encode(const ad::Tensor& z, const std::vector<std::size_t>& lead_indices,
                          const ModelParams& params, const ModelConfig& cfg) {
  if (!cfg.use_spatial) return z;
  for (auto c : lead_indices)
    if (c >= cfg.C)
      throw std::invalid_argument("spatial_encode: lead index " + std::to_string(c) +
                                  " out of range [0," + std::to_string(cfg.C) + ")");
  Tensor gamma = ad::embedding(params.at("spatial.gamma"), lead_indices);
  Tensor beta = ad::embedding(params.at("spatial.beta"), lead_indices);
  return ad::add(ad::mul(z, gamma), beta);
}

ad::Tensor temporal_encode(const ad::Tensor& z, const std::vector<std::size_t>& temporal_indices,
                           const ModelParams& params, const ModelConfig& cfg,
                           std::size_t* clamped_count) {
  if (!cfg.use_temporal) return z;
  std::vector<std::size_t> idx = temporal_indices;
  std::size_t clamped = 0;
  for (auto& i : idx)
    if (i >= cfg.max_time_blocks) {
      i = cfg.max_time_blocks - 1;
      ++clamped;
    }
  if (clamped_count) *clamped_count = clamped;
  return ad::add(z, ad::embedding(params.at("temporal.emb"), idx));
}

ForwardResult sentence_forward(const ad::Tensor& z, const std::vector<std::uint8_t>& valid_mask,
                               const ModelParams& params, const ModelConfig& cfg) {
  const std::size_t S = z.shape()[0], D = cfg.D, H = cfg.tx_heads, dh = D / H;
  if (valid_mask.size() != S)
    throw std::invalid_argument("sentence_forward: mask length mismatch");
  bool any_valid = false;
  for (auto v : valid_mask) any_valid |= v != 0;
  if (!any_valid) throw std::invalid_argument("sentence_forward: all-padding sequence");

  const bool cls = cfg.pool == PoolKind::kCls;
  Tensor x = z;
  std::vector<std::uint8_t> key_valid = valid_mask;
  if (cls) {
    x = ad::concat_rows({params.at("cls.emb"), z});
    key_valid.insert(key_valid.begin(), 1);
  }
  const std::size_t Sx = S + (cls ? 1 : 0);
  const std::size_t off = cls ? 1 : 0;

  ForwardResult res;
  res.attn.layers = cfg.tx_layers;
  res.attn.heads = H;
  res.attn.S = S;
  res.attn.w.assign(cfg.tx_layers * H * S * S, 0.0);
  res.attn.has_cls = cls;
  if (cls) res.attn.cls_w.assign(cfg.tx_layers * H * S, 0.0);

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < cfg.tx_layers; ++l) {
    const std::string pre = "tx" + std::to_string(l) + ".";
    Tensor xn = ad::layer_norm(x, params.at(pre + "ln1.g"), params.at(pre + "ln1.b"));
    Tensor q = ad::add(ad::matmul(xn, params.at(pre + "wq")), params.at(pre + "bq"));
    Tensor k = ad::add(ad::matmul(xn, params.at(pre + "wk")), params.at(pre + "bk"));
    Tensor v = ad::add(ad::matmul(xn, params.at(pre + "wv")), params.at(pre + "bv"));
    std::vector<Tensor> heads;
    for (std::size_t h = 0; h < H; ++h) {
      Tensor qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
      Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dh);
      Tensor a = ad::masked_softmax_rows(scores, key_valid);
      // Copy the token-to-token block out for interpretability.
      for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < S; ++j)
          res.attn.w[((l * H + h) * S + i) * S + j] =
              a.data()[(i + off) * Sx + (j + off)];
      if (cls)
        for (std::size_t j = 0; j < S; ++j)
          res.attn.cls_w[(l * H + h) * S + j] = a.data()[0 * Sx + (j + off)];
      heads.push_back(ad::matmul(a, vh));
    }
    Tensor attn_out = ad::add(ad::matmul(ad::concat_cols(heads), params.at(pre + "wo")),
                              params.at(pre + "bo"));
    x = ad::add(x, attn_out);
    Tensor xn2 = ad::layer_norm(x, params.at(pre + "ln2.g"), params.at(pre + "ln2.b"));
    Tensor ff = ad::gelu(ad::add(ad::matmul(xn2, params.at(pre + "ff1.w")), params.at(pre + "ff1.b")));
    ff = ad::add(ad::matmul(ff, params.at(pre + "ff2.w")), params.at(pre + "ff2.b"));
    x = ad::add(x, ff);
  }
  if (cfg.tx_layers > 0)
    x = ad::layer_norm(x, params.at("final.ln.g"), params.at("final.ln.b"));

  Tensor pooled;
  if (cls) {
    std::vector<std::uint8_t> cls_only(Sx, 0);
    cls_only[0] = 1;
    pooled = ad::masked_mean_rows(x, cls_only);
  } else {
    pooled = ad::masked_mean_rows(x, key_valid);
  }
  Tensor hmid = ad::gelu(ad::add(ad::matmul(ad::reshape(pooled, {1, D}), params.at("head.w1")),
                                 params.at("head.b1")));
  Tensor logits = ad::add(ad::matmul(hmid, params.at("head.w2")), params.at("head.b2"));
  res.logits = ad::reshape(logits, {cfg.K});
  return res;
}

ForwardResult forward(const tok::TokenSequence& seq, const ModelParams& params,
                      const ModelConfig& cfg) {
  Tensor z = word_encode(seq, params, cfg);
  std::vector<std::size_t> leads(seq.S()), times(seq.S());
  for (std::size_t i = 0; i < seq.S(); ++i) {
    leads[i] = seq.tokens[i].lead_index;
    times[i] = seq.tokens[i].temporal_index;
  }
  z = spatial_encode(z, leads, params, cfg);
  z = temporal_encode(z, times, params, cfg);
  return sentence_forward(z, seq.valid_mask(), params, cfg);
}

}  // namespace beatnet::model
