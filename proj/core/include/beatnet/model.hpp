#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "beatnet/tensor.hpp"
#include "beatnet/tokenizer.hpp"

namespace beatnet::model {

enum class PoolKind { kMean, kCls };

struct ModelConfig {
  std::size_t D = 128;           // embedding dim
  std::size_t C = 12;            // leads
  std::size_t L = 96;            // token length
  std::size_t S = 256;           // sequence length
  std::size_t max_time_blocks = 64;
  std::size_t word_blocks = 3;   // residual blocks
  std::size_t word_channels = 32;
  std::size_t tx_layers = 4;
  std::size_t tx_heads = 4;
  std::size_t tx_ff_dim = 256;
  std::size_t K = 6;             // labels
  bool use_spatial = true;
  bool use_temporal = true;
  PoolKind pool = PoolKind::kMean;
};

void validate_config(const ModelConfig& cfg);

// All learnable tensors, addressable by stable names. Tensors are leaf
// nodes with requires_grad=true.
struct ModelParams {
  std::map<std::string, ad::Tensor> tensors;

  ad::Tensor& at(const std::string& name);
  const ad::Tensor& at(const std::string& name) const;
  std::size_t total_elements() const;

  std::map<std::string, std::vector<double>> values() const;
  void set_values(const std::map<std::string, std::vector<double>>& v);
  // Collects grads after a backward pass; absent grads read as zero.
  std::map<std::string, std::vector<double>> grads() const;
  ModelParams clone() const;
};

// gamma=1, beta=0 (identity spatial affine at start); He init for convs,
// Xavier for linear maps.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Attention weights copied out of the forward pass (values only), indexed
// [layer][head][query][key] over the S token positions. With CLS pooling the
// CLS query row over token keys is kept separately; it is the distribution
// the classification head actually reads through.
struct AttnCapture {
  std::size_t layers = 0, heads = 0, S = 0;
  std::vector<double> w;
  bool has_cls = false;
  std::vector<double> cls_w;  // [layer][head][key], empty unless has_cls
  double at(std::size_t l, std::size_t h, std::size_t i, std::size_t j) const {
    return w[((l * heads + h) * S + i) * S + j];
  }
  double cls_at(std::size_t l, std::size_t h, std::size_t j) const {
    return cls_w[(l * heads + h) * S + j];
  }
};

struct ForwardResult {
  ad::Tensor logits;  // [K]
  AttnCapture attn;
};

// Eq.-by-eq stage functions; forward() composes them honoring ablation
// flags. Padding tokens produce zero embeddings and are masked out of
// attention and pooling.
ad::Tensor word_encode(const tok::TokenSequence& seq, const ModelParams& params,
                       const ModelConfig& cfg);
ad::Tensor spatial_encode(const ad::Tensor& z, const std::vector<std::size_t>& lead_indices,
                          const ModelParams& params, const ModelConfig& cfg);
ad::Tensor temporal_encode(const ad::Tensor& z, const std::vector<std::size_t>& temporal_indices,
                           const ModelParams& params, const ModelConfig& cfg,
                           std::size_t* clamped_count = nullptr);
ForwardResult sentence_forward(const ad::Tensor& z, const std::vector<std::uint8_t>& valid_mask,
                               const ModelParams& params, const ModelConfig& cfg);
ForwardResult forward(const tok::TokenSequence& seq, const ModelParams& params,
                      const ModelConfig& cfg);

}  // namespace beatnet::model
