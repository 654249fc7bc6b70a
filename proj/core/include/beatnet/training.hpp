#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "beatnet/adamw.hpp"
#include "beatnet/model.hpp"
#include "beatnet/tokenizer.hpp"

namespace beatnet::train {

struct TrainConfig {
  double lr = 0.001;
  double weight_decay = 0.01;
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  double subset_fraction = 1.0;
  std::string ablation = "full";      // full | no_spatial | no_temporal | no_spatiotemporal
  std::string tokenization = "qrs";   // qrs | patch
  int threads = 1;
  // Stop once the epoch-mean training loss drops below this; 0 disables.
  double early_stop_train_loss = 0.0;
};

struct EvalReport {
  std::vector<double> per_label_auroc;  // NaN where not computable
  double macro_auroc = 0.0;
  double loss = 0.0;
  std::size_t skipped_labels = 0;
};

// Stable scalar form: max(x,0) - x*y + log(1+exp(-|x|)), averaged over K.
double bce_with_logits_value(const std::vector<double>& logits,
                             const std::vector<std::uint8_t>& labels);

// Rank-statistic AUROC with ties counted 1/2. Throws std::domain_error when
// one class is absent.
double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Deterministic label-stratified nested subsets: for a fixed seed the
// selected set at a smaller fraction is contained in the set at any larger
// fraction. Returns ascending indices.
std::vector<std::size_t> subsample(const std::vector<std::vector<std::uint8_t>>& labels,
                                   double fraction, std::uint64_t seed);

// Disables encoder stages per variant name; accepts no_st as an alias for
// no_spatiotemporal.
void apply_ablation(model::ModelConfig& cfg, const std::string& variant);

// qrs: detect_r_peaks + extract_tokens; patch: fixed windows.
std::vector<tok::TokenSequence> tokenize_records(const std::vector<EcgRecord>& records,
                                                 const std::string& mode,
                                                 const tok::TokenizerConfig& tok_cfg);

struct TrainResult {
  model::ModelParams best_params;
  model::ModelConfig model_cfg;
  std::vector<EvalReport> history;   // validation report per epoch
  std::vector<double> train_loss;    // mean train loss per epoch
  std::size_t best_epoch = 0;
};

EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                    const std::vector<tok::TokenSequence>& data, int threads = 1);

// Seeded mini-batch AdamW training with per-epoch validation; the returned
// params are the best-validation checkpoint (final params when val is
// empty). The model config is adjusted per cfg.ablation before init.
TrainResult train(model::ModelConfig model_cfg, const std::vector<tok::TokenSequence>& train_set,
                  const std::vector<tok::TokenSequence>& val_set, const TrainConfig& cfg);

std::string history_to_json(const TrainResult& result);

}  // namespace beatnet::train
