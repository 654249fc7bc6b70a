#include "beatnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "beatnet/tensor.hpp"

namespace beatnet::train {

double bce_with_logits_value(const std::vector<double>& logits,
                             const std::vector<std::uint8_t>& labels) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("bce: logits/labels size mismatch");
  double loss = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double x = logits[k];
    loss += std::max(x, 0.0) - x * labels[k] + std::log1p(std::exp(-std::abs(x)));
  }
  return loss / static_cast<double>(logits.size());
}

double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auroc: scores/labels size mismatch");
  std::size_t pos = 0;
  for (auto y : labels) pos += y ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw std::domain_error("auroc: single-class label");

  // Average ranks with tie groups sharing the mean rank.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]]) pos_rank_sum += mean_rank;
    i = j;
  }
  return (pos_rank_sum - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<std::size_t> subsample(const std::vector<std::vector<std::uint8_t>>& labels,
                                   double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("subsample: fraction must be in (0,1]");
  const std::size_t N = labels.size();
  // Stratified nested order: shuffle inside each label group, then order all
  // records by their normalized rank within the group. Any prefix of that
  // order is a stratified sample, and prefixes are nested by construction.
  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < N; ++i) groups[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  struct Key {
    double frac;
    std::size_t idx;
  };
  std::vector<Key> order;
  order.reserve(N);
  for (auto& [lab, idxs] : groups) {
    std::shuffle(idxs.begin(), idxs.end(), rng);
    for (std::size_t r = 0; r < idxs.size(); ++r)
      order.push_back({(static_cast<double>(r) + 0.5) / static_cast<double>(idxs.size()), idxs[r]});
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Key& a, const Key& b) { return a.frac < b.frac; });
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(N))));
  if (k == 0 || N == 0) throw std::invalid_argument("subsample: empty result");
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t t = 0; t < std::min(k, N); ++t) out.push_back(order[t].idx);
  std::sort(out.begin(), out.end());
  return out;
}

void apply_ablation(model::ModelConfig& cfg, const std::string& variant) {
  if (variant == "full") return;
  if (variant == "no_spatial") {
    cfg.use_spatial = false;
  } else if (variant == "no_temporal") {
    cfg.use_temporal = false;
  } else if (variant == "no_spatiotemporal" || variant == "no_st") {
    cfg.use_spatial = false;
    cfg.use_temporal = false;
  } else {
    throw std::invalid_argument("unknown ablation variant: " + variant);
  }
}

std::vector<tok::TokenSequence> tokenize_records(const std::vector<EcgRecord>& records,
                                                 const std::string& mode,
                                                 const tok::TokenizerConfig& tok_cfg) {
  std::vector<tok::TokenSequence> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    if (mode == "qrs") {
      out.push_back(tok::extract_tokens(rec, tok::detect_r_peaks(rec), tok_cfg));
    } else if (mode == "patch") {
      out.push_back(tok::patch_tokens(rec, tok_cfg));
    } else {
      throw std::invalid_argument("unknown tokenization mode: " + mode);
    }
  }
  return out;
}

namespace {

void parallel_shards(std::size_t n, int threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t nshards =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (nshards == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t s = 0; s < nshards; ++s) {
    const std::size_t lo = n * s / nshards;
    const std::size_t hi = n * (s + 1) / nshards;
    pool.emplace_back([&fn, lo, hi, s] { fn(lo, hi, s); });
  }
  for (auto& t : pool) t.join();
}

std::vector<double> forward_logits(const model::ModelParams& params,
                                   const model::ModelConfig& cfg,
                                   const tok::TokenSequence& seq) {
  return model::forward(seq, params, cfg).logits.data();
}

}  // namespace

EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                    const std::vector<tok::TokenSequence>& data, int threads) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t K = cfg.K;
  std::vector<std::vector<double>> logits(data.size());
  parallel_shards(data.size(), threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) logits[i] = forward_logits(params, cfg, data[i]);
  });

  EvalReport rep;
  rep.per_label_auroc.assign(K, std::numeric_limits<double>::quiet_NaN());
  double loss = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    loss += bce_with_logits_value(logits[i], data[i].labels);
  rep.loss = loss / static_cast<double>(data.size());

  double macro = 0;
  std::size_t computable = 0;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> scores(data.size());
    std::vector<std::uint8_t> labs(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      scores[i] = logits[i][k];
      labs[i] = data[i].labels[k];
    }
    try {
      rep.per_label_auroc[k] = auroc(scores, labs);
      macro += rep.per_label_auroc[k];
      ++computable;
    } catch (const std::domain_error&) {
      ++rep.skipped_labels;
    }
  }
  rep.macro_auroc = computable > 0 ? macro / static_cast<double>(computable) : 0.0;
  return rep;
}

TrainResult train(model::ModelConfig model_cfg, const std::vector<tok::TokenSequence>& train_set,
                  const std::vector<tok::TokenSequence>& val_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  apply_ablation(model_cfg, cfg.ablation);
  model::validate_config(model_cfg);

  // Subset selection (nested, stratified) before anything else.
  std::vector<std::size_t> active(train_set.size());
  std::iota(active.begin(), active.end(), 0);
  if (cfg.subset_fraction < 1.0) {
    std::vector<std::vector<std::uint8_t>> labs;
    labs.reserve(train_set.size());
    for (const auto& s : train_set) labs.push_back(s.labels);
    active = subsample(labs, cfg.subset_fraction, cfg.seed);
  }

  model::ModelParams params = model::init_params(model_cfg, cfg.seed);
  ad::AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  auto master = params.values();

  TrainResult result;
  result.model_cfg = model_cfg;
  double best_macro = -1.0;

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0xda3e39cb94b95bdbull);
  std::vector<std::size_t> order = active;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, order.size() - b0);
      const std::size_t nshards =
          std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.threads, 1)), bn));
      std::vector<std::map<std::string, std::vector<double>>> shard_grads(nshards);
      std::vector<double> shard_loss(nshards, 0.0);
      parallel_shards(bn, cfg.threads, [&](std::size_t lo, std::size_t hi, std::size_t s) {
        model::ModelParams local = params.clone();
        local.set_values(master);
        auto acc = local.values();
        for (auto& [k, v] : acc) std::fill(v.begin(), v.end(), 0.0);
        for (std::size_t i = lo; i < hi; ++i) {
          const auto& seq = train_set[order[b0 + i]];
          auto fwd = model::forward(seq, local, model_cfg);
          std::vector<double> labs(seq.labels.begin(), seq.labels.end());
          ad::Tensor loss = ad::bce_with_logits(fwd.logits, labs);
          shard_loss[s] += loss.item();
          ad::backward(loss);
          for (auto& [k, v] : acc) {
            const auto& g = local.at(k).grad();
            // parameters outside the active subgraph (e.g. ablated stages)
            // never get a grad buffer
            if (g.size() != v.size()) continue;
            for (std::size_t j = 0; j < v.size(); ++j) v[j] += g[j];
          }
        }
        shard_grads[s] = std::move(acc);
      });
      // Reduce in shard order so results do not depend on scheduling.
      auto grads = std::move(shard_grads[0]);
      for (std::size_t s = 1; s < nshards; ++s)
        for (auto& [k, v] : grads) {
          const auto& g = shard_grads[s][k];
          for (std::size_t j = 0; j < v.size(); ++j) v[j] += g[j];
        }
      double batch_loss = 0;
      for (double l : shard_loss) batch_loss += l;
      batch_loss /= static_cast<double>(bn);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b0 / cfg.batch_size));
      for (auto& [k, v] : grads)
        for (auto& g : v) g /= static_cast<double>(bn);
      opt.step(master, grads);
      epoch_loss += batch_loss * static_cast<double>(bn);
      seen += bn;
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(seen));

    if (!val_set.empty()) {
      params.set_values(master);
      EvalReport rep = evaluate(params, model_cfg, val_set, cfg.threads);
      result.history.push_back(rep);
      if (rep.macro_auroc > best_macro) {
        best_macro = rep.macro_auroc;
        result.best_epoch = epoch;
        result.best_params = params.clone();
      }
    }
    if (cfg.early_stop_train_loss > 0.0 &&
        result.train_loss.back() < cfg.early_stop_train_loss)
      break;
  }
  params.set_values(master);
  if (val_set.empty() || best_macro < 0.0) result.best_params = params.clone();
  return result;
}

std::string history_to_json(const TrainResult& result) {
  nlohmann::json j;
  j["best_epoch"] = result.best_epoch;
  j["train_loss"] = result.train_loss;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& rep : result.history) {
    nlohmann::json e;
    e["macro_auroc"] = rep.macro_auroc;
    e["loss"] = rep.loss;
    e["skipped_labels"] = rep.skipped_labels;
    nlohmann::json per = nlohmann::json::array();
    for (double a : rep.per_label_auroc) {
      if (std::isnan(a)) per.push_back(nullptr);
      else per.push_back(a);
    }
    e["per_label_auroc"] = per;
    hist.push_back(e);
  }
  j["validation"] = hist;
  return j.dump(2);
}

}  // namespace beatnet::train
