#include <benchmark/benchmark.h>

#include "beatnet/model.hpp"
#include "beatnet/signal.hpp"
#include "beatnet/synth.hpp"
#include "beatnet/tokenizer.hpp"
#include "beatnet/training.hpp"

using namespace beatnet;

namespace {

std::pair<EcgRecord, tok::RPeakSet> bench_record() {
  synth::SynthSpec spec;
  spec.bpm = 75.0;
  spec.duration_s = 10.0;
  spec.seed = 1;
  return synth::generate(spec);
}

model::ModelConfig bench_model_cfg() {
  model::ModelConfig cfg;
  cfg.D = 32;
  cfg.S = 160;
  cfg.word_blocks = 1;
  cfg.word_channels = 8;
  cfg.tx_layers = 2;
  cfg.tx_heads = 2;
  cfg.tx_ff_dim = 64;
  cfg.K = 6;
  return cfg;
}

tok::TokenSequence bench_sequence() {
  auto [rec, truth] = bench_record();
  tok::TokenizerConfig cfg;
  cfg.S = 160;
  return tok::extract_tokens(rec, truth, cfg);
}

void BM_BandpassFiltfilt(benchmark::State& state) {
  auto [rec, truth] = bench_record();
  auto sos = signal::design_butter_bandpass(signal::FilterSpec{}, rec.fs);
  std::vector<double> x(rec.signal.begin(), rec.signal.begin() + rec.T);
  for (auto _ : state) benchmark::DoNotOptimize(signal::sosfiltfilt(sos, x));
}
BENCHMARK(BM_BandpassFiltfilt);

void BM_DetectRPeaks(benchmark::State& state) {
  auto [rec, truth] = bench_record();
  for (auto _ : state) benchmark::DoNotOptimize(tok::detect_r_peaks(rec));
}
BENCHMARK(BM_DetectRPeaks);

void BM_ExtractTokens(benchmark::State& state) {
  auto [rec, truth] = bench_record();
  tok::TokenizerConfig cfg;
  cfg.S = 160;
  for (auto _ : state) benchmark::DoNotOptimize(tok::extract_tokens(rec, truth, cfg));
}
BENCHMARK(BM_ExtractTokens);

void BM_Forward(benchmark::State& state) {
  auto cfg = bench_model_cfg();
  auto params = model::init_params(cfg, 1);
  auto seq = bench_sequence();
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(seq, params, cfg));
}
BENCHMARK(BM_Forward);

void BM_ForwardBackward(benchmark::State& state) {
  auto cfg = bench_model_cfg();
  auto params = model::init_params(cfg, 1);
  auto seq = bench_sequence();
  std::vector<double> labels(cfg.K, 0.0);
  labels[0] = 1.0;
  for (auto _ : state) {
    auto res = model::forward(seq, params, cfg);
    auto loss = ad::bce_with_logits(res.logits, labels);
    ad::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_ForwardBackward);

}  // namespace

BENCHMARK_MAIN();
