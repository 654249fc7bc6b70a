#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "beatnet/synth.hpp"
#include "beatnet/tokenizer.hpp"

using namespace beatnet;

namespace {

EcgRecord flat_record(std::size_t C, std::size_t T, std::uint32_t fs = 100) {
  EcgRecord r;
  r.record_id = "flat";
  r.fs = fs;
  r.C = C;
  r.T = T;
  for (std::size_t c = 0; c < C; ++c) r.lead_names.push_back("L" + std::to_string(c));
  r.signal.assign(C * T, 0.0);
  return r;
}

}  // namespace

TEST_CASE("detector finds a clean spike train") {
  auto rec = flat_record(1, 1000);  // 10 s at 100 Hz
  std::vector<std::size_t> truth;
  for (std::size_t t = 100; t < 950; t += 80) {  // 75 bpm
    truth.push_back(t);
    for (int d = -2; d <= 2; ++d)
      rec.at(0, t + d) += 1.0 * std::exp(-0.5 * d * d / 1.2);
  }
  auto peaks = tok::detect_r_peaks(rec);
  CHECK(peaks.anchors.size() >= truth.size() - 1);
  CHECK(peaks.anchors.size() <= truth.size() + 1);
  for (auto a : peaks.anchors) {
    auto it = std::min_element(truth.begin(), truth.end(), [&](auto x, auto y) {
      return std::llabs((long long)x - (long long)a) < std::llabs((long long)y - (long long)a);
    });
    CHECK(std::llabs((long long)*it - (long long)a) <= 3);
  }
}

TEST_CASE("detector returns nothing on an all-zero record") {
  auto rec = flat_record(2, 800);
  auto peaks = tok::detect_r_peaks(rec);
  CHECK(peaks.anchors.empty());
}

TEST_CASE("detector beat count on a synthetic 75 bpm record") {
  synth::SynthSpec spec;
  spec.bpm = 75.0;
  spec.duration_s = 10.0;
  spec.noise_std = 0.01;
  spec.seed = 5;
  auto [rec, truth] = synth::generate(spec);
  auto peaks = tok::detect_r_peaks(rec);
  // 10 s at 75 bpm starting 0.5 s in: about 12 beats
  CHECK(peaks.anchors.size() >= 11);
  CHECK(peaks.anchors.size() <= 13);
}

TEST_CASE("token extraction geometry") {
  auto rec = flat_record(3, 500);
  for (std::size_t t = 0; t < rec.T; ++t)
    for (std::size_t c = 0; c < 3; ++c) rec.at(c, t) = 100.0 * c + (double)t;
  tok::RPeakSet peaks;
  peaks.anchors = {20, 250, 480};
  tok::TokenizerConfig cfg;
  cfg.L = 96;
  cfg.S = 16;
  auto seq = tok::extract_tokens(rec, peaks, cfg);

  CHECK(seq.S() == 16);
  CHECK(seq.valid_count() == 9);  // 3 beats x 3 leads

  // time-major then lead order
  CHECK(seq.tokens[0].temporal_index == 0);
  CHECK(seq.tokens[0].lead_index == 0);
  CHECK(seq.tokens[1].temporal_index == 0);
  CHECK(seq.tokens[1].lead_index == 1);
  CHECK(seq.tokens[3].temporal_index == 1);
  CHECK(seq.tokens[3].lead_index == 0);

  // centered window: token sample L/2 is the anchor sample
  CHECK(seq.tokens[3].waveform[48] == doctest::Approx(250.0));
  CHECK(seq.tokens[4].waveform[48] == doctest::Approx(350.0));

  // left boundary zero padding: anchor 20 covers [-28, 68)
  for (int i = 0; i < 28; ++i) CHECK(seq.tokens[0].waveform[i] == 0.0);
  CHECK(seq.tokens[0].waveform[28] == doctest::Approx(0.0));
  CHECK(seq.tokens[0].waveform[48] == doctest::Approx(20.0));

  // right boundary: anchor 480 covers [432, 528), pad from 500
  CHECK(seq.tokens[6].waveform[48] == doctest::Approx(480.0));
  for (int i = 68; i < 96; ++i) CHECK(seq.tokens[6].waveform[i] == 0.0);

  // padding tokens are invalid and zero
  for (std::size_t i = 9; i < 16; ++i) {
    CHECK_FALSE(seq.tokens[i].valid);
    for (double v : seq.tokens[i].waveform) CHECK(v == 0.0);
  }
}

TEST_CASE("truncation keeps the earliest beats") {
  auto rec = flat_record(2, 2000);
  tok::RPeakSet peaks;
  for (std::size_t t = 100; t < 1900; t += 100) peaks.anchors.push_back(t);  // 18 beats
  tok::TokenizerConfig cfg;
  cfg.L = 96;
  cfg.S = 8;  // room for 4 beats x 2 leads
  std::vector<std::string> warnings;
  auto seq = tok::extract_tokens(rec, peaks, cfg, &warnings);
  CHECK(seq.valid_count() == 8);
  CHECK(seq.tokens.back().temporal_index == 3);
  CHECK_FALSE(warnings.empty());
}

TEST_CASE("no beats yields an all-padding sequence") {
  auto rec = flat_record(2, 500);
  tok::RPeakSet peaks;
  tok::TokenizerConfig cfg;
  cfg.S = 8;
  auto seq = tok::extract_tokens(rec, peaks, cfg);
  CHECK(seq.S() == 8);
  CHECK(seq.valid_count() == 0);
}

TEST_CASE("patch tokens tile the record") {
  auto rec = flat_record(2, 500);
  for (std::size_t t = 0; t < rec.T; ++t)
    for (std::size_t c = 0; c < 2; ++c) rec.at(c, t) = 1000.0 * c + (double)t;
  tok::TokenizerConfig cfg;
  cfg.L = 96;
  cfg.S = 16;
  auto seq = tok::patch_tokens(rec, cfg);
  // ceil(500/96) = 6 windows per lead, last one partially zero-padded
  CHECK(seq.valid_count() == 12);
  CHECK(seq.tokens[0].waveform[0] == doctest::Approx(0.0));
  CHECK(seq.tokens[1].waveform[0] == doctest::Approx(1000.0));
  CHECK(seq.tokens[2].waveform[0] == doctest::Approx(96.0));
  CHECK(seq.tokens[2].temporal_index == 1);
  const auto& last = seq.tokens[10];  // lead 0, window 5 covers [480, 576)
  CHECK(last.waveform[0] == doctest::Approx(480.0));
  CHECK(last.waveform[19] == doctest::Approx(499.0));
  for (std::size_t i = 20; i < 96; ++i) CHECK(last.waveform[i] == 0.0);
  auto again = tok::patch_tokens(rec, cfg);
  for (std::size_t i = 0; i < seq.tokens.size(); ++i)
    CHECK(again.tokens[i].waveform == seq.tokens[i].waveform);
}

TEST_CASE("r-centered tokens align beats, patches do not") {
  synth::SynthSpec spec;
  spec.bpm = 70.0;
  spec.duration_s = 8.0;
  spec.noise_std = 0.0;
  auto [rec, truth] = synth::generate(spec);
  tok::TokenizerConfig cfg;
  cfg.S = 200;
  auto qrs = tok::extract_tokens(rec, truth, cfg);

  // every valid qrs token on lead II peaks at the window center
  std::size_t lead2 = synth::lead_ii_index();
  std::size_t checked = 0;
  for (const auto& t : qrs.tokens) {
    if (!t.valid || t.lead_index != lead2) continue;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < t.waveform.size(); ++i)
      if (t.waveform[i] > t.waveform[arg]) arg = i;
    CHECK(arg == cfg.L / 2);
    ++checked;
  }
  CHECK(checked >= 8);

  // patch windows scatter the peak position.
  auto patch = tok::patch_tokens(rec, cfg);
  std::vector<std::size_t> args;
  for (const auto& t : patch.tokens) {
    if (!t.valid || t.lead_index != lead2) continue;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < t.waveform.size(); ++i)
      if (t.waveform[i] > t.waveform[arg]) arg = i;
    args.push_back(arg);
  }
  std::sort(args.begin(), args.end());
  CHECK(args.back() - args.front() > 10);
}
