#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beatnet/record.hpp"
#include "beatnet/signal.hpp"
#include "beatnet/tokenizer.hpp"

namespace beatnet::synth {

enum class RhythmClass { kRegular, kIrregularRR, kDroppedBeat };
enum class MorphClass { kNormal, kWideQrs, kHighAmplitudeV };

std::string to_string(RhythmClass r);
std::string to_string(MorphClass m);

struct SynthSpec {
  double bpm = 138.0;  // in [30, 220]
  RhythmClass rhythm_class = RhythmClass::kRegular;
  MorphClass morph_class = MorphClass::kNormal;
  double noise_std = 0.02;  // mV
  double duration_s = 6.0;
  std::uint32_t fs = 100;
  std::uint64_t seed = 0;
  // When >= 0, only this lead carries beats (with the class rhythm); every
  // other lead is noise only. Ground-truth anchors follow the planted lead.
  int planted_lead = -1;
};

// Deterministic 12-lead generator: sum-of-Gaussians PQRST template, fixed
// per-lead gain projection plus per-lead P/T morphology tweaks, additive
// Gaussian noise. Returns the record and exact R-peak ground truth.
std::pair<EcgRecord, tok::RPeakSet> generate(const SynthSpec& spec);

struct SuiteOptions {
  std::size_t n_per_class = 8;  // records per rhythm x morph combination
  std::uint64_t seed = 1;
  double bpm = 138.0;
  double duration_s = 6.0;
  std::uint32_t fs = 100;
  double noise_std = 0.02;
  bool rhythm_only = false;  // labels restricted to the rhythm axis
  int planted_lead = -1;
};

struct SynthDataset {
  std::vector<EcgRecord> records;
  std::vector<tok::RPeakSet> truth;
  signal::SplitIndices split;
  std::vector<std::string> label_names;
};

// Balanced multi-label dataset over the rhythm and morphology axes with a
// deterministic stratified 7:1:2 split.
SynthDataset make_suite(const SuiteOptions& opts);

// Lead II position in the canonical 12-lead order.
std::size_t lead_ii_index();
const std::vector<std::string>& standard_lead_names();

}  // namespace beatnet::synth
