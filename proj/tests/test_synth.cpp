#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "beatnet/synth.hpp"

using namespace beatnet;
using synth::MorphClass;
using synth::RhythmClass;
using synth::SynthSpec;

TEST_CASE("regular rhythm beat count") {
  SynthSpec spec;
  spec.bpm = 60.0;
  spec.duration_s = 10.0;
  spec.seed = 1;
  auto [rec, truth] = synth::generate(spec);
  CHECK(rec.C == 12);
  CHECK(rec.fs == 100);
  CHECK(rec.T == 1000);
  // beats at 0.5, 1.5, ..., 9.5 s
  CHECK(truth.anchors.size() == 10);
  CHECK(truth.anchors[0] == 50);
  CHECK(truth.anchors[1] == 150);
}

TEST_CASE("generation is deterministic in the seed") {
  SynthSpec spec;
  spec.rhythm_class = RhythmClass::kIrregularRR;
  spec.seed = 9;
  auto [r1, t1] = synth::generate(spec);
  auto [r2, t2] = synth::generate(spec);
  CHECK(r1.signal == r2.signal);
  CHECK(t1.anchors == t2.anchors);
  spec.seed = 10;
  auto [r3, t3] = synth::generate(spec);
  CHECK(r1.signal != r3.signal);
}

TEST_CASE("wide-QRS morphology widens the R wave") {
  SynthSpec spec;
  spec.bpm = 60.0;
  spec.duration_s = 6.0;
  spec.noise_std = 0.0;
  spec.seed = 2;
  auto [normal, tn] = synth::generate(spec);
  spec.morph_class = MorphClass::kWideQrs;
  auto [wide, tw] = synth::generate(spec);

  // full width at half maximum with linear interpolation between samples
  auto width_at_half_max = [](const EcgRecord& rec, std::size_t anchor) {
    const std::size_t lead = synth::lead_ii_index();
    const double half = rec.at(lead, anchor) / 2.0;
    std::size_t lo = anchor, hi = anchor;
    while (lo > 0 && rec.at(lead, lo) > half) --lo;
    while (hi + 1 < rec.T && rec.at(lead, hi) > half) ++hi;
    const double fl = (rec.at(lead, lo + 1) - half) / (rec.at(lead, lo + 1) - rec.at(lead, lo));
    const double fr = (rec.at(lead, hi - 1) - half) / (rec.at(lead, hi - 1) - rec.at(lead, hi));
    return double(hi - 1) + fr - (double(lo + 1) - fl);
  };
  const double wn = width_at_half_max(normal, tn.anchors[2]);
  const double ww = width_at_half_max(wide, tw.anchors[2]);
  CHECK(ww / wn > 1.6);
  CHECK(ww / wn < 2.4);
}

TEST_CASE("high-amplitude morphology boosts precordial leads only") {
  SynthSpec spec;
  spec.bpm = 60.0;
  spec.noise_std = 0.0;
  spec.seed = 3;
  auto [normal, tn] = synth::generate(spec);
  spec.morph_class = MorphClass::kHighAmplitudeV;
  auto [high, th] = synth::generate(spec);
  const std::size_t a = tn.anchors[2];
  // limb leads (0-5) unchanged, chest leads (6-11) scaled up
  for (std::size_t c = 0; c < 6; ++c)
    CHECK(high.at(c, a) == doctest::Approx(normal.at(c, a)).epsilon(1e-9));
  // the anchor sample is dominated by the R wave but carries small P/T
  // tails that the morphology does not scale, hence the loose tolerance
  for (std::size_t c = 6; c < 12; ++c)
    CHECK(std::abs(high.at(c, a)) == doctest::Approx(1.35 * std::abs(normal.at(c, a))).epsilon(2e-3));
}

TEST_CASE("dropped-beat records always drop at least one beat") {
  SynthSpec spec;
  spec.bpm = 90.0;
  spec.duration_s = 10.0;
  spec.rhythm_class = RhythmClass::kDroppedBeat;
  for (std::uint64_t s = 0; s < 20; ++s) {
    spec.seed = s;
    auto [rec, truth] = synth::generate(spec);
    SynthSpec reg = spec;
    reg.rhythm_class = RhythmClass::kRegular;
    auto [rrec, rtruth] = synth::generate(reg);
    CHECK(truth.anchors.size() < rtruth.anchors.size());
  }
}

TEST_CASE("rhythm classes separate on an RR-interval statistic") {
  // a trivial threshold classifier on normalized RR variance should tell
  // regular from irregular almost perfectly
  auto rr_cv = [](const std::vector<std::size_t>& a) {
    std::vector<double> rr;
    for (std::size_t i = 1; i < a.size(); ++i) rr.push_back(double(a[i] - a[i - 1]));
    const double mean = std::accumulate(rr.begin(), rr.end(), 0.0) / rr.size();
    double var = 0;
    for (double x : rr) var += (x - mean) * (x - mean);
    return std::sqrt(var / rr.size()) / mean;
  };
  int correct = 0, total = 0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    SynthSpec spec;
    spec.duration_s = 10.0;
    spec.bpm = 80.0;
    spec.seed = s;
    spec.rhythm_class = RhythmClass::kRegular;
    auto [r1, t1] = synth::generate(spec);
    spec.rhythm_class = RhythmClass::kIrregularRR;
    auto [r2, t2] = synth::generate(spec);
    correct += rr_cv(t1.anchors) < 0.05;
    correct += rr_cv(t2.anchors) >= 0.05;
    total += 2;
  }
  CHECK(double(correct) / total > 0.95);
}

TEST_CASE("suite is balanced, labeled, split 7:1:2") {
  synth::SuiteOptions opts;
  opts.n_per_class = 8;
  opts.seed = 4;
  auto ds = synth::make_suite(opts);
  CHECK(ds.records.size() == 72);  // 3 rhythm x 3 morph x 8
  CHECK(ds.label_names.size() == 6);
  CHECK(ds.split.train.size() + ds.split.val.size() + ds.split.test.size() == 72);
  CHECK(ds.split.train.size() == 50);  // largest-remainder of 72*0.7
  CHECK(ds.split.val.size() == 7);
  CHECK(ds.split.test.size() == 15);

  // one-hot per axis
  std::vector<int> counts(6, 0);
  for (const auto& r : ds.records) {
    CHECK(r.labels.size() == 6);
    int rhythm = r.labels[0] + r.labels[1] + r.labels[2];
    int morph = r.labels[3] + r.labels[4] + r.labels[5];
    CHECK(rhythm == 1);
    CHECK(morph == 1);
    for (int k = 0; k < 6; ++k) counts[k] += r.labels[k];
  }
  for (int k = 0; k < 6; ++k) CHECK(counts[k] == 24);

  auto ds2 = synth::make_suite(opts);
  CHECK(ds2.records[10].signal == ds.records[10].signal);
}

TEST_CASE("rhythm-only suite labels") {
  synth::SuiteOptions opts;
  opts.n_per_class = 4;
  opts.rhythm_only = true;
  auto ds = synth::make_suite(opts);
  CHECK(ds.label_names.size() == 3);
  CHECK(ds.records.size() == 12);
}

TEST_CASE("planted lead is the only lead carrying beats") {
  SynthSpec spec;
  spec.rhythm_class = RhythmClass::kDroppedBeat;
  spec.duration_s = 10.0;
  spec.bpm = 80.0;
  spec.noise_std = 0.0;
  spec.seed = 6;
  spec.planted_lead = 3;
  auto [rec, truth] = synth::generate(spec);

  SynthSpec reg = spec;
  reg.planted_lead = -1;
  reg.rhythm_class = RhythmClass::kRegular;
  auto [rrec, rtruth] = synth::generate(reg);

  // dropped beats show up in the planted lead's anchor truth
  CHECK(truth.anchors.size() < rtruth.anchors.size());

  // the planted lead has QRS peaks at every anchor
  for (auto a : truth.anchors) {
    double peak = 0;
    for (std::size_t t = (a >= 3 ? a - 3 : 0); t < std::min(rec.T, a + 4); ++t)
      peak = std::max(peak, std::abs(rec.at(3, t)));
    CHECK(peak > 0.1);
  }

  // every other lead is silent (noise-free spec, so exactly zero)
  for (std::size_t c = 0; c < rec.C; ++c) {
    if (c == 3) continue;
    double mx = 0;
    for (std::size_t t = 0; t < rec.T; ++t) mx = std::max(mx, std::abs(rec.at(c, t)));
    CHECK(mx == 0.0);
  }
}

TEST_CASE("lead names follow the standard order") {
  CHECK(synth::standard_lead_names().size() == 12);
  CHECK(synth::standard_lead_names()[synth::lead_ii_index()] == "II");
}
