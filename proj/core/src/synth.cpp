#include "beatnet/synth.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace beatnet::synth {

namespace {

const std::vector<std::string> kLeadNames = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                             "V1", "V2", "V3",  "V4",  "V5",  "V6"};

// Projection of the scalar cardiac source onto each lead.
constexpr double kLeadGain[12] = {0.60, 1.00, 0.50, -0.55, 0.45, 0.80,
                                  0.50, 0.75, 0.95, 1.05,  1.00, 0.85};

// Lead-specific relative P/T amplitudes. The spread across leads is wide
// compared with the class-level QRS scaling, so shape alone does not give
// the lead away.
constexpr double kLeadPMult[12] = {0.70, 1.00, 0.85, 0.90, 0.75, 1.10,
                                   0.80, 1.05, 0.95, 1.15, 0.90, 1.20};
constexpr double kLeadTMult[12] = {0.75, 1.10, 0.90, 1.00, 0.80, 1.20,
                                   0.85, 1.15, 1.00, 1.25, 0.95, 1.30};

constexpr double kHighVQrsScale = 1.35;
constexpr double kWideQrsWidthScale = 2.0;

struct Wave {
  double amp, mu, sigma;  // mV, seconds relative to R
};

// P, Q, R, S, T.
constexpr Wave kWaves[5] = {{0.15, -0.20, 0.035},
                            {-0.12, -0.035, 0.012},
                            {1.00, 0.0, 0.014},
                            {-0.20, 0.035, 0.014},
                            {0.35, 0.22, 0.060}};

std::vector<double> beat_times(double bpm, RhythmClass rhythm, double duration_s,
                               std::mt19937_64& rng) {
  const double rr0 = 60.0 / bpm;
  // Irregular RR jitters beat positions on the regular grid instead of
  // accumulating interval noise, so regular and irregular records have the
  // same beat count and the class is carried by timing alone. Offsets stay
  // within +-0.2 RR, keeping beats ordered with a gap of at least 0.6 RR.
  std::uniform_real_distribution<double> jitter(-0.2 * rr0, 0.2 * rr0);
  std::uniform_real_distribution<double> drop(0.0, 1.0);
  std::vector<double> times;
  double t = 0.5;
  bool dropped_any = false;
  while (t < duration_s - 0.25) {
    bool keep = true;
    if (rhythm == RhythmClass::kDroppedBeat && !times.empty() && drop(rng) < 0.18) {
      keep = false;
      dropped_any = true;
    }
    if (keep) times.push_back(rhythm == RhythmClass::kIrregularRR ? t + jitter(rng) : t);
    t += rr0;
  }
  if (rhythm == RhythmClass::kDroppedBeat && !dropped_any && times.size() > 2) {
    times.erase(times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2));
  }
  return times;
}

}  // namespace

std::string to_string(RhythmClass r) {
  switch (r) {
    case RhythmClass::kRegular: return "regular";
    case RhythmClass::kIrregularRR: return "irregular-RR";
    case RhythmClass::kDroppedBeat: return "dropped-beat";
  }
  return "?";
}

std::string to_string(MorphClass m) {
  switch (m) {
    case MorphClass::kNormal: return "normal";
    case MorphClass::kWideQrs: return "wide-QRS";
    case MorphClass::kHighAmplitudeV: return "high-amplitude-V";
  }
  return "?";
}

std::size_t lead_ii_index() { return 1; }

const std::vector<std::string>& standard_lead_names() { return kLeadNames; }

std::pair<EcgRecord, tok::RPeakSet> generate(const SynthSpec& spec) {
  if (spec.bpm < 30.0 || spec.bpm > 220.0)
    throw std::invalid_argument("synth: bpm must be in [30, 220]");
  if (spec.noise_std < 0.0) throw std::invalid_argument("synth: noise_std must be >= 0");
  if (spec.duration_s < 2.0) throw std::invalid_argument("synth: duration must be >= 2 s");
  if (spec.planted_lead >= 12) throw std::invalid_argument("synth: planted_lead out of range");

  std::mt19937_64 rng(spec.seed);
  const std::size_t C = 12;
  const std::size_t T = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));

  // Class rhythm on the planted lead (or on every lead when not planted).
  // When a lead is planted the remaining leads carry noise only: windows are
  // cut at the planted lead's anchors, so any beat in another lead would
  // still pick up the anchor timing and leak rhythm information.
  const std::vector<double> class_times = beat_times(spec.bpm, spec.rhythm_class, spec.duration_s, rng);

  // Per-record per-lead morphology jitter; wide compared with class effects
  // so lead identity can't be read off a single token shape. QRS gain jitter
  // (below the 1.35 high-amplitude scale) hides the high-amplitude class
  // from any model that cannot compare a lead against its own baseline.
  std::normal_distribution<double> logn(0.0, 0.12);
  double p_mult[12], t_mult[12], qrs_mult[12];
  for (std::size_t c = 0; c < C; ++c) {
    p_mult[c] = kLeadPMult[c] * std::exp(logn(rng));
    t_mult[c] = kLeadTMult[c] * std::exp(logn(rng));
    qrs_mult[c] = std::exp(logn(rng));
  }

  const double qrs_width = spec.morph_class == MorphClass::kWideQrs ? kWideQrsWidthScale : 1.0;

  EcgRecord rec;
  rec.fs = spec.fs;
  rec.C = C;
  rec.T = T;
  rec.lead_names = kLeadNames;
  rec.signal.assign(C * T, 0.0);

  std::normal_distribution<double> noise(0.0, spec.noise_std);
  for (std::size_t c = 0; c < C; ++c) {
    const bool planted_elsewhere = spec.planted_lead >= 0 &&
                                   static_cast<int>(c) != spec.planted_lead;
    if (planted_elsewhere) continue;  // noise is still added below
    const std::vector<double>& times = class_times;
    const double qrs_amp =
        (spec.morph_class == MorphClass::kHighAmplitudeV && c >= 6) ? kHighVQrsScale : 1.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double ts = static_cast<double>(t) / spec.fs;
      double v = 0.0;
      for (double bt : times) {
        const double dt = ts - bt;
        if (std::abs(dt) > 0.6) continue;
        for (int w = 0; w < 5; ++w) {
          double amp = kWaves[w].amp;
          double sigma = kWaves[w].sigma;
          if (w == 0) amp *= p_mult[c];
          else if (w == 4) amp *= t_mult[c];
          else {
            amp *= qrs_amp * qrs_mult[c];
            sigma *= qrs_width;
          }
          const double z = (dt - kWaves[w].mu) / sigma;
          v += amp * std::exp(-0.5 * z * z);
        }
      }
      rec.at(c, t) = kLeadGain[c] * v;
    }
  }
  // Per-record global gain spread. Absolute amplitude then carries no class
  // information; the high-amplitude morphology is only readable relative to
  // the record's other leads. Separate rng keeps prior draws stable.
  std::mt19937_64 gain_rng(spec.seed * 0x2545f4914f6cdd1dull + 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gain_logn(0.0, 0.3);
  const double record_gain = std::exp(gain_logn(gain_rng));
  for (auto& v : rec.signal) v *= record_gain;

  if (spec.noise_std > 0.0)
    for (auto& v : rec.signal) v += noise(rng);

  tok::RPeakSet truth;
  truth.detection_lead = kLeadNames[spec.planted_lead >= 0 ? spec.planted_lead : lead_ii_index()];
  for (double bt : class_times) {
    const auto idx = static_cast<std::size_t>(std::llround(bt * spec.fs));
    if (idx < T) truth.anchors.push_back(idx);
  }
  return {std::move(rec), std::move(truth)};
}

SynthDataset make_suite(const SuiteOptions& opts) {
  if (opts.n_per_class < 4) throw std::invalid_argument("make_suite: n_per_class must be >= 4");
  SynthDataset ds;
  if (opts.rhythm_only) {
    ds.label_names = {"rhythm_regular", "rhythm_irregular_rr", "rhythm_dropped_beat"};
  } else {
    ds.label_names = {"rhythm_regular",  "rhythm_irregular_rr", "rhythm_dropped_beat",
                      "morph_normal", "morph_wide_qrs", "morph_high_amplitude_v"};
  }
  const RhythmClass rhythms[3] = {RhythmClass::kRegular, RhythmClass::kIrregularRR,
                                  RhythmClass::kDroppedBeat};
  const MorphClass morphs[3] = {MorphClass::kNormal, MorphClass::kWideQrs,
                                MorphClass::kHighAmplitudeV};
  std::uint64_t counter = 0;
  for (int r = 0; r < 3; ++r) {
    for (int m = 0; m < 3; ++m) {
      if (opts.rhythm_only && m != 0) continue;
      for (std::size_t i = 0; i < opts.n_per_class; ++i) {
        SynthSpec spec;
        spec.bpm = opts.bpm;
        spec.rhythm_class = rhythms[r];
        spec.morph_class = morphs[m];
        spec.noise_std = opts.noise_std;
        spec.duration_s = opts.duration_s;
        spec.fs = opts.fs;
        spec.planted_lead = opts.planted_lead;
        spec.seed = opts.seed * 1000003ull + counter;
        ++counter;
        auto [rec, truth] = generate(spec);
        rec.record_id = "synth_" + to_string(rhythms[r]) + "_" + to_string(morphs[m]) + "_" +
                        std::to_string(i);
        rec.label_names = ds.label_names;
        if (opts.rhythm_only) {
          rec.labels = {0, 0, 0};
          rec.labels[static_cast<std::size_t>(r)] = 1;
        } else {
          rec.labels = {0, 0, 0, 0, 0, 0};
          rec.labels[static_cast<std::size_t>(r)] = 1;
          rec.labels[3 + static_cast<std::size_t>(m)] = 1;
        }
        ds.records.push_back(std::move(rec));
        ds.truth.push_back(std::move(truth));
      }
    }
  }
  ds.split = signal::split_dataset(ds.records, {0.7, 0.1, 0.2}, opts.seed);
  return ds;
}

}  // namespace beatnet::synth
