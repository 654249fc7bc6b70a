#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "beatnet/record.hpp"

namespace beatnet::signal {

struct FilterSpec {
  int order = 5;
  double low_hz = 0.67;
  double high_hz = 40.0;
};

// One second-order section; coefficients normalized so a0 == 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{};  // a[0] == 1
};

// Butterworth bandpass as cascaded second-order sections (analog prototype,
// lowpass->bandpass transform, bilinear with prewarping). Gain is split
// evenly across sections. Throws if cutoffs are invalid for fs.
std::vector<Biquad> design_butter_bandpass(const FilterSpec& spec, double fs);

// Cascade magnitude response at freq_hz for a single forward pass.
double sos_response(const std::vector<Biquad>& sos, double freq_hz, double fs);

// Zero-phase forward-backward filtering with odd-reflection edge padding
// and steady-state initial conditions.
std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, const std::vector<double>& x);

// Per-lead zero-phase Butterworth bandpass.
EcgRecord bandpass(const EcgRecord& rec, const FilterSpec& spec);

// Anti-aliased windowed-sinc resampling to target_fs (<= rec.fs). With
// linear_interp the kernel is replaced by plain linear interpolation after a
// moving-average anti-alias stage; acceptable at desk scale.
EcgRecord resample(const EcgRecord& rec, std::uint32_t target_fs, bool linear_interp = false);

// Per-record per-lead min-max to [0,1]. Constant leads map to 0.5 and are
// reported in warnings rather than rejected.
EcgRecord minmax_normalize(const EcgRecord& rec, std::vector<std::string>* warnings = nullptr);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Deterministic label-stratified split; ratios must be positive and sum to 1.
SplitIndices split_dataset(const std::vector<EcgRecord>& records,
                           const std::array<double, 3>& ratios, std::uint64_t seed);

// Canonical preprocessing profile: resample -> (optional) bandpass -> minmax.
struct PreprocessProfile {
  std::uint32_t target_fs = 100;
  bool apply_filter = true;
  FilterSpec filter{};
  bool normalize = true;
};

EcgRecord preprocess(const EcgRecord& rec, const PreprocessProfile& profile,
                     std::vector<std::string>* warnings = nullptr);

}  // namespace beatnet::signal
