#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "beatnet/signal.hpp"

using namespace beatnet;
using signal::FilterSpec;

namespace {

EcgRecord make_record(std::uint32_t fs, std::vector<std::vector<double>> leads) {
  EcgRecord r;
  r.record_id = "t";
  r.fs = fs;
  r.C = leads.size();
  r.T = leads[0].size();
  for (std::size_t c = 0; c < r.C; ++c) {
    r.lead_names.push_back("L" + std::to_string(c));
    r.signal.insert(r.signal.end(), leads[c].begin(), leads[c].end());
  }
  return r;
}

std::vector<double> sine(double freq, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / fs);
  return x;
}

double rms(const std::vector<double>& x, std::size_t skip) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = skip; i + skip < x.size(); ++i, ++n) s += x[i] * x[i];
  return std::sqrt(s / n);
}

}  // namespace

TEST_CASE("bandpass rejects DC") {
  const double fs = 100.0;
  auto sos = signal::design_butter_bandpass(FilterSpec{}, fs);
  std::vector<double> x(2000, 1.0);
  auto y = signal::sosfiltfilt(sos, x);
  double peak = 0.0;
  for (std::size_t i = 200; i + 200 < y.size(); ++i) peak = std::max(peak, std::abs(y[i]));
  CHECK(peak < 1e-3);
}

TEST_CASE("bandpass passes 10 Hz near unity") {
  const double fs = 100.0;
  auto sos = signal::design_butter_bandpass(FilterSpec{}, fs);
  auto x = sine(10.0, fs, 4000);
  auto y = signal::sosfiltfilt(sos, x);
  const double ratio = rms(y, 400) / rms(x, 400);
  CHECK(ratio > 0.9);
  CHECK(ratio < 1.1);
}

TEST_CASE("bandpass attenuates 0.1 Hz") {
  const double fs = 100.0;
  auto sos = signal::design_butter_bandpass(FilterSpec{}, fs);
  auto x = sine(0.1, fs, 8000);
  auto y = signal::sosfiltfilt(sos, x);
  CHECK(rms(y, 800) / rms(x, 800) < 0.2);
}

TEST_CASE("filtering is zero phase") {
  const double fs = 100.0;
  auto sos = signal::design_butter_bandpass(FilterSpec{}, fs);
  auto x = sine(10.0, fs, 4000);
  auto y = signal::sosfiltfilt(sos, x);
  // cross-correlation peak over small lags must land at zero
  double best = -1.0;
  int best_lag = -99;
  for (int lag = -5; lag <= 5; ++lag) {
    double s = 0.0;
    for (std::size_t i = 500; i < 3500; ++i) s += x[i] * y[i + lag];
    if (s > best) {
      best = s;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filter is linear") {
  const double fs = 100.0;
  auto sos = signal::design_butter_bandpass(FilterSpec{}, fs);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  std::vector<double> a(1000), b(1000), c(1000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = d(rng);
    b[i] = d(rng);
    c[i] = 2.0 * a[i] + 3.0 * b[i];
  }
  auto fa = signal::sosfiltfilt(sos, a);
  auto fb = signal::sosfiltfilt(sos, b);
  auto fc = signal::sosfiltfilt(sos, c);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(fc[i] == doctest::Approx(2.0 * fa[i] + 3.0 * fb[i]).epsilon(1e-8));
}

TEST_CASE("invalid cutoffs rejected") {
  CHECK_THROWS_AS(signal::design_butter_bandpass(FilterSpec{5, 0.67, 60.0}, 100.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(signal::design_butter_bandpass(FilterSpec{5, 40.0, 0.67}, 100.0),
                  std::invalid_argument);
}

TEST_CASE("resample preserves a band-limited sine") {
  const double fs = 500.0;
  auto rec = make_record(500, {sine(7.0, fs, 5000)});
  auto out = signal::resample(rec, 100);
  CHECK(out.fs == 100);
  CHECK(out.T == 1000);
  auto ref = sine(7.0, 100.0, 1000);
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 50; i + 50 < ref.size(); ++i) {
    num += ref[i] * out.at(0, i);
    dx += ref[i] * ref[i];
    dy += out.at(0, i) * out.at(0, i);
  }
  CHECK(num / std::sqrt(dx * dy) > 0.999);
}

TEST_CASE("resample at equal rate is identity") {
  auto rec = make_record(100, {sine(5.0, 100.0, 1000)});
  auto out = signal::resample(rec, 100);
  for (std::size_t i = 0; i < rec.T; ++i) CHECK(out.at(0, i) == rec.at(0, i));
}

TEST_CASE("upsampling rejected") {
  auto rec = make_record(100, {sine(5.0, 100.0, 1000)});
  CHECK_THROWS_AS(signal::resample(rec, 200), std::invalid_argument);
}

TEST_CASE("minmax normalization") {
  auto rec = make_record(100, {{-2.0, 0.0, 2.0, 1.0}, {5.0, 5.0, 5.0, 5.0}});
  rec.T = 4;
  std::vector<std::string> warnings;
  auto out = signal::minmax_normalize(rec, &warnings);
  CHECK(out.at(0, 0) == doctest::Approx(0.0));
  CHECK(out.at(0, 1) == doctest::Approx(0.5));
  CHECK(out.at(0, 2) == doctest::Approx(1.0));
  CHECK(out.at(0, 3) == doctest::Approx(0.75));
  // constant lead maps to mid-range and produces a warning
  for (std::size_t i = 0; i < 4; ++i) CHECK(out.at(1, i) == doctest::Approx(0.5));
  CHECK(warnings.size() == 1);
}

TEST_CASE("stratified split is deterministic, disjoint, complete") {
  std::vector<EcgRecord> recs;
  for (int i = 0; i < 100; ++i) {
    auto r = make_record(100, {sine(5.0, 100.0, 200)});
    r.record_id = "r" + std::to_string(i);
    r.label_names = {"a"};
    r.labels = {static_cast<std::uint8_t>(i % 4 == 0)};
    recs.push_back(std::move(r));
  }
  auto s1 = signal::split_dataset(recs, {0.7, 0.1, 0.2}, 42);
  auto s2 = signal::split_dataset(recs, {0.7, 0.1, 0.2}, 42);
  CHECK(s1.train == s2.train);
  CHECK(s1.val == s2.val);
  CHECK(s1.test == s2.test);
  CHECK(s1.train.size() == 70);
  CHECK(s1.val.size() == 10);
  CHECK(s1.test.size() == 20);

  std::vector<int> seen(100, 0);
  for (auto i : s1.train) seen[i]++;
  for (auto i : s1.val) seen[i]++;
  for (auto i : s1.test) seen[i]++;
  for (int c : seen) CHECK(c == 1);

  // 25 positives stratify close to 7:1:2
  auto count_pos = [&](const std::vector<std::size_t>& idx) {
    std::size_t n = 0;
    for (auto i : idx) n += recs[i].labels[0];
    return n;
  };
  CHECK(count_pos(s1.train) >= 16);
  CHECK(count_pos(s1.train) <= 19);
  CHECK(count_pos(s1.test) >= 4);
  CHECK(count_pos(s1.test) <= 6);

  auto s3 = signal::split_dataset(recs, {0.7, 0.1, 0.2}, 43);
  CHECK(s1.train != s3.train);
}

TEST_CASE("preprocess pipeline output is in range and at target rate") {
  const double fs = 500.0;
  std::vector<double> x = sine(1.3, fs, 5000, 0.8);
  auto qrs = sine(11.0, fs, 5000, 0.4);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += qrs[i] + 0.3;
  auto rec = make_record(500, {x});
  auto out = signal::preprocess(rec, signal::PreprocessProfile{});
  CHECK(out.fs == 100);
  CHECK(out.T == 1000);
  double lo = 1e18, hi = -1e18;
  for (std::size_t i = 0; i < out.T; ++i) {
    lo = std::min(lo, out.at(0, i));
    hi = std::max(hi, out.at(0, i));
  }
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(1.0));
}
