#include "beatnet/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace beatnet::signal {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

void check_spec(const FilterSpec& spec, double fs) {
  if (spec.order < 1) throw std::invalid_argument("filter: order must be >= 1");
  if (!(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz))
    throw std::invalid_argument("filter: need 0 < low_hz < high_hz");
  if (spec.high_hz >= fs / 2.0)
    throw std::invalid_argument("filter: high cutoff " + std::to_string(spec.high_hz) +
                                " Hz at or above Nyquist for fs=" + std::to_string(fs));
}

}  // namespace

std::vector<Biquad> design_butter_bandpass(const FilterSpec& spec, double fs) {
  check_spec(spec, fs);
  const int n = spec.order;

  // Prewarped analog band edges for the bilinear transform at 2*fs.
  const double fs2 = 2.0 * fs;
  const double w1 = fs2 * std::tan(kPi * spec.low_hz / fs);
  const double w2 = fs2 * std::tan(kPi * spec.high_hz / fs);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  // Lowpass prototype poles on the unit circle, then LP->BP: each prototype
  // pole p yields the two roots of s^2 - p*bw*s + w0^2 = 0.
  std::vector<cd> zpoles;
  for (int k = 0; k < n; ++k) {
    const double theta = kPi * (2.0 * k + n + 1.0) / (2.0 * n);
    const cd p(std::cos(theta), std::sin(theta));
    const cd pb = p * bw;
    const cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
    for (const cd s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
      // Bilinear: z = (2fs + s) / (2fs - s)
      zpoles.push_back((fs2 + s) / (fs2 - s));
    }
  }

  // Pair poles into conjugate (or real-real) pairs.
  std::vector<std::pair<cd, cd>> pairs;
  std::vector<cd> pending = zpoles;
  while (!pending.empty()) {
    cd p = pending.back();
    pending.pop_back();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const double d = std::abs(pending[i] - std::conj(p));
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (pending.empty()) throw std::runtime_error("filter design: odd pole count");
    pairs.emplace_back(p, pending[best]);
    pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(best));
  }

  // Each section carries one zero at z=+1 and one at z=-1: b = [1, 0, -1].
  std::vector<Biquad> sos;
  for (const auto& [p1, p2] : pairs) {
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, -(p1 + p2).real(), (p1 * p2).real()};
    sos.push_back(s);
  }

  // Normalize so |H| = 1 at the (warped) center frequency.
  const double theta_c = 2.0 * std::atan(w0 / fs2);
  const cd z = std::polar(1.0, theta_c);
  cd h(1.0, 0.0);
  for (const auto& s : sos) {
    const cd num = s.b[0] * z * z + s.b[1] * z + s.b[2];
    const cd den = s.a[0] * z * z + s.a[1] * z + s.a[2];
    h *= num / den;
  }
  const double g = std::pow(1.0 / std::abs(h), 1.0 / static_cast<double>(sos.size()));
  for (auto& s : sos)
    for (auto& c : s.b) c *= g;
  return sos;
}

double sos_response(const std::vector<Biquad>& sos, double freq_hz, double fs) {
  const cd z = std::polar(1.0, 2.0 * kPi * freq_hz / fs);
  cd h(1.0, 0.0);
  for (const auto& s : sos) {
    const cd num = s.b[0] * z * z + s.b[1] * z + s.b[2];
    const cd den = s.a[0] * z * z + s.a[1] * z + s.a[2];
    h *= num / den;
  }
  return std::abs(h);
}

namespace {

// Steady-state state for a unit step, section by section (direct form II
// transposed); scaled by the actual first sample when applied.
struct SectionZi {
  double z1, z2, dc_out;
};

SectionZi section_zi(const Biquad& s) {
  const double den = 1.0 + s.a[1] + s.a[2];
  const double y_ss = den != 0.0 ? (s.b[0] + s.b[1] + s.b[2]) / den : 0.0;
  SectionZi zi;
  zi.z2 = s.b[2] - s.a[2] * y_ss;
  zi.z1 = s.b[1] - s.a[1] * y_ss + zi.z2;
  zi.dc_out = y_ss;
  return zi;
}

void sosfilt_inplace(const std::vector<Biquad>& sos, std::vector<double>& x) {
  double scale = x.empty() ? 0.0 : x.front();
  for (const auto& s : sos) {
    const SectionZi zi = section_zi(s);
    double z1 = zi.z1 * scale, z2 = zi.z2 * scale;
    for (double& v : x) {
      const double in = v;
      const double out = s.b[0] * in + z1;
      z1 = s.b[1] * in - s.a[1] * out + z2;
      z2 = s.b[2] * in - s.a[2] * out;
      v = out;
    }
    scale *= zi.dc_out;
  }
}

}  // namespace

std::vector<double> sosfiltfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  if (x.size() < 2) return x;
  const std::size_t pad = std::min(x.size() - 1, 12 * sos.size() + 24);
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x.front() - x[pad - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 2 - i]);

  sosfilt_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + x.size()));
}

EcgRecord bandpass(const EcgRecord& rec, const FilterSpec& spec) {
  const auto sos = design_butter_bandpass(spec, static_cast<double>(rec.fs));
  EcgRecord out = rec;
  std::vector<double> lead(rec.T);
  for (std::size_t c = 0; c < rec.C; ++c) {
    std::copy_n(rec.signal.begin() + static_cast<std::ptrdiff_t>(c * rec.T), rec.T, lead.begin());
    const auto y = sosfiltfilt(sos, lead);
    std::copy(y.begin(), y.end(), out.signal.begin() + static_cast<std::ptrdiff_t>(c * rec.T));
  }
  for (double v : out.signal)
    if (!std::isfinite(v)) throw std::runtime_error("bandpass: filter produced non-finite output");
  return out;
}

EcgRecord resample(const EcgRecord& rec, std::uint32_t target_fs, bool linear_interp) {
  if (target_fs == 0) throw std::invalid_argument("resample: target_fs must be positive");
  if (target_fs > rec.fs)
    throw std::invalid_argument("resample: upsampling " + std::to_string(rec.fs) + " -> " +
                                std::to_string(target_fs) + " Hz is not supported");
  if (target_fs == rec.fs) return rec;

  const double ratio = static_cast<double>(rec.fs) / static_cast<double>(target_fs);
  const std::size_t Tout = static_cast<std::size_t>(
      std::llround(static_cast<double>(rec.T) * target_fs / rec.fs));

  EcgRecord out = rec;
  out.fs = target_fs;
  out.T = Tout;
  out.signal.assign(rec.C * Tout, 0.0);

  if (linear_interp) {
    // Moving-average anti-alias over one input period, then linear interp.
    const std::size_t w = static_cast<std::size_t>(std::ceil(ratio));
    for (std::size_t c = 0; c < rec.C; ++c) {
      std::vector<double> smooth(rec.T);
      for (std::size_t t = 0; t < rec.T; ++t) {
        const std::size_t lo = t >= w / 2 ? t - w / 2 : 0;
        const std::size_t hi = std::min(rec.T, lo + w);
        double s = 0;
        for (std::size_t k = lo; k < hi; ++k) s += rec.at(c, k);
        smooth[t] = s / static_cast<double>(hi - lo);
      }
      for (std::size_t n = 0; n < Tout; ++n) {
        const double pos = static_cast<double>(n) * ratio;
        const std::size_t i = std::min(static_cast<std::size_t>(pos), rec.T - 2);
        const double frac = pos - static_cast<double>(i);
        out.at(c, n) = smooth[i] * (1.0 - frac) + smooth[i + 1] * frac;
      }
    }
    return out;
  }

  // Windowed-sinc kernel: cutoff a bit under the output Nyquist, Hamming
  // window, half-width proportional to the decimation ratio.
  const double fc = 0.45 / ratio;  // cycles per input sample
  const int half = static_cast<int>(std::ceil(16.0 * ratio));
  for (std::size_t c = 0; c < rec.C; ++c) {
    for (std::size_t n = 0; n < Tout; ++n) {
      const double center = static_cast<double>(n) * ratio;
      const int k0 = static_cast<int>(std::floor(center)) - half;
      const int k1 = static_cast<int>(std::floor(center)) + half + 1;
      double acc = 0, wsum = 0;
      for (int k = std::max(k0, 0); k <= std::min<int>(k1, static_cast<int>(rec.T) - 1); ++k) {
        const double t = static_cast<double>(k) - center;
        const double win = 0.54 + 0.46 * std::cos(kPi * t / (half + 1));
        double sinc = (t == 0.0) ? 2.0 * fc : std::sin(2.0 * kPi * fc * t) / (kPi * t);
        const double h = sinc * win;
        acc += h * rec.at(c, static_cast<std::size_t>(k));
        wsum += h;
      }
      // Normalizing by the truncated kernel sum keeps unity passband gain
      // at record boundaries as well.
      out.at(c, n) = wsum != 0.0 ? acc / wsum : 0.0;
    }
  }
  return out;
}

EcgRecord minmax_normalize(const EcgRecord& rec, std::vector<std::string>* warnings) {
  EcgRecord out = rec;
  for (std::size_t c = 0; c < rec.C; ++c) {
    const double* lead = rec.signal.data() + c * rec.T;
    const auto [mn_it, mx_it] = std::minmax_element(lead, lead + rec.T);
    const double mn = *mn_it, mx = *mx_it;
    double* dst = out.signal.data() + c * rec.T;
    if (mx == mn) {
      std::fill_n(dst, rec.T, 0.5);
      if (warnings)
        warnings->push_back("record " + rec.record_id + ": constant lead " +
                            rec.lead_names[c] + " mapped to 0.5");
      continue;
    }
    const double inv = 1.0 / (mx - mn);
    for (std::size_t t = 0; t < rec.T; ++t) dst[t] = (lead[t] - mn) * inv;
  }
  return out;
}

SplitIndices split_dataset(const std::vector<EcgRecord>& records,
                           const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double rsum = ratios[0] + ratios[1] + ratios[2];
  if (!(ratios[0] > 0 && ratios[1] > 0 && ratios[2] > 0) || std::abs(rsum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: ratios must be positive and sum to 1");
  const std::size_t N = records.size();
  if (N < 3) throw std::invalid_argument("split_dataset: fewer records than partitions");

  // Exact split sizes by largest remainder.
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(N);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  while (assigned < N) {
    const int j = static_cast<int>(std::max_element(rem.begin(), rem.end()) - rem.begin());
    ++sizes[j];
    rem[j] = -1;
    ++assigned;
  }

  // Stratified order: shuffle within label groups, then sort records by
  // their normalized position inside the group so a contiguous cut stays
  // proportional per group.
  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < N; ++i) groups[records[i].labels].push_back(i);
  struct Key {
    double frac;
    std::size_t idx;
  };
  std::vector<Key> order;
  order.reserve(N);
  std::mt19937_64 rng(seed);
  for (auto& [labels, idxs] : groups) {
    std::shuffle(idxs.begin(), idxs.end(), rng);
    for (std::size_t r = 0; r < idxs.size(); ++r)
      order.push_back({(static_cast<double>(r) + 0.5) / static_cast<double>(idxs.size()), idxs[r]});
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Key& a, const Key& b) { return a.frac < b.frac; });

  SplitIndices out;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t idx = order[i].idx;
    if (i < sizes[0]) out.train.push_back(idx);
    else if (i < sizes[0] + sizes[1]) out.val.push_back(idx);
    else out.test.push_back(idx);
  }
  return out;
}

EcgRecord preprocess(const EcgRecord& rec, const PreprocessProfile& profile,
                     std::vector<std::string>* warnings) {
  EcgRecord out = resample(rec, profile.target_fs);
  if (profile.apply_filter) out = bandpass(out, profile.filter);
  if (profile.normalize) out = minmax_normalize(out, warnings);
  return out;
}

}  // namespace beatnet::signal
