#include "beatnet/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "beatnet/signal.hpp"

namespace beatnet::tok {

std::size_t TokenSequence::valid_count() const {
  std::size_t n = 0;
  for (const auto& t : tokens) n += t.valid ? 1 : 0;
  return n;
}

std::vector<std::uint8_t> TokenSequence::valid_mask() const {
  std::vector<std::uint8_t> m(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) m[i] = tokens[i].valid ? 1 : 0;
  return m;
}

namespace {

std::size_t detection_lead_index(const EcgRecord& rec) {
  for (std::size_t c = 0; c < rec.C; ++c)
    if (rec.lead_names[c] == "II") return c;
  return 0;
}

std::vector<double> moving_average_centered(const std::vector<double>& x, std::size_t w) {
  std::vector<double> out(x.size(), 0.0);
  const std::size_t half = w / 2;
  double acc = 0;
  // prefix sums keep this O(T)
  std::vector<double> ps(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) ps[i + 1] = ps[i] + x[i];
  (void)acc;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(x.size(), i + half + 1);
    out[i] = (ps[hi] - ps[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace

RPeakSet detect_r_peaks(const EcgRecord& rec) {
  if (rec.T < 2 * static_cast<std::size_t>(rec.fs))
    throw std::invalid_argument("detect_r_peaks: record shorter than the 2 s warm-up window");
  const double fs = static_cast<double>(rec.fs);
  const std::size_t lead = detection_lead_index(rec);

  RPeakSet out;
  out.detection_lead = rec.lead_names[lead];

  std::vector<double> x(rec.T);
  for (std::size_t t = 0; t < rec.T; ++t) x[t] = rec.at(lead, t);

  // QRS emphasis band, zero-phase so anchors stay put.
  signal::FilterSpec qrs_band{2, 5.0, std::min(15.0, fs / 2.0 - 1.0)};
  const auto sos = signal::design_butter_bandpass(qrs_band, fs);
  std::vector<double> bp = signal::sosfiltfilt(sos, x);

  // Centered five-point derivative, squared.
  std::vector<double> sq(rec.T, 0.0);
  for (std::size_t t = 2; t + 2 < rec.T; ++t) {
    const double d = (2.0 * bp[t + 2] + bp[t + 1] - bp[t - 1] - 2.0 * bp[t - 2]) / 8.0;
    sq[t] = d * d;
  }

  const std::size_t mwi_w = std::max<std::size_t>(3, static_cast<std::size_t>(std::lround(0.15 * fs)));
  std::vector<double> mwi = moving_average_centered(sq, mwi_w);

  // Candidate peaks: local maxima of the integrated signal.
  std::vector<std::size_t> cand;
  for (std::size_t t = 1; t + 1 < rec.T; ++t)
    if (mwi[t] > 0 && mwi[t] >= mwi[t - 1] && mwi[t] > mwi[t + 1]) cand.push_back(t);
  if (cand.empty()) return out;

  // Adaptive thresholding with a 200 ms refractory.
  const std::size_t warmup = std::min(rec.T, static_cast<std::size_t>(2.0 * fs));
  double init_max = 0;
  for (std::size_t t = 0; t < warmup; ++t) init_max = std::max(init_max, mwi[t]);
  double spki = 0.5 * init_max;
  double npki = 0.1 * init_max;
  const std::size_t refractory = static_cast<std::size_t>(std::lround(0.2 * fs));
  const std::size_t search_w = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(0.1 * fs)));

  std::vector<std::size_t> anchors;
  std::ptrdiff_t last = -static_cast<std::ptrdiff_t>(rec.T);
  for (std::size_t p : cand) {
    const double threshold = npki + 0.25 * (spki - npki);
    const bool beyond_refractory =
        static_cast<std::ptrdiff_t>(p) - last >= static_cast<std::ptrdiff_t>(refractory);
    if (mwi[p] > threshold && beyond_refractory) {
      spki = 0.125 * mwi[p] + 0.875 * spki;
      // Snap the anchor to the largest QRS deflection near the MWI peak.
      const std::size_t lo = p >= search_w ? p - search_w : 0;
      const std::size_t hi = std::min(rec.T, p + search_w + 1);
      std::size_t best = lo;
      for (std::size_t t = lo; t < hi; ++t)
        if (std::abs(bp[t]) > std::abs(bp[best])) best = t;
      if (!anchors.empty() && best <= anchors.back()) continue;
      if (!anchors.empty() && best - anchors.back() < refractory) continue;
      anchors.push_back(best);
      last = static_cast<std::ptrdiff_t>(p);
    } else {
      npki = 0.125 * mwi[p] + 0.875 * npki;
    }
  }
  out.anchors = std::move(anchors);
  return out;
}

namespace {

HeartbeatToken cut_token(const EcgRecord& rec, std::size_t lead, std::ptrdiff_t center,
                         std::size_t L) {
  HeartbeatToken tk;
  tk.waveform.assign(L, 0.0);
  const std::ptrdiff_t start = center - static_cast<std::ptrdiff_t>(L / 2);
  for (std::size_t i = 0; i < L; ++i) {
    const std::ptrdiff_t src = start + static_cast<std::ptrdiff_t>(i);
    if (src >= 0 && src < static_cast<std::ptrdiff_t>(rec.T))
      tk.waveform[i] = rec.at(lead, static_cast<std::size_t>(src));
  }
  tk.lead_index = static_cast<std::uint16_t>(lead);
  tk.valid = true;
  return tk;
}

void check_tok_cfg(const EcgRecord& rec, const TokenizerConfig& cfg) {
  if (cfg.L == 0 || cfg.L % 2 != 0)
    throw std::invalid_argument("tokenizer: L must be positive and even");
  if (cfg.S < rec.C)
    throw std::invalid_argument("tokenizer: S=" + std::to_string(cfg.S) +
                                " smaller than lead count C=" + std::to_string(rec.C));
}

void finish_sequence(TokenSequence& seq, const EcgRecord& rec, const TokenizerConfig& cfg) {
  while (seq.tokens.size() < cfg.S) {
    HeartbeatToken pad;
    pad.waveform.assign(cfg.L, 0.0);
    seq.tokens.push_back(std::move(pad));
  }
  seq.labels = rec.labels;
  seq.label_names = rec.label_names;
  seq.lead_names = rec.lead_names;
  seq.record_id = rec.record_id;
}

}  // namespace

TokenSequence extract_tokens(const EcgRecord& rec, const RPeakSet& peaks,
                             const TokenizerConfig& cfg, std::vector<std::string>* warnings) {
  check_tok_cfg(rec, cfg);
  TokenSequence seq;
  seq.tokens.reserve(cfg.S);
  if (peaks.anchors.empty() && warnings)
    warnings->push_back("record " + rec.record_id + ": no R peaks, emitting all-padding sequence");
  if (peaks.anchors.size() * rec.C > cfg.S && warnings)
    warnings->push_back("record " + rec.record_id + ": " +
                        std::to_string(peaks.anchors.size() * rec.C) + " tokens exceed S=" +
                        std::to_string(cfg.S) + ", keeping earliest beats");
  for (std::size_t r = 0; r < peaks.anchors.size() && seq.tokens.size() < cfg.S; ++r) {
    const std::ptrdiff_t tau = static_cast<std::ptrdiff_t>(peaks.anchors[r]);
    for (std::size_t c = 0; c < rec.C && seq.tokens.size() < cfg.S; ++c) {
      HeartbeatToken tk = cut_token(rec, c, tau, cfg.L);
      tk.temporal_index = static_cast<std::uint16_t>(std::min<std::size_t>(r, 0xffff));
      seq.tokens.push_back(std::move(tk));
    }
  }
  finish_sequence(seq, rec, cfg);
  return seq;
}

TokenSequence patch_tokens(const EcgRecord& rec, const TokenizerConfig& cfg) {
  check_tok_cfg(rec, cfg);
  TokenSequence seq;
  seq.tokens.reserve(cfg.S);
  const std::size_t n_windows = (rec.T + cfg.L - 1) / cfg.L;
  for (std::size_t w = 0; w < n_windows && seq.tokens.size() < cfg.S; ++w) {
    const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(w * cfg.L + cfg.L / 2);
    for (std::size_t c = 0; c < rec.C && seq.tokens.size() < cfg.S; ++c) {
      HeartbeatToken tk = cut_token(rec, c, center, cfg.L);
      tk.temporal_index = static_cast<std::uint16_t>(std::min<std::size_t>(w, 0xffff));
      seq.tokens.push_back(std::move(tk));
    }
  }
  finish_sequence(seq, rec, cfg);
  return seq;
}

namespace {

constexpr char kTokMagic[4] = {'B', 'N', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
  std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

}  // namespace

void write_tokens(const TokenSequence& seq, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_tokens: cannot open " + path.string());
  os.write(kTokMagic, 4);
  write_str(os, seq.record_id);
  write_u32(os, static_cast<std::uint32_t>(seq.S()));
  write_u32(os, static_cast<std::uint32_t>(seq.L()));
  write_u32(os, static_cast<std::uint32_t>(seq.labels.size()));
  write_u32(os, static_cast<std::uint32_t>(seq.lead_names.size()));
  for (const auto& s : seq.lead_names) write_str(os, s);
  for (const auto& s : seq.label_names) write_str(os, s);
  for (const auto& tk : seq.tokens) {
    write_u16(os, tk.lead_index);
    write_u16(os, tk.temporal_index);
    os.put(tk.valid ? 1 : 0);
    for (double v : tk.waveform) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      write_u32(os, bits);
    }
  }
  for (auto y : seq.labels) os.put(static_cast<char>(y));
  if (!os) throw std::runtime_error("write_tokens: write failed for " + path.string());
}

TokenSequence read_tokens(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_tokens: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTokMagic, 4) != 0)
    throw std::runtime_error("read_tokens: " + path.string() + " is not a BNT1 file");
  TokenSequence seq;
  seq.record_id = read_str(is);
  const std::size_t S = read_u32(is);
  const std::size_t L = read_u32(is);
  const std::size_t K = read_u32(is);
  const std::size_t C = read_u32(is);
  seq.lead_names.resize(C);
  for (auto& s : seq.lead_names) s = read_str(is);
  seq.label_names.resize(K);
  for (auto& s : seq.label_names) s = read_str(is);
  seq.tokens.resize(S);
  for (auto& tk : seq.tokens) {
    tk.lead_index = read_u16(is);
    tk.temporal_index = read_u16(is);
    tk.valid = is.get() != 0;
    tk.waveform.resize(L);
    for (auto& v : tk.waveform) {
      std::uint32_t bits = read_u32(is);
      float f;
      std::memcpy(&f, &bits, 4);
      v = f;
    }
  }
  seq.labels.resize(K);
  for (auto& y : seq.labels) y = static_cast<std::uint8_t>(is.get());
  if (!is) throw std::runtime_error("read_tokens: truncated file " + path.string());
  return seq;
}

}  // namespace beatnet::tok
