#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beatnet/record.hpp"

namespace beatnet::tok {

struct RPeakSet {
  std::vector<std::size_t> anchors;  // strictly increasing sample indices
  std::string detection_lead;
};

struct HeartbeatToken {
  std::vector<double> waveform;  // exactly L samples
  std::uint16_t lead_index = 0;
  std::uint16_t temporal_index = 0;
  bool valid = false;
};

struct TokenSequence {
  std::vector<HeartbeatToken> tokens;  // exactly S entries
  std::vector<std::uint8_t> labels;    // K binary labels
  std::vector<std::string> label_names;
  std::vector<std::string> lead_names;
  std::string record_id;

  std::size_t S() const { return tokens.size(); }
  std::size_t L() const { return tokens.empty() ? 0 : tokens.front().waveform.size(); }
  std::size_t valid_count() const;
  std::vector<std::uint8_t> valid_mask() const;
};

struct TokenizerConfig {
  std::size_t L = 96;   // samples per token, even
  std::size_t S = 256;  // tokens per sequence
  std::size_t max_time_blocks = 64;
};

// Pan-Tompkins style detector (5-15 Hz bandpass, derivative, squaring,
// moving-window integration, adaptive threshold with a 200 ms refractory),
// run on lead II when present, else lead 0. Expects the record preprocessed
// to the canonical sampling rate.
RPeakSet detect_r_peaks(const EcgRecord& rec);

// R-centered tokens: for each anchor, one token per lead, window
// [tau - L/2, tau + L/2), zero padded at record boundaries; time-major then
// lead-major order; truncated (earliest beats kept) or padded to exactly S.
TokenSequence extract_tokens(const EcgRecord& rec, const RPeakSet& peaks,
                             const TokenizerConfig& cfg,
                             std::vector<std::string>* warnings = nullptr);

// Ablation comparator: non-overlapping fixed-stride windows per lead, same
// ordering and padding contract; temporal_index is the window rank.
TokenSequence patch_tokens(const EcgRecord& rec, const TokenizerConfig& cfg);

// Token-sequence container: "BNT1" magic, header (S, L, K), per-token
// records (lead u16, temporal u16, valid u8, L float32), label vector.
void write_tokens(const TokenSequence& seq, const std::filesystem::path& path);
TokenSequence read_tokens(const std::filesystem::path& path);

}  // namespace beatnet::tok
