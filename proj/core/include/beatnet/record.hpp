#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace beatnet {

// Multi-lead ECG record. signal is row-major: lead c, sample t at
// signal[c * T + t], in millivolts.
struct EcgRecord {
  std::string record_id;
  std::uint32_t fs = 0;  // Hz
  std::size_t C = 0;     // leads
  std::size_t T = 0;     // samples per lead
  std::vector<std::string> lead_names;
  std::vector<std::string> label_names;
  std::vector<std::uint8_t> labels;  // K binary labels
  std::vector<double> signal;

  double& at(std::size_t lead, std::size_t t) { return signal[lead * T + t]; }
  double at(std::size_t lead, std::size_t t) const { return signal[lead * T + t]; }
  std::size_t num_labels() const { return labels.size(); }
};

// Throws std::invalid_argument on any violated invariant (C >= 1,
// T >= 2*fs, finite samples, binary labels, name/shape agreement).
void validate(const EcgRecord& rec);

// Canonical record container: "BNR1" magic, header with record_id, fs,
// C, T, K, lead names and label names, then row-major little-endian
// float32 samples and a label bit-vector.
void write_record(const EcgRecord& rec, const std::filesystem::path& path);
EcgRecord read_record(const std::filesystem::path& path);

// Dataset manifest: record files grouped per split.
struct DatasetManifest {
  std::vector<std::string> train, val, test;
  std::vector<std::string> label_names;
};

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

std::vector<EcgRecord> read_split(const DatasetManifest& m, const std::string& split,
                                  const std::filesystem::path& base_dir);

}  // namespace beatnet
