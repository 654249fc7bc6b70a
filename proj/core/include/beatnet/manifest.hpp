#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace beatnet::io {

inline constexpr const char* kCodeVersion = "0.1.0";
inline constexpr int kRecordFormatVersion = 1;
inline constexpr int kTokenFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string fnv1a64_hex(std::uint64_t h);

// One manifest per artifact-producing command, written beside its outputs.
struct RunManifest {
  std::string command_line;
  std::string resolved_config_json;  // full resolved config as a JSON string
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  double wall_clock_s = 0.0;
};

void write_run_manifest(const RunManifest& m, const std::filesystem::path& path);

}  // namespace beatnet::io
