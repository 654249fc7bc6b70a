#include "beatnet/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace beatnet::io {

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("digest: cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string fnv1a64_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_manifest(const RunManifest& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "beatnet-run-manifest-v1";
  j["code_version"] = kCodeVersion;
  j["command_line"] = m.command_line;
  j["seed"] = m.seed;
  j["wall_clock_s"] = m.wall_clock_s;
  if (!m.resolved_config_json.empty())
    j["config"] = nlohmann::json::parse(m.resolved_config_json);
  nlohmann::json in = nlohmann::json::object();
  for (const auto& p : m.inputs) in[p.filename().string()] = fnv1a64_hex(fnv1a64_file(p));
  nlohmann::json out = nlohmann::json::object();
  for (const auto& p : m.outputs) out[p.filename().string()] = fnv1a64_hex(fnv1a64_file(p));
  j["input_digests"] = in;
  j["output_digests"] = out;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_run_manifest: cannot open " + path.string());
  os << j.dump(2) << "\n";
}

}  // namespace beatnet::io
