#include "beatnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace beatnet::io {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

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

void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t read_u64(std::istream& is) {
  const std::uint64_t lo = read_u32(is);
  const std::uint64_t hi = read_u32(is);
  return lo | (hi << 32);
}

}  // namespace

void save_params(const model::ModelParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_params: cannot open " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) write_u64(os, d);
    for (double v : t.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      write_u64(os, bits);
    }
  }
  if (!os) throw std::runtime_error("save_params: write failed for " + path.string());
}

std::map<std::string, std::pair<ad::Shape, std::vector<double>>> load_archive(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_archive: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_archive: " + path.string() + " is not a BNC1 archive");
  const std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("load_archive: unsupported format version " + std::to_string(version));
  const std::uint32_t count = read_u32(is);
  std::map<std::string, std::pair<ad::Shape, std::vector<double>>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t nlen = read_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const std::uint32_t ndim = read_u32(is);
    ad::Shape shape(ndim);
    for (auto& d : shape) d = read_u64(is);
    std::vector<double> data(ad::shape_numel(shape));
    for (auto& v : data) {
      std::uint64_t bits = read_u64(is);
      std::memcpy(&v, &bits, 8);
    }
    out.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data)));
  }
  if (!is) throw std::runtime_error("load_archive: truncated file " + path.string());
  return out;
}

std::string config_to_json(const model::ModelConfig& cfg) {
  nlohmann::json j;
  j["format"] = "beatnet-model-config-v1";
  j["D"] = cfg.D;
  j["C"] = cfg.C;
  j["L"] = cfg.L;
  j["S"] = cfg.S;
  j["max_time_blocks"] = cfg.max_time_blocks;
  j["word_blocks"] = cfg.word_blocks;
  j["word_channels"] = cfg.word_channels;
  j["tx_layers"] = cfg.tx_layers;
  j["tx_heads"] = cfg.tx_heads;
  j["tx_ff_dim"] = cfg.tx_ff_dim;
  j["K"] = cfg.K;
  j["use_spatial"] = cfg.use_spatial;
  j["use_temporal"] = cfg.use_temporal;
  j["pool"] = cfg.pool == model::PoolKind::kCls ? "cls" : "mean";
  return j.dump(2);
}

model::ModelConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", std::string()) != "beatnet-model-config-v1")
    throw std::runtime_error("config_from_json: missing or unsupported format tag");
  model::ModelConfig cfg;
  cfg.D = j.value("D", cfg.D);
  cfg.C = j.value("C", cfg.C);
  cfg.L = j.value("L", cfg.L);
  cfg.S = j.value("S", cfg.S);
  cfg.max_time_blocks = j.value("max_time_blocks", cfg.max_time_blocks);
  cfg.word_blocks = j.value("word_blocks", cfg.word_blocks);
  cfg.word_channels = j.value("word_channels", cfg.word_channels);
  cfg.tx_layers = j.value("tx_layers", cfg.tx_layers);
  cfg.tx_heads = j.value("tx_heads", cfg.tx_heads);
  cfg.tx_ff_dim = j.value("tx_ff_dim", cfg.tx_ff_dim);
  cfg.K = j.value("K", cfg.K);
  cfg.use_spatial = j.value("use_spatial", cfg.use_spatial);
  cfg.use_temporal = j.value("use_temporal", cfg.use_temporal);
  cfg.pool = j.value("pool", std::string("mean")) == "cls" ? model::PoolKind::kCls
                                                           : model::PoolKind::kMean;
  model::validate_config(cfg);
  return cfg;
}

void save_checkpoint(const model::ModelParams& params, const model::ModelConfig& cfg,
                     const std::filesystem::path& path) {
  save_params(params, path);
  std::ofstream os(path.string() + ".json");
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string() + ".json");
  os << config_to_json(cfg) << "\n";
}

std::pair<model::ModelParams, model::ModelConfig> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream is(path.string() + ".json");
  if (!is) throw std::runtime_error("load_checkpoint: missing config " + path.string() + ".json");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  model::ModelConfig cfg = config_from_json(text);
  auto archive = load_archive(path);
  model::ModelParams params;
  for (auto& [name, sv] : archive)
    params.tensors.emplace(name, ad::Tensor(sv.first, std::move(sv.second), true));
  return {std::move(params), cfg};
}

}  // namespace beatnet::io
