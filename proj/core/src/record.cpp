#include "beatnet/record.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace beatnet {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'R', '1'};

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

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

float read_f32(std::istream& is) {
  std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void validate(const EcgRecord& rec) {
  if (rec.C < 1) throw std::invalid_argument("record " + rec.record_id + ": C must be >= 1");
  if (rec.fs == 0) throw std::invalid_argument("record " + rec.record_id + ": fs must be positive");
  if (rec.T < 2 * static_cast<std::size_t>(rec.fs))
    throw std::invalid_argument("record " + rec.record_id + ": T=" + std::to_string(rec.T) +
                                " shorter than 2 s at fs=" + std::to_string(rec.fs));
  if (rec.lead_names.size() != rec.C)
    throw std::invalid_argument("record " + rec.record_id + ": lead_names length != C");
  if (rec.label_names.size() != rec.labels.size())
    throw std::invalid_argument("record " + rec.record_id + ": label_names length != K");
  if (rec.signal.size() != rec.C * rec.T)
    throw std::invalid_argument("record " + rec.record_id + ": signal size != C*T");
  for (double v : rec.signal)
    if (!std::isfinite(v))
      throw std::invalid_argument("record " + rec.record_id + ": non-finite sample");
  for (auto y : rec.labels)
    if (y > 1) throw std::invalid_argument("record " + rec.record_id + ": labels must be 0/1");
}

void write_record(const EcgRecord& rec, const std::filesystem::path& path) {
  validate(rec);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_record: cannot open " + path.string());
  os.write(kMagic, 4);
  write_str(os, rec.record_id);
  write_u32(os, rec.fs);
  write_u32(os, static_cast<std::uint32_t>(rec.C));
  write_u32(os, static_cast<std::uint32_t>(rec.T));
  write_u32(os, static_cast<std::uint32_t>(rec.labels.size()));
  for (const auto& s : rec.lead_names) write_str(os, s);
  for (const auto& s : rec.label_names) write_str(os, s);
  for (double v : rec.signal) write_f32(os, static_cast<float>(v));
  const std::size_t K = rec.labels.size();
  std::vector<std::uint8_t> bits((K + 7) / 8, 0);
  for (std::size_t k = 0; k < K; ++k)
    if (rec.labels[k]) bits[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  os.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  if (!os) throw std::runtime_error("write_record: write failed for " + path.string());
}

EcgRecord read_record(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_record: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("read_record: " + path.string() + " is not a BNR1 record");
  EcgRecord rec;
  rec.record_id = read_str(is);
  rec.fs = read_u32(is);
  rec.C = read_u32(is);
  rec.T = read_u32(is);
  const std::size_t K = read_u32(is);
  rec.lead_names.resize(rec.C);
  for (auto& s : rec.lead_names) s = read_str(is);
  rec.label_names.resize(K);
  for (auto& s : rec.label_names) s = read_str(is);
  rec.signal.resize(rec.C * rec.T);
  for (auto& v : rec.signal) v = read_f32(is);
  std::vector<std::uint8_t> bits((K + 7) / 8);
  is.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  if (!is) throw std::runtime_error("read_record: truncated file " + path.string());
  rec.labels.resize(K);
  for (std::size_t k = 0; k < K; ++k)
    rec.labels[k] = (bits[k / 8] >> (k % 8)) & 1u;
  validate(rec);
  return rec;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "beatnet-manifest-v1";
  j["label_names"] = m.label_names;
  j["splits"]["train"] = m.train;
  j["splits"]["val"] = m.val;
  j["splits"]["test"] = m.test;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_manifest: cannot open " + path.string());
  os << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_manifest: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(is);
  DatasetManifest m;
  m.label_names = j.value("label_names", std::vector<std::string>{});
  m.train = j.at("splits").at("train").get<std::vector<std::string>>();
  m.val = j.at("splits").at("val").get<std::vector<std::string>>();
  m.test = j.at("splits").at("test").get<std::vector<std::string>>();
  return m;
}

std::vector<EcgRecord> read_split(const DatasetManifest& m, const std::string& split,
                                  const std::filesystem::path& base_dir) {
  const std::vector<std::string>* files = nullptr;
  if (split == "train") files = &m.train;
  else if (split == "val") files = &m.val;
  else if (split == "test") files = &m.test;
  else throw std::invalid_argument("read_split: unknown split '" + split + "'");
  std::vector<EcgRecord> out;
  out.reserve(files->size());
  for (const auto& f : *files) out.push_back(read_record(base_dir / f));
  return out;
}

}  // namespace beatnet
