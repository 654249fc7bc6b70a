#include "beatnet/interpret.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace beatnet::interp {

std::vector<double> lead_attention(const model::AttnCapture& attn,
                                   const tok::TokenSequence& seq, std::size_t C) {
  const std::size_t S = attn.S;
  if (seq.S() != S) throw std::invalid_argument("lead_attention: sequence/attention size mismatch");
  const auto valid = seq.valid_mask();
  std::size_t n_valid = 0;
  for (auto v : valid) n_valid += v;
  if (n_valid == 0) throw std::invalid_argument("lead_attention: no valid tokens");

  // Mass received per token. With a CLS query the head reads through the
  // CLS attention row, so that row is the relevant distribution; otherwise
  // average over layers, heads and valid query positions.
  std::vector<double> received(S, 0.0);
  if (attn.has_cls) {
    const double norm = static_cast<double>(attn.layers * attn.heads);
    for (std::size_t l = 0; l < attn.layers; ++l)
      for (std::size_t h = 0; h < attn.heads; ++h)
        for (std::size_t j = 0; j < S; ++j)
          received[j] += attn.cls_at(l, h, j) / norm;
  } else {
    const double norm = static_cast<double>(attn.layers * attn.heads * n_valid);
    for (std::size_t l = 0; l < attn.layers; ++l)
      for (std::size_t h = 0; h < attn.heads; ++h)
        for (std::size_t i = 0; i < S; ++i) {
          if (!valid[i]) continue;
          for (std::size_t j = 0; j < S; ++j)
            received[j] += attn.at(l, h, i, j) / norm;
        }
  }

  std::vector<double> mass(C, 0.0);
  for (std::size_t j = 0; j < S; ++j) {
    if (!valid[j]) continue;
    const std::size_t c = seq.tokens[j].lead_index;
    if (c >= C) throw std::invalid_argument("lead_attention: lead index out of range");
    mass[c] += received[j];
  }
  double total = 0;
  for (double m : mass) total += m;
  if (total <= 0) throw std::invalid_argument("lead_attention: zero attention mass");
  for (double& m : mass) m /= total;
  return mass;
}

AttentionSummary summarize(const model::ModelParams& params, const model::ModelConfig& cfg,
                           const std::vector<tok::TokenSequence>& data,
                           const std::string& task_tag, int threads) {
  if (data.empty()) throw std::invalid_argument("summarize: empty dataset");
  std::vector<std::vector<double>> per_record(data.size());
  const std::size_t nshards =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), data.size()));
  std::vector<std::thread> pool;
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto fwd = model::forward(data[i], params, cfg);
      per_record[i] = lead_attention(fwd.attn, data[i], cfg.C);
    }
  };
  if (nshards == 1) {
    work(0, data.size());
  } else {
    for (std::size_t s = 0; s < nshards; ++s)
      pool.emplace_back(work, data.size() * s / nshards, data.size() * (s + 1) / nshards);
    for (auto& t : pool) t.join();
  }

  AttentionSummary out;
  out.task_tag = task_tag;
  out.n_records = data.size();
  out.lead_names = data.front().lead_names;
  out.per_lead_mass.assign(cfg.C, 0.0);
  for (const auto& mass : per_record)
    for (std::size_t c = 0; c < cfg.C; ++c) out.per_lead_mass[c] += mass[c];
  for (double& m : out.per_lead_mass) m /= static_cast<double>(data.size());
  return out;
}

void write_summary_csv(const std::vector<AttentionSummary>& summaries,
                       const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_summary_csv: cannot open " + path.string());
  os << "task_tag,lead_name,mass\n";
  char buf[64];
  for (const auto& s : summaries)
    for (std::size_t c = 0; c < s.per_lead_mass.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.per_lead_mass[c]);
      const std::string name = c < s.lead_names.size() ? s.lead_names[c] : std::to_string(c);
      os << s.task_tag << "," << name << "," << buf << "\n";
    }
}

void write_summary_json(const std::vector<AttentionSummary>& summaries,
                        const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : summaries) {
    nlohmann::json e;
    e["task_tag"] = s.task_tag;
    e["n_records"] = s.n_records;
    e["lead_names"] = s.lead_names;
    e["per_lead_mass"] = s.per_lead_mass;
    j.push_back(e);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_summary_json: cannot open " + path.string());
  os << j.dump(2) << "\n";
}

}  // namespace beatnet::interp
