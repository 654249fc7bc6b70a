#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "beatnet/model.hpp"

namespace beatnet::interp {

struct AttentionSummary {
  std::vector<double> per_lead_mass;  // length C, nonnegative, sums to 1
  std::vector<std::string> lead_names;
  std::string task_tag;
  std::size_t n_records = 0;
};

// Mean attention received by each valid token over layers, heads and valid
// query positions, summed by the token's lead and renormalized to 1.
std::vector<double> lead_attention(const model::AttnCapture& attn,
                                   const tok::TokenSequence& seq, std::size_t C);

// Record-level masses averaged over the dataset.
AttentionSummary summarize(const model::ModelParams& params, const model::ModelConfig& cfg,
                           const std::vector<tok::TokenSequence>& data,
                           const std::string& task_tag, int threads = 1);

void write_summary_csv(const std::vector<AttentionSummary>& summaries,
                       const std::filesystem::path& path);
void write_summary_json(const std::vector<AttentionSummary>& summaries,
                        const std::filesystem::path& path);

}  // namespace beatnet::interp
