#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "beatnet/interpret.hpp"

using namespace beatnet;

namespace {

tok::TokenSequence four_token_seq(std::size_t n_valid = 4) {
  tok::TokenSequence seq;
  seq.record_id = "i";
  seq.lead_names = {"A", "B"};
  for (std::size_t i = 0; i < 4; ++i) {
    tok::HeartbeatToken tk;
    tk.waveform.assign(4, 0.0);
    tk.valid = i < n_valid;
    tk.lead_index = static_cast<std::uint16_t>(i % 2);
    tk.temporal_index = static_cast<std::uint16_t>(i / 2);
    seq.tokens.push_back(std::move(tk));
  }
  return seq;
}

model::AttnCapture capture(std::size_t layers, std::size_t heads, std::size_t S) {
  model::AttnCapture a;
  a.layers = layers;
  a.heads = heads;
  a.S = S;
  a.w.assign(layers * heads * S * S, 0.0);
  return a;
}

}  // namespace

TEST_CASE("uniform attention spreads mass evenly over leads") {
  auto seq = four_token_seq();
  auto attn = capture(2, 2, 4);
  for (auto& v : attn.w) v = 0.25;
  auto mass = interp::lead_attention(attn, seq, 2);
  CHECK(mass.size() == 2);
  CHECK(mass[0] == doctest::Approx(0.5));
  CHECK(mass[1] == doctest::Approx(0.5));
}

TEST_CASE("fully concentrated attention gives one lead all the mass") {
  auto seq = four_token_seq();
  auto attn = capture(1, 1, 4);
  // every query attends only to token 1 (lead B)
  for (std::size_t i = 0; i < 4; ++i) attn.w[i * 4 + 1] = 1.0;
  auto mass = interp::lead_attention(attn, seq, 2);
  CHECK(mass[0] == doctest::Approx(0.0));
  CHECK(mass[1] == doctest::Approx(1.0));
}

TEST_CASE("hand-computed two-lead example") {
  auto seq = four_token_seq();
  auto attn = capture(1, 1, 4);
  // one attention matrix, rows are queries
  const double m[4][4] = {{0.4, 0.3, 0.2, 0.1},
                          {0.1, 0.6, 0.2, 0.1},
                          {0.25, 0.25, 0.25, 0.25},
                          {0.0, 0.5, 0.5, 0.0}};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) attn.w[i * 4 + j] = m[i][j];
  // received mass per token = column mean: (0.1875, 0.4125, 0.2875, 0.1125)
  // lead A = tokens 0,2 -> 0.475; lead B = tokens 1,3 -> 0.525
  auto mass = interp::lead_attention(attn, seq, 2);
  CHECK(mass[0] == doctest::Approx(0.475).epsilon(1e-12));
  CHECK(mass[1] == doctest::Approx(0.525).epsilon(1e-12));
}

TEST_CASE("mass is normalized and padding is excluded") {
  auto seq = four_token_seq(3);  // token 3 (lead B) is padding
  auto attn = capture(1, 2, 4);
  // valid queries 0..2 split attention between tokens 1 and 3
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 4; ++i) {
      attn.w[(h * 4 + i) * 4 + 1] = 0.5;
      attn.w[(h * 4 + i) * 4 + 3] = 0.5;
    }
  auto mass = interp::lead_attention(attn, seq, 2);
  // token 3 is dropped, remaining mass renormalizes onto lead B via token 1
  CHECK(mass[0] == doctest::Approx(0.0));
  CHECK(mass[1] == doctest::Approx(1.0));
  CHECK(mass[0] + mass[1] == doctest::Approx(1.0));
}

TEST_CASE("all-padding sequence rejected") {
  auto seq = four_token_seq(0);
  auto attn = capture(1, 1, 4);
  CHECK_THROWS_AS(interp::lead_attention(attn, seq, 2), std::invalid_argument);
}

TEST_CASE("summary csv layout") {
  interp::AttentionSummary s;
  s.task_tag = "rhythm";
  s.lead_names = {"A", "B"};
  s.per_lead_mass = {0.25, 0.75};
  s.n_records = 3;
  const auto path = std::filesystem::temp_directory_path() / "bn_summary_test.csv";
  interp::write_summary_csv({s}, path);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "task_tag,lead_name,mass");
  std::getline(is, line);
  CHECK(line == "rhythm,A,0.25");
  std::getline(is, line);
  CHECK(line == "rhythm,B,0.75");
  std::filesystem::remove(path);
}
