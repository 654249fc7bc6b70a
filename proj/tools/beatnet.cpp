// beatnet: synthetic-ECG tokenization and hierarchical-encoder training CLI.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "beatnet/checkpoint.hpp"
#include "beatnet/interpret.hpp"
#include "beatnet/manifest.hpp"
#include "beatnet/record.hpp"
#include "beatnet/signal.hpp"
#include "beatnet/synth.hpp"
#include "beatnet/tokenizer.hpp"
#include "beatnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace beatnet;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_argv(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void emit_manifest(const io::RunManifest& m, const fs::path& dir, const std::string& name) {
  io::write_run_manifest(m, dir / name);
}

DatasetManifest load_dataset(const fs::path& dir) {
  const fs::path p = dir / "dataset.json";
  if (!fs::exists(p))
    throw std::invalid_argument("input directory " + dir.string() + " has no dataset.json");
  return read_manifest(p);
}

std::vector<EcgRecord> load_records(const DatasetManifest& m, const std::string& split,
                                    const fs::path& dir) {
  auto recs = read_split(m, split, dir);
  if (recs.empty()) throw std::invalid_argument("split '" + split + "' is empty");
  return recs;
}

// Shared knobs for every command that trains or evaluates a model.
struct PipelineConfig {
  train::TrainConfig tc;
  tok::TokenizerConfig tok_cfg;
  model::ModelConfig base_model;

  json resolved() const {
    json j;
    j["train"] = {{"lr", tc.lr},
                  {"weight_decay", tc.weight_decay},
                  {"batch_size", tc.batch_size},
                  {"epochs", tc.epochs},
                  {"seed", tc.seed},
                  {"subset_fraction", tc.subset_fraction},
                  {"ablation", tc.ablation},
                  {"tokenization", tc.tokenization},
                  {"threads", tc.threads}};
    j["tokenizer"] = {{"L", tok_cfg.L}, {"S", tok_cfg.S},
                      {"max_time_blocks", tok_cfg.max_time_blocks}};
    j["model"] = {{"D", base_model.D},
                  {"word_blocks", base_model.word_blocks},
                  {"word_channels", base_model.word_channels},
                  {"tx_layers", base_model.tx_layers},
                  {"tx_heads", base_model.tx_heads},
                  {"tx_ff_dim", base_model.tx_ff_dim},
                  {"pool", base_model.pool == model::PoolKind::kCls ? "cls" : "mean"}};
    return j;
  }

  void apply_json(const json& j) {
    if (j.contains("train")) {
      const auto& t = j["train"];
      tc.lr = t.value("lr", tc.lr);
      tc.weight_decay = t.value("weight_decay", tc.weight_decay);
      tc.batch_size = t.value("batch_size", tc.batch_size);
      tc.epochs = t.value("epochs", tc.epochs);
      tc.seed = t.value("seed", tc.seed);
      tc.subset_fraction = t.value("subset_fraction", tc.subset_fraction);
      tc.ablation = t.value("ablation", tc.ablation);
      tc.tokenization = t.value("tokenization", tc.tokenization);
      tc.threads = t.value("threads", tc.threads);
    }
    if (j.contains("tokenizer")) {
      const auto& t = j["tokenizer"];
      tok_cfg.L = t.value("L", tok_cfg.L);
      tok_cfg.S = t.value("S", tok_cfg.S);
      tok_cfg.max_time_blocks = t.value("max_time_blocks", tok_cfg.max_time_blocks);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      base_model.D = m.value("D", base_model.D);
      base_model.word_blocks = m.value("word_blocks", base_model.word_blocks);
      base_model.word_channels = m.value("word_channels", base_model.word_channels);
      base_model.tx_layers = m.value("tx_layers", base_model.tx_layers);
      base_model.tx_heads = m.value("tx_heads", base_model.tx_heads);
      base_model.tx_ff_dim = m.value("tx_ff_dim", base_model.tx_ff_dim);
      if (m.contains("pool"))
        base_model.pool = m["pool"] == "cls" ? model::PoolKind::kCls : model::PoolKind::kMean;
    }
  }

  // Dimensions derived from the data rather than configured.
  model::ModelConfig model_for(const std::vector<EcgRecord>& recs) const {
    model::ModelConfig cfg = base_model;
    cfg.C = recs.front().C;
    cfg.K = recs.front().num_labels();
    cfg.L = tok_cfg.L;
    cfg.S = tok_cfg.S;
    cfg.max_time_blocks = tok_cfg.max_time_blocks;
    return cfg;
  }
};

// Registers the config-file and override flags shared by the training-family
// subcommands. Flags win over the config file: the file is parsed in the
// pre-parse hook, flag values land afterwards.
void add_pipeline_flags(CLI::App* cmd, PipelineConfig& pc, std::string& config_path) {
  // The config file is located and applied in main() before parsing so that
  // explicit flags override file values; this option only documents it.
  cmd->add_option("--config", config_path, "JSON config file");
  cmd->add_option("--lr", pc.tc.lr, "learning rate");
  cmd->add_option("--weight-decay", pc.tc.weight_decay, "decoupled weight decay");
  cmd->add_option("--batch-size", pc.tc.batch_size, "mini-batch size");
  cmd->add_option("--epochs", pc.tc.epochs, "training epochs");
  cmd->add_option("--seed", pc.tc.seed, "root RNG seed");
  cmd->add_option("--subset-fraction", pc.tc.subset_fraction, "labeled-training fraction");
  cmd->add_option("--ablation", pc.tc.ablation,
                  "full | no_spatial | no_temporal | no_spatiotemporal");
  cmd->add_option("--tokenization", pc.tc.tokenization, "qrs | patch");
  cmd->add_option("--threads", pc.tc.threads, "worker thread cap");
  cmd->add_option("--L", pc.tok_cfg.L, "token length in samples");
  cmd->add_option("--S", pc.tok_cfg.S, "tokens per sequence");
  cmd->add_option("--D", pc.base_model.D, "embedding dimension");
  cmd->add_option("--word-blocks", pc.base_model.word_blocks, "word-encoder residual blocks");
  cmd->add_option("--word-channels", pc.base_model.word_channels, "word-encoder channels");
  cmd->add_option("--tx-layers", pc.base_model.tx_layers, "transformer layers");
  cmd->add_option("--tx-heads", pc.base_model.tx_heads, "attention heads");
  cmd->add_option("--tx-ff", pc.base_model.tx_ff_dim, "transformer feed-forward width");
}

// The preparse hook above fires before subcommand options are parsed, but it
// cannot see the --config value yet; pull it out of argv manually first.
std::string scan_config_flag(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
}

std::vector<std::string> report_row(const std::string& tag, const train::EvalReport& rep) {
  std::vector<std::string> row{tag};
  for (double a : rep.per_label_auroc) row.push_back(std::isnan(a) ? "nan" : fmt_double(a));
  row.push_back(fmt_double(rep.macro_auroc));
  row.push_back(fmt_double(rep.loss));
  return row;
}

std::vector<std::string> report_header(const std::vector<std::string>& label_names) {
  std::vector<std::string> h{"tag"};
  for (const auto& n : label_names) h.push_back("auroc_" + n);
  h.push_back("macro_auroc");
  h.push_back("loss");
  return h;
}

// ---- subcommand bodies ----

int run_synth(const synth::SuiteOptions& opts, const fs::path& out_dir,
              const std::string& cmdline) {
  Timer timer;
  fs::create_directories(out_dir);
  auto ds = synth::make_suite(opts);

  DatasetManifest m;
  m.label_names = ds.label_names;
  io::RunManifest run;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const std::string name = ds.records[i].record_id + ".bnr";
    write_record(ds.records[i], out_dir / name);
    run.outputs.push_back(out_dir / name);
  }
  auto name_of = [&](std::size_t i) { return ds.records[i].record_id + ".bnr"; };
  for (auto i : ds.split.train) m.train.push_back(name_of(i));
  for (auto i : ds.split.val) m.val.push_back(name_of(i));
  for (auto i : ds.split.test) m.test.push_back(name_of(i));
  write_manifest(m, out_dir / "dataset.json");
  run.outputs.push_back(out_dir / "dataset.json");

  run.command_line = cmdline;
  run.seed = opts.seed;
  run.resolved_config_json = json{{"n_per_class", opts.n_per_class},
                                  {"seed", opts.seed},
                                  {"bpm", opts.bpm},
                                  {"duration_s", opts.duration_s},
                                  {"fs", opts.fs},
                                  {"noise_std", opts.noise_std},
                                  {"rhythm_only", opts.rhythm_only},
                                  {"planted_lead", opts.planted_lead}}
                                .dump();
  run.wall_clock_s = timer.seconds();
  emit_manifest(run, out_dir, "run_manifest.json");
  std::cerr << "synth: wrote " << ds.records.size() << " records to " << out_dir << "\n";
  return 0;
}

int run_preprocess(const fs::path& in_dir, const fs::path& out_dir,
                   const signal::PreprocessProfile& profile, const std::string& cmdline) {
  Timer timer;
  auto m = load_dataset(in_dir);
  fs::create_directories(out_dir);
  io::RunManifest run;
  run.inputs.push_back(in_dir / "dataset.json");
  std::vector<std::string> warnings;
  std::size_t n = 0;
  for (const auto* split : {&m.train, &m.val, &m.test})
    for (const auto& name : *split) {
      auto rec = read_record(in_dir / name);
      run.inputs.push_back(in_dir / name);
      auto out = signal::preprocess(rec, profile, &warnings);
      write_record(out, out_dir / name);
      run.outputs.push_back(out_dir / name);
      ++n;
    }
  write_manifest(m, out_dir / "dataset.json");
  run.outputs.push_back(out_dir / "dataset.json");
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  run.command_line = cmdline;
  run.resolved_config_json = json{{"target_fs", profile.target_fs},
                                  {"apply_filter", profile.apply_filter},
                                  {"low_hz", profile.filter.low_hz},
                                  {"high_hz", profile.filter.high_hz},
                                  {"order", profile.filter.order},
                                  {"normalize", profile.normalize}}
                                .dump();
  run.wall_clock_s = timer.seconds();
  emit_manifest(run, out_dir, "run_manifest.json");
  std::cerr << "preprocess: " << n << " records -> " << out_dir << "\n";
  return 0;
}

int run_tokenize(const fs::path& in_dir, const fs::path& out_dir, const std::string& mode,
                 const tok::TokenizerConfig& cfg, const std::string& cmdline) {
  if (mode != "qrs" && mode != "patch")
    throw std::invalid_argument("--mode must be qrs or patch, got '" + mode + "'");
  Timer timer;
  auto m = load_dataset(in_dir);
  fs::create_directories(out_dir);
  io::RunManifest run;
  run.inputs.push_back(in_dir / "dataset.json");

  DatasetManifest out_m;
  out_m.label_names = m.label_names;
  std::size_t n = 0;
  auto process = [&](const std::vector<std::string>& names, std::vector<std::string>& out_names) {
    for (const auto& name : names) {
      auto rec = read_record(in_dir / name);
      run.inputs.push_back(in_dir / name);
      std::vector<std::string> warnings;
      tok::TokenSequence seq;
      if (mode == "qrs")
        seq = tok::extract_tokens(rec, tok::detect_r_peaks(rec), cfg, &warnings);
      else
        seq = tok::patch_tokens(rec, cfg);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      const std::string out_name = fs::path(name).stem().string() + ".bnt";
      tok::write_tokens(seq, out_dir / out_name);
      run.outputs.push_back(out_dir / out_name);
      out_names.push_back(out_name);
      ++n;
    }
  };
  process(m.train, out_m.train);
  process(m.val, out_m.val);
  process(m.test, out_m.test);
  write_manifest(out_m, out_dir / "dataset.json");
  run.outputs.push_back(out_dir / "dataset.json");

  run.command_line = cmdline;
  run.resolved_config_json =
      json{{"mode", mode}, {"L", cfg.L}, {"S", cfg.S}, {"max_time_blocks", cfg.max_time_blocks}}
          .dump();
  run.wall_clock_s = timer.seconds();
  emit_manifest(run, out_dir, "run_manifest.json");
  std::cerr << "tokenize: " << n << " records -> " << out_dir << "\n";
  return 0;
}

struct LoadedSplits {
  std::vector<tok::TokenSequence> train, val, test;
  std::vector<std::string> label_names;
  std::vector<EcgRecord> raw_train;  // kept for model dimension inference
};

LoadedSplits load_and_tokenize(const fs::path& in_dir, const PipelineConfig& pc) {
  auto m = load_dataset(in_dir);
  LoadedSplits out;
  out.label_names = m.label_names;
  out.raw_train = load_records(m, "train", in_dir);
  auto val = read_split(m, "val", in_dir);
  auto test = read_split(m, "test", in_dir);
  out.train = train::tokenize_records(out.raw_train, pc.tc.tokenization, pc.tok_cfg);
  out.val = train::tokenize_records(val, pc.tc.tokenization, pc.tok_cfg);
  out.test = train::tokenize_records(test, pc.tc.tokenization, pc.tok_cfg);
  return out;
}

int run_train(const fs::path& in_dir, const fs::path& out_dir, PipelineConfig pc,
              const std::string& cmdline) {
  Timer timer;
  auto data = load_and_tokenize(in_dir, pc);
  fs::create_directories(out_dir);
  auto model_cfg = pc.model_for(data.raw_train);

  auto result = train::train(model_cfg, data.train, data.val, pc.tc);

  io::save_checkpoint(result.best_params, result.model_cfg, out_dir / "model.bnc");
  std::ofstream(out_dir / "history.json") << train::history_to_json(result) << "\n";
  auto rep = train::evaluate(result.best_params, result.model_cfg, data.val, pc.tc.threads);
  write_csv(out_dir / "metrics.csv", report_header(data.label_names),
            {report_row("val", rep)});

  io::RunManifest run;
  run.command_line = cmdline;
  run.seed = pc.tc.seed;
  run.resolved_config_json = pc.resolved().dump();
  run.inputs.push_back(in_dir / "dataset.json");
  run.outputs = {out_dir / "model.bnc", out_dir / "model.bnc.json", out_dir / "history.json",
                 out_dir / "metrics.csv"};
  run.wall_clock_s = timer.seconds();
  emit_manifest(run, out_dir, "run_manifest.json");
  std::cerr << "train: best epoch " << result.best_epoch << ", val macro-AUROC "
            << rep.macro_auroc << "\n";
  return 0;
}

int run_eval(const fs::path& in_dir, const fs::path& ckpt, const fs::path& out_csv,
             const std::string& split, PipelineConfig pc, const std::string& cmdline) {
  Timer timer;
  auto [params, model_cfg] = io::load_checkpoint(ckpt);
  pc.tok_cfg.L = model_cfg.L;
  pc.tok_cfg.S = model_cfg.S;
  pc.tok_cfg.max_time_blocks = model_cfg.max_time_blocks;
  auto m = load_dataset(in_dir);
  auto recs = load_records(m, split, in_dir);
  auto seqs = train::tokenize_records(recs, pc.tc.tokenization, pc.tok_cfg);
  auto rep = train::evaluate(params, model_cfg, seqs, pc.tc.threads);
  write_csv(out_csv, report_header(m.label_names), {report_row(split, rep)});

  io::RunManifest run;
  run.command_line = cmdline;
  run.seed = pc.tc.seed;
  run.resolved_config_json =
      json{{"split", split}, {"tokenization", pc.tc.tokenization}}.dump();
  run.inputs = {in_dir / "dataset.json", ckpt};
  run.outputs = {out_csv};
  run.wall_clock_s = timer.seconds();
  io::write_run_manifest(run, out_csv.string() + ".manifest.json");
  std::cerr << "eval: " << split << " macro-AUROC " << rep.macro_auroc << "\n";
  return 0;
}

int run_ablate(const fs::path& in_dir, const fs::path& out_dir, PipelineConfig pc,
               const std::vector<std::string>& variants, std::size_t n_seeds,
               const std::string& cmdline) {
  Timer timer;
  auto data = load_and_tokenize(in_dir, pc);
  fs::create_directories(out_dir);

  std::vector<std::string> header{"variant"};
  for (std::size_t s = 0; s < n_seeds; ++s) header.push_back("macro_auroc_seed" + std::to_string(s));
  header.push_back("macro_auroc_median");

  std::vector<std::vector<std::string>> rows;
  for (const auto& variant : variants) {
    PipelineConfig vpc = pc;
    vpc.tc.ablation = variant;
    std::vector<double> macros;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      vpc.tc.seed = pc.tc.seed + s;
      auto model_cfg = vpc.model_for(data.raw_train);
      auto result = train::train(model_cfg, data.train, data.val, vpc.tc);
      auto rep = train::evaluate(result.best_params, result.model_cfg, data.val, vpc.tc.threads);
      macros.push_back(rep.macro_auroc);
      std::cerr << "ablate: " << variant << " seed " << vpc.tc.seed << " macro "
                << rep.macro_auroc << "\n";
    }
    auto sorted = macros;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    std::vector<std::string> row{variant};
    for (double v : macros) row.push_back(fmt_double(v));
    row.push_back(fmt_double(median));
    rows.push_back(std::move(row));
  }
  write_csv(out_dir / "ablation.csv", header, rows);

  io::RunManifest run;
  run.command_line = cmdline;
  run.seed = pc.tc.seed;
  auto cfg_json = pc.resolved();
  cfg_json["variants"] = variants;
  cfg_json["n_seeds"] = n_seeds;
  run.resolved_config_json = cfg_json.dump();
  run.inputs = {in_dir / "dataset.json"};
  run.outputs = {out_dir / "ablation.csv"};
  run.wall_clock_s = timer.seconds();
  emit_manifest(run, out_dir, "run_manifest.json");
  return 0;
}

int run_efficiency(const fs::path& in_dir, const fs::path& out_dir, PipelineConfig pc,
                   const std::vector<double>& fractions, const std::string& cmdline) {
  Timer timer;
  auto data = load_and_tokenize(in_dir, pc);
  fs::create_directories(out_dir);

  std::vector<std::vector<std::string>> rows;
  for (double f : fractions) {
    PipelineConfig fpc = pc;
    fpc.tc.subset_fraction = f;
    auto model_cfg = fpc.model_for(data.raw_train);
    auto result = train::train(model_cfg, data.train, data.val, fpc.tc);
    auto rep = train::evaluate(result.best_params, result.model_cfg, data.val, fpc.tc.threads);
    rows.push_back({fmt_double(f), fmt_double(rep.macro_auroc), fmt_double(rep.loss)});
    std::cerr << "efficiency: fraction " << f << " macro " << rep.macro_auroc << "\n";
  }
  write_csv(out_dir / "efficiency.csv", {"fraction", "macro_auroc", "loss"}, rows);

  io::RunManifest run;
  run.command_line = cmdline;
  run.seed = pc.tc.seed;
  auto cfg_json = pc.resolved();
  cfg_json["fractions"] = fractions;
  run.resolved_config_json = cfg_json.dump();
  run.inputs = {in_dir / "dataset.json"};
  run.outputs = {out_dir / "efficiency.csv"};
  run.wall_clock_s = timer.seconds();
  emit_manifest(run, out_dir, "run_manifest.json");
  return 0;
}

int run_attention(const fs::path& in_dir, const fs::path& ckpt, const fs::path& out_dir,
                  const std::string& split, const std::string& group_by, PipelineConfig pc,
                  const std::string& cmdline) {
  Timer timer;
  auto [params, model_cfg] = io::load_checkpoint(ckpt);
  pc.tok_cfg.L = model_cfg.L;
  pc.tok_cfg.S = model_cfg.S;
  pc.tok_cfg.max_time_blocks = model_cfg.max_time_blocks;
  auto m = load_dataset(in_dir);
  auto recs = load_records(m, split, in_dir);
  auto seqs = train::tokenize_records(recs, pc.tc.tokenization, pc.tok_cfg);
  fs::create_directories(out_dir);

  std::vector<interp::AttentionSummary> summaries;
  if (group_by == "task") {
    // one summary per set of positive labels
    std::map<std::string, std::vector<tok::TokenSequence>> groups;
    for (const auto& s : seqs) {
      std::string tag;
      for (std::size_t k = 0; k < s.labels.size(); ++k)
        if (s.labels[k]) tag += (tag.empty() ? "" : "+") + m.label_names[k];
      if (tag.empty()) tag = "unlabeled";
      groups[tag].push_back(s);
    }
    for (const auto& [tag, group] : groups)
      summaries.push_back(interp::summarize(params, model_cfg, group, tag, pc.tc.threads));
  } else if (group_by == "none") {
    summaries.push_back(interp::summarize(params, model_cfg, seqs, "all", pc.tc.threads));
  } else {
    throw std::invalid_argument("--group-by must be task or none, got '" + group_by + "'");
  }
  interp::write_summary_csv(summaries, out_dir / "attention.csv");
  interp::write_summary_json(summaries, out_dir / "attention.json");

  io::RunManifest run;
  run.command_line = cmdline;
  run.resolved_config_json = json{{"split", split},
                                  {"group_by", group_by},
                                  {"tokenization", pc.tc.tokenization}}
                                 .dump();
  run.inputs = {in_dir / "dataset.json", ckpt};
  run.outputs = {out_dir / "attention.csv", out_dir / "attention.json"};
  run.wall_clock_s = timer.seconds();
  emit_manifest(run, out_dir, "run_manifest.json");
  return 0;
}

std::vector<double> parse_fractions(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string piece = csv.substr(pos, comma == std::string::npos ? csv.npos : comma - pos);
    out.push_back(std::stod(piece));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("--fractions: empty list");
  for (double f : out)
    if (!(f > 0.0 && f <= 1.0))
      throw std::invalid_argument("--fractions: values must lie in (0,1], got " + fmt_double(f));
  return out;
}

std::vector<std::string> parse_variants(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    out.push_back(csv.substr(pos, comma == std::string::npos ? csv.npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("--variants: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QRS-aligned ECG tokenization and hierarchical encoder training"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "print code and file-format versions");

  const std::string cmdline = join_argv(argc, argv);
  const std::string config_path_early = scan_config_flag(argc, argv);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled 12-lead suite");
  synth::SuiteOptions sopts;
  std::string suite = "default";
  fs::path synth_out;
  synth_cmd->add_option("--suite", suite, "default | rhythm | planted");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n-per-class", sopts.n_per_class, "records per class combination");
  synth_cmd->add_option("--seed", sopts.seed, "suite seed");
  synth_cmd->add_option("--bpm", sopts.bpm, "heart rate");
  synth_cmd->add_option("--duration", sopts.duration_s, "record length in seconds");
  synth_cmd->add_option("--fs", sopts.fs, "sampling rate");
  synth_cmd->add_option("--noise-std", sopts.noise_std, "additive noise sigma in mV");
  synth_cmd->add_option("--planted-lead", sopts.planted_lead,
                        "restrict the class rhythm to this lead index");

  // preprocess
  auto* prep_cmd = app.add_subcommand("preprocess", "resample, bandpass and normalize records");
  fs::path prep_in, prep_out;
  signal::PreprocessProfile profile;
  std::string band = "0.67:40";
  bool no_filter = false, no_normalize = false;
  prep_cmd->add_option("--in", prep_in, "input record directory")->required();
  prep_cmd->add_option("--out", prep_out, "output directory")->required();
  prep_cmd->add_option("--fs", profile.target_fs, "target sampling rate");
  prep_cmd->add_option("--band", band, "bandpass low:high in Hz");
  prep_cmd->add_option("--order", profile.filter.order, "filter order");
  prep_cmd->add_flag("--no-filter", no_filter, "skip the bandpass stage");
  prep_cmd->add_flag("--no-normalize", no_normalize, "skip min-max normalization");

  // tokenize
  auto* tok_cmd = app.add_subcommand("tokenize", "cut records into heartbeat token sequences");
  fs::path tok_in, tok_out;
  std::string mode = "qrs";
  tok::TokenizerConfig tok_cfg;
  tok_cmd->add_option("--in", tok_in, "input record directory")->required();
  tok_cmd->add_option("--out", tok_out, "output directory")->required();
  tok_cmd->add_option("--mode", mode, "qrs | patch");
  tok_cmd->add_option("--L", tok_cfg.L, "token length in samples");
  tok_cmd->add_option("--S", tok_cfg.S, "tokens per sequence");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the encoder on a record directory");
  fs::path train_in, train_out;
  PipelineConfig train_pc;
  std::string train_config;
  train_cmd->add_option("--in", train_in, "input record directory")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  add_pipeline_flags(train_cmd, train_pc, train_config);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  fs::path eval_in, eval_ckpt, eval_out = "metrics.csv";
  std::string eval_split = "test";
  PipelineConfig eval_pc;
  std::string eval_config;
  eval_cmd->add_option("--in", eval_in, "input record directory")->required();
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--out", eval_out, "metrics CSV path");
  eval_cmd->add_option("--split", eval_split, "train | val | test");
  add_pipeline_flags(eval_cmd, eval_pc, eval_config);

  // ablate
  auto* abl_cmd = app.add_subcommand("ablate", "train encoder variants and compare");
  fs::path abl_in, abl_out;
  PipelineConfig abl_pc;
  std::string abl_config;
  std::string variants_csv = "full,no_spatial,no_temporal,no_st";
  std::size_t abl_seeds = 3;
  abl_cmd->add_option("--in", abl_in, "input record directory")->required();
  abl_cmd->add_option("--out", abl_out, "output directory")->required();
  abl_cmd->add_option("--variants", variants_csv, "comma-separated variant list");
  abl_cmd->add_option("--seeds", abl_seeds, "seeds per variant");
  add_pipeline_flags(abl_cmd, abl_pc, abl_config);

  // efficiency
  auto* eff_cmd = app.add_subcommand("efficiency", "labeled-fraction sweep with nested subsets");
  fs::path eff_in, eff_out;
  PipelineConfig eff_pc;
  std::string eff_config;
  std::string fractions_csv = "0.01,0.05,0.1,0.35,1.0";
  eff_cmd->add_option("--in", eff_in, "input record directory")->required();
  eff_cmd->add_option("--out", eff_out, "output directory")->required();
  eff_cmd->add_option("--fractions", fractions_csv, "comma-separated fractions in (0,1]");
  add_pipeline_flags(eff_cmd, eff_pc, eff_config);

  // attention
  auto* att_cmd = app.add_subcommand("attention", "aggregate attention mass per lead");
  fs::path att_in, att_ckpt, att_out;
  std::string att_split = "test", group_by = "task";
  PipelineConfig att_pc;
  std::string att_config;
  att_cmd->add_option("--in", att_in, "input record directory")->required();
  att_cmd->add_option("--ckpt", att_ckpt, "checkpoint path")->required();
  att_cmd->add_option("--out", att_out, "output directory")->required();
  att_cmd->add_option("--split", att_split, "train | val | test");
  att_cmd->add_option("--group-by", group_by, "task | none");
  add_pipeline_flags(att_cmd, att_pc, att_config);

  // Config files must load before flags so flags win; CLI11's preparse hook
  // runs too late for that, so apply them here.
  if (!config_path_early.empty()) {
    std::ifstream is(config_path_early);
    if (!is) {
      std::cerr << "error: cannot open config file " << config_path_early << "\n";
      return 1;
    }
    try {
      const json j = json::parse(is);
      for (auto* pc : {&train_pc, &eval_pc, &abl_pc, &eff_pc, &att_pc}) pc->apply_json(j);
    } catch (const std::exception& e) {
      std::cerr << "error: bad config file: " << e.what() << "\n";
      return 1;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (show_version) {
    std::cout << "beatnet " << io::kCodeVersion << " (record format v" << io::kRecordFormatVersion
              << ", token format v" << io::kTokenFormatVersion << ", checkpoint format v"
              << io::kCheckpointFormatVersion << ")\n";
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help() << "\n";
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      if (suite == "rhythm") sopts.rhythm_only = true;
      else if (suite == "planted") {
        sopts.rhythm_only = true;
        if (sopts.planted_lead < 0)
          sopts.planted_lead = static_cast<int>(synth::lead_ii_index());
      } else if (suite != "default") {
        throw std::invalid_argument("--suite must be default, rhythm or planted, got '" + suite +
                                    "'");
      }
      return run_synth(sopts, synth_out, cmdline);
    }
    if (prep_cmd->parsed()) {
      const auto colon = band.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("--band must look like low:high, got '" + band + "'");
      profile.filter.low_hz = std::stod(band.substr(0, colon));
      profile.filter.high_hz = std::stod(band.substr(colon + 1));
      profile.apply_filter = !no_filter;
      profile.normalize = !no_normalize;
      return run_preprocess(prep_in, prep_out, profile, cmdline);
    }
    if (tok_cmd->parsed()) return run_tokenize(tok_in, tok_out, mode, tok_cfg, cmdline);
    if (train_cmd->parsed()) return run_train(train_in, train_out, train_pc, cmdline);
    if (eval_cmd->parsed())
      return run_eval(eval_in, eval_ckpt, eval_out, eval_split, eval_pc, cmdline);
    if (abl_cmd->parsed())
      return run_ablate(abl_in, abl_out, abl_pc, parse_variants(variants_csv), abl_seeds, cmdline);
    if (eff_cmd->parsed())
      return run_efficiency(eff_in, eff_out, eff_pc, parse_fractions(fractions_csv), cmdline);
    if (att_cmd->parsed())
      return run_attention(att_in, att_ckpt, att_out, att_split, group_by, att_pc, cmdline);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
