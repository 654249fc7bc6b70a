#pragma once

#include <filesystem>

#include "beatnet/model.hpp"

namespace beatnet::io {

// Name-indexed float64 tensor archive ("BNC1", format version header).
void save_params(const model::ModelParams& params, const std::filesystem::path& path);
std::map<std::string, std::pair<ad::Shape, std::vector<double>>> load_archive(
    const std::filesystem::path& path);

// Checkpoint = archive + version-tagged ModelConfig JSON beside it
// (same path with ".json" appended).
void save_checkpoint(const model::ModelParams& params, const model::ModelConfig& cfg,
                     const std::filesystem::path& path);
std::pair<model::ModelParams, model::ModelConfig> load_checkpoint(
    const std::filesystem::path& path);

std::string config_to_json(const model::ModelConfig& cfg);
model::ModelConfig config_from_json(const std::string& text);

}  // namespace beatnet::io
