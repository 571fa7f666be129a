#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cmcss/run_config.hpp"

namespace cmcss {

// Command drivers behind the cmcss executable. Each writes
// resolved_config.json into the directory it produces and returns the
// paths of the files it wrote.

std::vector<std::filesystem::path> cmd_gen_data(const RunConfig& config);
std::vector<std::filesystem::path> cmd_pretrain(const RunConfig& config);
std::vector<std::filesystem::path> cmd_finetune(const RunConfig& config);
std::vector<std::filesystem::path> cmd_evaluate(const RunConfig& config);
// which: lambda | losses | modality_drop | modality_only | baseline
std::vector<std::filesystem::path> cmd_ablate(const RunConfig& config, const std::string& which);
std::vector<std::filesystem::path> cmd_export_embeddings(const RunConfig& config);

// {"error": {"kind": ..., "message": ..., "issues": [...]}}
std::string error_json(const std::exception& e);

}  // namespace cmcss
