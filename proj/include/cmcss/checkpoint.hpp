#pragma once

#include <filesystem>
#include <string>

#include "cmcss/encoder.hpp"

namespace cmcss {

inline constexpr const char* kCheckpointVersion = "cmcss-ckpt-v1";

// Single JSON document: {version, shape, params: {path: {shape: [r, c], values: [...]}}}
// with row-major values.
std::string checkpoint_to_string(const EncoderParams& params);
EncoderParams checkpoint_from_string(const std::string& text);

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cmcss
