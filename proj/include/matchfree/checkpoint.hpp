#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "matchfree/mlp.hpp"

namespace matchfree {

inline constexpr const char* kCheckpointFormat = "matchfree-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// {"shape": [rows, cols], "data": [...]} per tensor, keyed by name.
nlohmann::json tensors_to_json(std::span<const TensorRef> tensors);

// Copies every named tensor from `j` into `dest`. Every destination tensor
// must be present with a matching element count.
void tensors_from_json(const nlohmann::json& j, std::span<const TensorRef> dest);

// Versioned document: {"format", "version", "tensors", "meta"}.
nlohmann::json make_checkpoint(std::span<const TensorRef> tensors, nlohmann::json meta = nlohmann::json::object());
// Validates the header and returns the "tensors" object.
const nlohmann::json& checkpoint_tensors(const nlohmann::json& doc);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc, int indent = -1);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace matchfree
