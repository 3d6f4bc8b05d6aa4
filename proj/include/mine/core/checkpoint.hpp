#pragma once

#include <filesystem>
#include <span>

#include "json.hpp"
#include "mine/core/tensor.hpp"

// Directory checkpoint: manifest.json plus weights.bin holding every
// distinct parameter storage once as little-endian f32, row-major, at the
// offsets the manifest declares. Parameters that share a Tensor form an
// alias group; only the group's first name owns a blob.
namespace mine {

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& dir, std::span<const Parameter> params,
                     const nlohmann::json& model_config);

// model_config stored by save_checkpoint; the caller rebuilds the model
// from it before load_checkpoint_values.
nlohmann::json read_checkpoint_config(const std::filesystem::path& dir);

// Fills params from the checkpoint. The manifest's alias groups must match
// the model's sharing exactly. Any mismatch (unknown or missing name, shape,
// blob bounds, digest) raises IntegrityError naming the tensor.
void load_checkpoint_values(const std::filesystem::path& dir, std::span<const Parameter> params);

}  // namespace mine
