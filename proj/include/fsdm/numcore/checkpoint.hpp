#pragma once

// On-disk parameter store: <dir>/manifest.json describes every tensor (name,
// shape, dtype, byte offset) and <dir>/tensors.bin holds the raw
// little-endian values back to back.

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "fsdm/numcore/adam.hpp"

namespace fsdm::numcore {

inline constexpr const char* kCheckpointVersion = "fsdm-ckpt-1";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

// `metadata` is stored under the manifest's "metadata" key.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, std::span<const NamedTensor<T>> tensors,
                     const nlohmann::json& metadata);

nlohmann::json read_manifest(const std::filesystem::path& dir);

// Loads values into `tensors`. Names, order and shapes must match the
// manifest exactly; anything else is a CheckpointError. f32 and f64 blobs load
// into either precision.
template <typename T>
nlohmann::json load_checkpoint(const std::filesystem::path& dir, std::span<const NamedTensor<T>> tensors);

}  // namespace fsdm::numcore
