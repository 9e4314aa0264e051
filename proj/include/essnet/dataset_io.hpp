#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "essnet/data.hpp"

namespace essnet {

// On-disk layout of a split directory:
//   split.json             name, modality, height, width, class count, items
//   <id>/image.f32         row-major little-endian float32
//   <id>/labels.u8         row-major class IDs

void save_split(const std::filesystem::path& dir, const Split& split);
Split load_split(const std::filesystem::path& dir);

void save_sequestered(const std::filesystem::path& dir,
                      const SequesteredSplit& split);
SequesteredSplit load_sequestered(const std::filesystem::path& dir);

/// Writes manifest.json, one directory per split and PNG previews under
/// view/.
void save_dataset(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle load_dataset(const std::filesystem::path& dir);

nlohmann::json to_json(const DatasetConfig& config);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

void write_f32(const std::filesystem::path& path, std::span<const float> data);
std::vector<float> read_f32(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace essnet
