#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "essnet/data.hpp"
#include "essnet/trainer.hpp"

namespace essnet {

/// Everything a subcommand needs, resolvable from one flat JSON object.
struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";
  std::filesystem::path dataset_dir;  // empty: <out_dir>/data
  std::filesystem::path checkpoint;   // translate / segment / evaluate
  DatasetConfig data;
  TrainConfig train;

  /// Copies the master seed into the data and trainer configs and checks
  /// every section. Throws ConfigError.
  void finalize();
  std::filesystem::path resolved_dataset_dir() const;
};

/// "desk" (64x64, w=16, N=3) or "paper-parity" (256x256, w=64, N=9).
RunConfig preset_config(const std::string& name);

/// Flat key -> value view of a config.
nlohmann::json to_flat_json(const RunConfig& config);

/// Applies the keys of a flat JSON object. Unknown keys and type mismatches
/// throw ConfigError naming the key.
void apply_flat_json(RunConfig& config, const nlohmann::json& flat,
                     const std::string& origin = "config");

/// All recognised keys, in schema order.
std::vector<std::string> config_keys();

/// preset < file < overrides. The preset comes from the overrides, else the
/// file, else "desk".
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const nlohmann::json& overrides);

/// Writes <out_dir>/resolved.json.
void write_resolved(const RunConfig& config);

/// Reads a resolved.json (or any flat config) back.
RunConfig load_resolved(const std::filesystem::path& path);

}  // namespace essnet
