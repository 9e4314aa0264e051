#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "essnet/networks.hpp"

namespace essnet {

/// Named float32 tensors plus a JSON metadata block.
///
/// On disk: <dir>/manifest.json holds the metadata and, for every tensor,
/// its name, shape and offset into <dir>/tensors.f32 (little-endian float32,
/// concatenated in manifest order).
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  int epoch() const { return meta.value("epoch", 0); }
  const Tensor<float>& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
  /// Roles of the networks stored in this checkpoint.
  std::vector<Role> roles() const;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json to_json(const GeneratorConfig& c);
nlohmann::json to_json(const DiscriminatorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

/// Stores a network's parameters as "<role>/param/<name>" and records its
/// architecture under meta["networks"][role].
void store_network(Checkpoint& ckpt, const Network<float>& net);

/// Rebuilds a network of the given role from a checkpoint.
Network<float> restore_network(const Checkpoint& ckpt, Role role);

}  // namespace essnet
