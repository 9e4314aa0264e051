#include "essnet/checkpoint.hpp"

#include "essnet/dataset_io.hpp"
#include "essnet/errors.hpp"

namespace essnet {

namespace fs = std::filesystem;
using nlohmann::json;

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw DataError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

std::vector<Role> Checkpoint::roles() const {
  std::vector<Role> out;
  if (meta.contains("networks"))
    for (const auto& [name, spec] : meta.at("networks").items())
      out.push_back(role_from_name(name));
  return out;
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  json index = json::array();
  std::vector<float> blob;
  for (const auto& [name, t] : ckpt.tensors) {
    const Shape s = t.shape();
    index.push_back({{"name", name},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"offset", blob.size()}});
    blob.insert(blob.end(), t.values().begin(), t.values().end());
  }
  json manifest = {{"format", "essnet-checkpoint-1"},
                   {"meta", ckpt.meta},
                   {"tensors", index},
                   {"total_values", blob.size()}};
  write_f32(dir / "tensors.f32", blob);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint manifest in " + dir.string() + ": " +
                    e.what());
  }
  if (manifest.value("format", "") != "essnet-checkpoint-1")
    throw DataError("unrecognised checkpoint format in " + dir.string());
  const std::vector<float> blob = read_f32(dir / "tensors.f32");

  Checkpoint ckpt;
  try {
    ckpt.meta = manifest.at("meta");
    if (manifest.at("total_values").get<std::size_t>() != blob.size())
      throw DataError("checkpoint blob holds " + std::to_string(blob.size()) +
                      " values, manifest expects " +
                      manifest.at("total_values").dump());
    std::size_t expected_offset = 0;
    for (const auto& entry : manifest.at("tensors")) {
      const auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 4)
        throw DataError("checkpoint tensor shape must have 4 dimensions");
      const Shape s{dims[0], dims[1], dims[2], dims[3]};
      const std::size_t off = entry.at("offset").get<std::size_t>();
      if (off != expected_offset || off + s.numel() > blob.size())
        throw DataError("checkpoint manifest/blob mismatch at tensor " +
                        entry.at("name").get<std::string>());
      std::vector<float> vals(blob.begin() + off, blob.begin() + off + s.numel());
      ckpt.tensors.emplace_back(entry.at("name").get<std::string>(),
                                Tensor<float>(s, std::move(vals)));
      expected_offset = off + s.numel();
    }
    if (expected_offset != blob.size())
      throw DataError("checkpoint blob has trailing values");
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  // Validate architecture tags and shapes up front.
  for (Role r : ckpt.roles()) (void)restore_network(ckpt, r);
  return ckpt;
}

json to_json(const GeneratorConfig& c) {
  return {{"width", c.width},
          {"blocks", c.blocks},
          {"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"head", c.head == Head::kTanh ? "tanh" : "softmax"}};
}

json to_json(const DiscriminatorConfig& c) {
  return {{"width", c.width}, {"layers", c.layers}, {"in_channels", c.in_channels}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.width = j.at("width").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  const std::string head = j.at("head").get<std::string>();
  if (head != "tanh" && head != "softmax")
    throw DataError("unknown output head '" + head + "'");
  c.head = head == "tanh" ? Head::kTanh : Head::kSoftmax;
  return c;
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig c;
  c.width = j.at("width").get<int>();
  c.layers = j.at("layers").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  return c;
}

void store_network(Checkpoint& ckpt, const Network<float>& net) {
  const std::string role = role_name(net.role());
  json spec;
  if (net.kind() == NetKind::kGenerator)
    spec = {{"kind", "generator"}, {"config", to_json(net.generator_config())}};
  else
    spec = {{"kind", "discriminator"},
            {"config", to_json(net.discriminator_config())}};
  ckpt.meta["networks"][role] = spec;
  for (const auto& [name, v] : net.parameters())
    ckpt.tensors.emplace_back(role + "/param/" + name, v->value);
}

Network<float> restore_network(const Checkpoint& ckpt, Role role) {
  const std::string tag = role_name(role);
  if (!ckpt.meta.contains("networks") || !ckpt.meta["networks"].contains(tag))
    throw DataError(std::string("checkpoint has no network ") + tag);
  Network<float> net;
  try {
    const json& spec = ckpt.meta["networks"][tag];
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "generator")
      net = build_generator<float>(generator_config_from_json(spec.at("config")),
                                   0, role);
    else if (kind == "discriminator")
      net = build_discriminator<float>(
          discriminator_config_from_json(spec.at("config")), 0, role);
    else
      throw DataError("unknown architecture tag '" + kind + "'");
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt network spec: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid network spec: ") + e.what());
  }
  for (const auto& [name, v] : net.parameters()) {
    const Tensor<float>& t = ckpt.tensor(tag + "/param/" + name);
    if (t.shape() != v->value.shape())
      throw DataError("checkpoint tensor " + tag + "/param/" + name +
                      " has shape " + t.shape().str() + ", architecture expects " +
                      v->value.shape().str());
    v->value = t;
  }
  return net;
}

}  // namespace essnet
