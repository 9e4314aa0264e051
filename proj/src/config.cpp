#include "essnet/config.hpp"

#include <functional>

#include "essnet/dataset_io.hpp"
#include "essnet/errors.hpp"

namespace essnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { kInt, kUInt, kNumber, kString, kBool };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::kInt: return "integer";
    case Kind::kUInt: return "non-negative integer";
    case Kind::kNumber: return "number";
    case Kind::kString: return "string";
    case Kind::kBool: return "boolean";
  }
  return "?";
}

const char* json_type(const json& j) { return j.type_name(); }

bool matches(Kind k, const json& j) {
  switch (k) {
    case Kind::kInt: return j.is_number_integer();
    case Kind::kUInt: return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0);
    case Kind::kNumber: return j.is_number();
    case Kind::kString: return j.is_string();
    case Kind::kBool: return j.is_boolean();
  }
  return false;
}

struct Field {
  const char* key;
  Kind kind;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename M>
Field int_field(const char* key, M member) {
  return {key, Kind::kInt, [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const json& j) { member(c) = j.get<int>(); }};
}

template <typename M>
Field num_field(const char* key, M member) {
  return {key, Kind::kNumber, [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const json& j) { member(c) = j.get<double>(); }};
}

template <typename M>
Field bool_field(const char* key, M member) {
  return {key, Kind::kBool, [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c))); },
          [member](RunConfig& c, const json& j) { member(c) = j.get<bool>(); }};
}

template <typename M>
Field path_field(const char* key, M member) {
  return {key, Kind::kString,
          [member](const RunConfig& c) { return json(member(const_cast<RunConfig&>(c)).string()); },
          [member](RunConfig& c, const json& j) { member(c) = j.get<std::string>(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"preset", Kind::kString, [](const RunConfig& c) { return json(c.preset); },
                 [](RunConfig& c, const json& j) { c.preset = j.get<std::string>(); }});
    f.push_back({"seed", Kind::kUInt, [](const RunConfig& c) { return json(c.seed); },
                 [](RunConfig& c, const json& j) { c.seed = j.get<std::uint64_t>(); }});
    f.push_back(path_field("out_dir", [](RunConfig& c) -> fs::path& { return c.out_dir; }));
    f.push_back(path_field("dataset_dir", [](RunConfig& c) -> fs::path& { return c.dataset_dir; }));
    f.push_back(path_field("checkpoint", [](RunConfig& c) -> fs::path& { return c.checkpoint; }));
    f.push_back(path_field("synthesis_checkpoint",
                           [](RunConfig& c) -> fs::path& { return c.train.synthesis_checkpoint; }));
    // data
    f.push_back(int_field("image_height", [](RunConfig& c) -> int& { return c.data.anatomy.height; }));
    f.push_back(int_field("image_width", [](RunConfig& c) -> int& { return c.data.anatomy.width; }));
    f.push_back(num_field("spleen_scale_min",
                          [](RunConfig& c) -> double& { return c.data.anatomy.spleen_scale_min; }));
    f.push_back(num_field("spleen_scale_max",
                          [](RunConfig& c) -> double& { return c.data.anatomy.spleen_scale_max; }));
    f.push_back(num_field("anatomy_jitter", [](RunConfig& c) -> double& { return c.data.anatomy.jitter; }));
    f.push_back(int_field("n_a_train", [](RunConfig& c) -> int& { return c.data.counts.a_train; }));
    f.push_back(int_field("n_a_val", [](RunConfig& c) -> int& { return c.data.counts.a_val; }));
    f.push_back(int_field("n_b_train", [](RunConfig& c) -> int& { return c.data.counts.b_train; }));
    f.push_back(int_field("n_b_oracle", [](RunConfig& c) -> int& { return c.data.counts.b_oracle; }));
    f.push_back(int_field("n_b_val", [](RunConfig& c) -> int& { return c.data.counts.b_val; }));
    f.push_back(int_field("n_b_test", [](RunConfig& c) -> int& { return c.data.counts.b_test; }));
    // networks
    f.push_back(int_field("gen_width", [](RunConfig& c) -> int& { return c.train.generator.width; }));
    f.push_back(int_field("gen_blocks", [](RunConfig& c) -> int& { return c.train.generator.blocks; }));
    f.push_back(int_field("disc_width", [](RunConfig& c) -> int& { return c.train.discriminator.width; }));
    f.push_back(int_field("disc_layers", [](RunConfig& c) -> int& { return c.train.discriminator.layers; }));
    // training
    f.push_back({"mode", Kind::kString,
                 [](const RunConfig& c) { return json(train_mode_name(c.train.mode)); },
                 [](RunConfig& c, const json& j) { c.train.mode = train_mode_from_name(j.get<std::string>()); }});
    f.push_back(int_field("epochs", [](RunConfig& c) -> int& { return c.train.epochs; }));
    f.push_back(int_field("batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; }));
    f.push_back(num_field("lr_g", [](RunConfig& c) -> double& { return c.train.lr_g; }));
    f.push_back(num_field("lr_d", [](RunConfig& c) -> double& { return c.train.lr_d; }));
    f.push_back(num_field("beta1", [](RunConfig& c) -> double& { return c.train.beta1; }));
    f.push_back(num_field("beta2", [](RunConfig& c) -> double& { return c.train.beta2; }));
    f.push_back(int_field("pool_size", [](RunConfig& c) -> int& { return c.train.pool_size; }));
    f.push_back(num_field("lambda_1", [](RunConfig& c) -> double& { return c.train.weights.gan_ab; }));
    f.push_back(num_field("lambda_2", [](RunConfig& c) -> double& { return c.train.weights.gan_ba; }));
    f.push_back(num_field("lambda_3", [](RunConfig& c) -> double& { return c.train.weights.cycle_a; }));
    f.push_back(num_field("lambda_4", [](RunConfig& c) -> double& { return c.train.weights.cycle_b; }));
    f.push_back(num_field("lambda_5", [](RunConfig& c) -> double& { return c.train.weights.seg; }));
    f.push_back({"gan_mode", Kind::kString,
                 [](const RunConfig& c) { return json(gan_mode_name(c.train.loss.gan_mode)); },
                 [](RunConfig& c, const json& j) { c.train.loss.gan_mode = gan_mode_from_name(j.get<std::string>()); }});
    f.push_back({"seg_reduction", Kind::kString,
                 [](const RunConfig& c) {
                   return json(c.train.loss.seg_reduction == SegReduction::kMean ? "mean" : "sum");
                 },
                 [](RunConfig& c, const json& j) {
                   const std::string v = j.get<std::string>();
                   if (v != "mean" && v != "sum")
                     throw ConfigError("config key 'seg_reduction': expected mean or sum, got '" + v + "'");
                   c.train.loss.seg_reduction = v == "mean" ? SegReduction::kMean : SegReduction::kSum;
                 }});
    f.push_back({"seg_only_modality", Kind::kString,
                 [](const RunConfig& c) { return json(modality_name(c.train.seg_only_modality)); },
                 [](RunConfig& c, const json& j) {
                   const std::string v = j.get<std::string>();
                   if (v != "A" && v != "B")
                     throw ConfigError("config key 'seg_only_modality': expected A or B, got '" + v + "'");
                   c.train.seg_only_modality = v == "A" ? Modality::A : Modality::B;
                 }});
    f.push_back(bool_field("paper_protocol", [](RunConfig& c) -> bool& { return c.train.paper_protocol; }));
    f.push_back(bool_field("keep_all_checkpoints",
                           [](RunConfig& c) -> bool& { return c.train.keep_all_checkpoints; }));
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::finalize() {
  if (preset != "desk" && preset != "paper-parity")
    throw ConfigError("config key 'preset': unknown preset '" + preset + "'");
  data.seed = seed;
  train.seed = seed;
  train.out_dir = out_dir;
  validate_image_size(data.anatomy.height, data.anatomy.width);
  if (!(data.anatomy.spleen_scale_min > 0) ||
      !(data.anatomy.spleen_scale_max >= data.anatomy.spleen_scale_min))
    throw ConfigError("config keys 'spleen_scale_min'/'spleen_scale_max': need 0 < min <= max");
  if (!(data.anatomy.jitter >= 0)) throw ConfigError("config key 'anatomy_jitter': must be >= 0");
  const auto& n = data.counts;
  for (auto [key, v] : {std::pair{"n_a_train", n.a_train}, {"n_a_val", n.a_val},
                        {"n_b_train", n.b_train}, {"n_b_oracle", n.b_oracle},
                        {"n_b_val", n.b_val}, {"n_b_test", n.b_test}})
    if (v < 0) throw ConfigError(std::string("config key '") + key + "': must be >= 0");
  if (n.a_train < 1 || n.b_test < 1)
    throw ConfigError("config keys 'n_a_train'/'n_b_test': must be >= 1");
  train.validate();
}

fs::path RunConfig::resolved_dataset_dir() const {
  return dataset_dir.empty() ? out_dir / "data" : dataset_dir;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.train.epochs = 30;
  if (name == "desk") return c;
  if (name == "paper-parity") {
    c.data.anatomy.height = c.data.anatomy.width = 256;
    c.train.generator = GeneratorConfig::paper_parity();
    c.train.discriminator = DiscriminatorConfig::paper_parity();
    c.train.epochs = 100;
    return c;
  }
  throw ConfigError("config key 'preset': unknown preset '" + name + "'");
}

json to_flat_json(const RunConfig& config) {
  json out = json::object();
  for (const auto& f : fields()) out[f.key] = f.get(config);
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void apply_flat_json(RunConfig& config, const json& flat, const std::string& origin) {
  if (!flat.is_object())
    throw ConfigError(origin + ": expected a flat JSON object, got " + json_type(flat));
  for (const auto& [key, value] : flat.items()) {
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (key == f.key) field = &f;
    if (!field) throw ConfigError(origin + ": unknown config key '" + key + "'");
    if (!matches(field->kind, value))
      throw ConfigError(origin + ": config key '" + key + "': expected " +
                        kind_name(field->kind) + ", got " + json_type(value));
    try {
      field->set(config, value);
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      if (what.find("'" + key + "'") != std::string::npos) throw;
      throw ConfigError(origin + ": config key '" + key + "': " + what);
    } catch (const json::exception& e) {
      throw ConfigError(origin + ": config key '" + key + "': " + e.what());
    }
  }
}

RunConfig resolve_config(const std::optional<fs::path>& file, const json& overrides) {
  json from_file = json::object();
  if (file) {
    std::string text;
    try {
      text = read_text(*file);
    } catch (const IoError&) {
      throw ConfigError("config file not found: " + file->string());
    }
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        from_file = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ConfigError(file->string() + ": invalid JSON: " + e.what());
      }
    }
    if (!from_file.is_object())
      throw ConfigError(file->string() + ": expected a flat JSON object");
  }
  std::string preset = "desk";
  for (const json* src : {static_cast<const json*>(&from_file), &overrides})
    if (src->contains("preset")) {
      if (!(*src)["preset"].is_string())
        throw ConfigError("config key 'preset': expected string, got " +
                          std::string(json_type((*src)["preset"])));
      preset = (*src)["preset"].get<std::string>();
    }
  RunConfig config = preset_config(preset);
  apply_flat_json(config, from_file, file ? file->string() : "config");
  apply_flat_json(config, overrides, "flags");
  config.finalize();
  return config;
}

void write_resolved(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create " + config.out_dir.string() + ": " + ec.message());
  write_text(config.out_dir / "resolved.json", to_flat_json(config).dump(2) + "\n");
}

RunConfig load_resolved(const fs::path& path) {
  return resolve_config(path, json::object());
}

}  // namespace essnet
