#include "essnet/dataset_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "essnet/errors.hpp"
#include "essnet/png_export.hpp"

namespace essnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const char* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string item_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("corrupt manifest " + path.string() + ": " + e.what());
  }
}

void save_items(const fs::path& dir, const Split& split, bool sequestered) {
  fs::create_directories(dir);
  json items = json::array();
  for (std::size_t i = 0; i < split.size(); ++i) {
    const std::string id = item_id(i);
    write_f32(dir / id / "image.f32", split.images[i].pixels);
    const auto& ids = split.labels[i].ids;
    write_bytes(dir / id / "labels.u8",
                reinterpret_cast<const char*>(ids.data()), ids.size());
    items.push_back({{"id", id}, {"anatomy_seed", split.anatomy_seeds[i]}});
  }
  const int h = split.size() ? split.images[0].height : 0;
  const int w = split.size() ? split.images[0].width : 0;
  json manifest = {{"name", split.name},
                   {"modality", modality_name(split.modality)},
                   {"height", h},
                   {"width", w},
                   {"class_count", kClassCount},
                   {"count", split.size()},
                   {"sequestered", sequestered},
                   {"items", items}};
  write_text(dir / "split.json", manifest.dump(2) + "\n");
}

Split load_items(const fs::path& dir, bool& sequestered) {
  const json m = parse_json_file(dir / "split.json");
  Split s;
  try {
    s.name = m.at("name").get<std::string>();
    const std::string mod = m.at("modality").get<std::string>();
    if (mod != "A" && mod != "B") throw DataError("unknown modality " + mod);
    s.modality = mod == "A" ? Modality::A : Modality::B;
    const int h = m.at("height").get<int>();
    const int w = m.at("width").get<int>();
    const int classes = m.at("class_count").get<int>();
    sequestered = m.value("sequestered", false);
    const auto& items = m.at("items");
    if (items.size() != m.at("count").get<std::size_t>())
      throw DataError("split.json count does not match item list");
    for (const auto& item : items) {
      const std::string id = item.at("id").get<std::string>();
      Image img(h, w, s.modality);
      img.pixels = read_f32(dir / id / "image.f32");
      if (img.pixels.size() != static_cast<std::size_t>(h) * w)
        throw ShapeError("shape mismatch: " + (dir / id / "image.f32").string() +
                         " holds " + std::to_string(img.pixels.size()) +
                         " values, expected " + std::to_string(h * w));
      img.validate();
      const auto bytes = read_bytes(dir / id / "labels.u8");
      if (bytes.size() != static_cast<std::size_t>(h) * w)
        throw ShapeError("shape mismatch: " + (dir / id / "labels.u8").string() +
                         " holds " + std::to_string(bytes.size()) +
                         " labels, expected " + std::to_string(h * w));
      LabelMap lab(h, w, classes);
      std::memcpy(lab.ids.data(), bytes.data(), bytes.size());
      lab.validate();
      s.images.push_back(std::move(img));
      s.labels.push_back(std::move(lab));
      s.anatomy_seeds.push_back(item.at("anatomy_seed").get<std::uint64_t>());
    }
  } catch (const json::exception& e) {
    throw DataError("corrupt manifest " + (dir / "split.json").string() + ": " +
                    e.what());
  }
  return s;
}

}  // namespace

void write_f32(const fs::path& path, std::span<const float> data) {
  std::vector<char> buf(data.size() * 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b)
      buf[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  write_bytes(path, buf.data(), buf.size());
}

std::vector<float> read_f32(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() % 4 != 0)
    throw ShapeError("shape mismatch: " + path.string() +
                     " is not a whole number of float32 values");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(
                  static_cast<unsigned char>(bytes[i * 4 + b]))
              << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void save_split(const fs::path& dir, const Split& split) {
  save_items(dir, split, false);
}

Split load_split(const fs::path& dir) {
  bool sequestered = false;
  Split s = load_items(dir, sequestered);
  if (sequestered)
    throw DataError("split " + dir.string() +
                    " is sequestered; load it with load_sequestered");
  return s;
}

void save_sequestered(const fs::path& dir, const SequesteredSplit& split) {
  // Persisting is not a read by training code, so the audit counter is
  // bypassed here.
  save_items(dir, split.split_, true);
}

SequesteredSplit load_sequestered(const fs::path& dir) {
  bool sequestered = false;
  Split s = load_items(dir, sequestered);
  if (!sequestered)
    throw DataError("split " + dir.string() + " is not marked sequestered");
  return SequesteredSplit(std::move(s));
}

namespace {
json style_json(const ModalityStyle& s) {
  return {{"class_intensity", s.class_intensity},
          {"noise_sigma", s.noise_sigma},
          {"bias_amplitude", s.bias_amplitude},
          {"gamma", s.gamma},
          {"modality", modality_name(s.modality)}};
}
ModalityStyle style_from(const json& j) {
  ModalityStyle s;
  s.class_intensity = j.at("class_intensity").get<std::array<float, kClassCount>>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.bias_amplitude = j.at("bias_amplitude").get<double>();
  s.gamma = j.at("gamma").get<double>();
  s.modality = j.at("modality").get<std::string>() == "A" ? Modality::A
                                                          : Modality::B;
  return s;
}
}  // namespace

json to_json(const DatasetConfig& c) {
  const auto& n = c.counts;
  return {{"seed", c.seed},
          {"height", c.anatomy.height},
          {"width", c.anatomy.width},
          {"spleen_scale_min", c.anatomy.spleen_scale_min},
          {"spleen_scale_max", c.anatomy.spleen_scale_max},
          {"jitter", c.anatomy.jitter},
          {"counts",
           {{"a_train", n.a_train},
            {"a_val", n.a_val},
            {"b_train", n.b_train},
            {"b_oracle", n.b_oracle},
            {"b_val", n.b_val},
            {"b_test", n.b_test}}},
          {"style_a", style_json(c.style_a)},
          {"style_b", style_json(c.style_b)}};
}

DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.anatomy.height = j.at("height").get<int>();
    c.anatomy.width = j.at("width").get<int>();
    c.anatomy.spleen_scale_min = j.at("spleen_scale_min").get<double>();
    c.anatomy.spleen_scale_max = j.at("spleen_scale_max").get<double>();
    c.anatomy.jitter = j.at("jitter").get<double>();
    const auto& n = j.at("counts");
    c.counts.a_train = n.at("a_train").get<int>();
    c.counts.a_val = n.at("a_val").get<int>();
    c.counts.b_train = n.at("b_train").get<int>();
    c.counts.b_oracle = n.at("b_oracle").get<int>();
    c.counts.b_val = n.at("b_val").get<int>();
    c.counts.b_test = n.at("b_test").get<int>();
    c.style_a = style_from(j.at("style_a"));
    c.style_b = style_from(j.at("style_b"));
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt dataset manifest: ") + e.what());
  }
  return c;
}

void save_dataset(const fs::path& dir, const DatasetBundle& b) {
  fs::create_directories(dir);
  const std::vector<const Split*> labeled{&b.a_train, &b.a_val, &b.b_oracle,
                                          &b.b_val, &b.b_test};
  json splits = json::object();
  for (const Split* s : labeled) {
    save_split(dir / s->name, *s);
    splits[s->name] = {{"count", s->size()}, {"sequestered", false}};
    for (std::size_t i = 0; i < s->size(); ++i)
      export_png(s->images[i], dir / "view" / (s->name + "_" + item_id(i) + ".png"));
  }
  save_sequestered(dir / b.b_train.name(), b.b_train);
  splits[b.b_train.name()] = {{"count", b.b_train.size()}, {"sequestered", true}};
  for (std::size_t i = 0; i < b.b_train.size(); ++i)
    export_png(b.b_train.images()[i],
               dir / "view" / (b.b_train.name() + "_" + item_id(i) + ".png"));

  json manifest = {{"format", "essnet-dataset-1"},
                   {"config", to_json(b.config)},
                   {"splits", splits}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetBundle load_dataset(const fs::path& dir) {
  const json m = parse_json_file(dir / "manifest.json");
  if (m.value("format", "") != "essnet-dataset-1")
    throw DataError("unrecognised dataset manifest in " + dir.string());
  DatasetBundle b;
  b.config = dataset_config_from_json(m.at("config"));
  b.a_train = load_split(dir / "a_train");
  b.a_val = load_split(dir / "a_val");
  b.b_train = load_sequestered(dir / "b_train");
  b.b_oracle = load_split(dir / "b_oracle");
  b.b_val = load_split(dir / "b_val");
  b.b_test = load_split(dir / "b_test");
  const auto& counts = m.at("splits");
  auto check = [&](const std::string& name, std::size_t actual) {
    if (counts.at(name).at("count").get<std::size_t>() != actual)
      throw DataError("manifest count mismatch for split " + name);
  };
  check("a_train", b.a_train.size());
  check("a_val", b.a_val.size());
  check("b_train", b.b_train.size());
  check("b_oracle", b.b_oracle.size());
  check("b_val", b.b_val.size());
  check("b_test", b.b_test.size());
  return b;
}

}  // namespace essnet
