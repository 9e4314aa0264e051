#include "essnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "essnet/errors.hpp"
#include "essnet/rng.hpp"

namespace essnet {

const char* class_name(int id) {
  static constexpr const char* kNames[kClassCount] = {
      "background", "body", "liver", "stomach",
      "left_kidney", "right_kidney", "spleen"};
  return (id >= 0 && id < kClassCount) ? kNames[id] : "unknown";
}

void Image::validate() const {
  if (height <= 0 || width <= 0 ||
      pixels.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError("image buffer does not match " + std::to_string(height) +
                     "x" + std::to_string(width));
  for (float v : pixels)
    if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
      throw DataError("image value outside [-1, 1]: " + std::to_string(v));
}

void LabelMap::validate() const {
  if (height <= 0 || width <= 0 ||
      ids.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError("label buffer does not match " + std::to_string(height) +
                     "x" + std::to_string(width));
  for (auto id : ids)
    if (id >= class_count)
      throw DataError("class ID " + std::to_string(id) + " >= " +
                      std::to_string(class_count));
}

bool Ellipse::contains(double y, double x) const {
  const double dy = y - cy, dx = x - cx;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
}

bool AnatomyLayout::operator==(const AnatomyLayout& o) const {
  if (height != o.height || width != o.width ||
      spleen_scale != o.spleen_scale || !(labels == o.labels))
    return false;
  for (std::size_t i = 0; i < organs.size(); ++i) {
    const auto& a = organs[i];
    const auto& b = o.organs[i];
    if (a.cy != b.cy || a.cx != b.cx || a.ry != b.ry || a.rx != b.rx ||
        a.angle != b.angle)
      return false;
  }
  return true;
}

void validate_image_size(int height, int width) {
  if (height < 32 || width < 32)
    throw ConfigError("image size must be at least 32x32, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  if (height % 4 != 0 || width % 4 != 0)
    throw ConfigError("image size must be divisible by 4, got " +
                      std::to_string(height) + "x" + std::to_string(width));
}

namespace {

// Organ placement in body-relative units: offsets and semi-axes are
// fractions of the body semi-axes; y grows posteriorly, x towards the
// patient's left (image right).
struct OrganTemplate {
  double oy, ox, sy, sx, angle;
};

constexpr OrganTemplate kLiver{-0.10, -0.40, 0.46, 0.40, 0.35};
constexpr OrganTemplate kStomach{-0.38, 0.28, 0.22, 0.26, -0.2};
constexpr OrganTemplate kLeftKidney{0.48, 0.34, 0.20, 0.12, 0.45};
constexpr OrganTemplate kRightKidney{0.48, -0.34, 0.20, 0.12, -0.45};
constexpr OrganTemplate kSpleenBase{0.16, 0.60, 0.24, 0.14, 0.55};

bool inside(const Ellipse& outer, const Ellipse& inner, double margin) {
  const double c = std::cos(inner.angle), s = std::sin(inner.angle);
  for (int i = 0; i < 72; ++i) {
    const double t = 2.0 * std::numbers::pi * i / 72.0;
    const double u = (inner.rx + margin) * std::cos(t);
    const double v = (inner.ry + margin) * std::sin(t);
    const double x = inner.cx + u * c - v * s;
    const double y = inner.cy + u * s + v * c;
    if (!outer.contains(y, x)) return false;
  }
  return true;
}

Ellipse place(const Ellipse& body, const OrganTemplate& t, double scale,
              double jitter, Rng& rng) {
  Ellipse e;
  e.cy = body.cy + body.ry * (t.oy + jitter * rng.uniform(-0.05, 0.05));
  e.cx = body.cx + body.rx * (t.ox + jitter * rng.uniform(-0.05, 0.05));
  e.ry = body.ry * t.sy * scale * (1.0 + jitter * rng.uniform(-0.12, 0.12));
  e.rx = body.rx * t.sx * scale * (1.0 + jitter * rng.uniform(-0.12, 0.12));
  e.angle = t.angle + jitter * rng.uniform(-0.2, 0.2);
  return e;
}

}  // namespace

AnatomyLayout sample_anatomy(std::uint64_t seed, const AnatomyConfig& config) {
  validate_image_size(config.height, config.width);
  if (config.spleen_scale_min < 1.0 ||
      config.spleen_scale_max < config.spleen_scale_min)
    throw ConfigError("spleen scale range must satisfy 1 <= min <= max");

  Rng rng(seed);
  const double h = config.height, w = config.width, j = config.jitter;
  AnatomyLayout layout;
  layout.height = config.height;
  layout.width = config.width;

  Ellipse body;
  body.cy = h / 2.0 + j * rng.uniform(-0.03, 0.03) * h;
  body.cx = w / 2.0 + j * rng.uniform(-0.03, 0.03) * w;
  body.ry = 0.36 * h * (1.0 + j * rng.uniform(-0.08, 0.05));
  body.rx = 0.44 * w * (1.0 + j * rng.uniform(-0.08, 0.05));
  body.angle = j * rng.uniform(-0.08, 0.08);

  layout.spleen_scale =
      rng.uniform(config.spleen_scale_min, config.spleen_scale_max);
  // Enlarged spleens grow anteriorly and medially.
  OrganTemplate spleen = kSpleenBase;
  spleen.oy -= 0.12 * (layout.spleen_scale - 1.0);
  spleen.ox -= 0.06 * (layout.spleen_scale - 1.0);

  const std::array<OrganTemplate, 5> templates{kLiver, kStomach, kLeftKidney,
                                                kRightKidney, spleen};
  layout.organs[0] = body;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const double scale = (i == 4) ? layout.spleen_scale : 1.0;
    Ellipse e = place(body, templates[i], scale, j, rng);
    // Shrink until the organ sits strictly inside the body outline.
    for (int guard = 0; guard < 64 && !inside(body, e, 1.0); ++guard) {
      e.ry *= 0.95;
      e.rx *= 0.95;
      e.cy = body.cy + 0.95 * (e.cy - body.cy);
      e.cx = body.cx + 0.95 * (e.cx - body.cx);
    }
    layout.organs[i + 1] = e;
  }

  layout.labels = LabelMap(config.height, config.width);
  for (int y = 0; y < config.height; ++y)
    for (int x = 0; x < config.width; ++x) {
      std::uint8_t id = 0;
      for (int k = 0; k < kClassCount - 1; ++k)
        if (layout.organs[k].contains(y + 0.5, x + 0.5))
          id = static_cast<std::uint8_t>(k + 1);
      layout.labels.at(y, x) = id;
    }
  return layout;
}

ModalityStyle ModalityStyle::a_like() {
  ModalityStyle s;
  // bg, body, liver, stomach, l-kidney, r-kidney, spleen
  s.class_intensity = {-0.95f, -0.30f, -0.60f, 0.60f, 0.30f, 0.30f, 0.00f};
  s.noise_sigma = 0.04;
  s.bias_amplitude = 0.15;
  s.gamma = 1.0;
  s.modality = Modality::A;
  return s;
}

ModalityStyle ModalityStyle::b_like() {
  ModalityStyle s;
  s.class_intensity = {-0.95f, 0.00f, 0.30f, -0.60f, 0.60f, 0.60f, -0.30f};
  s.noise_sigma = 0.06;
  s.bias_amplitude = 0.0;
  s.gamma = 1.0;
  s.modality = Modality::B;
  return s;
}

Image render_modality(const AnatomyLayout& layout, const ModalityStyle& style,
                      std::uint64_t seed) {
  layout.labels.validate();
  Rng rng(seed);
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<Wave, 3> waves{};
  double amp_sum = 0;
  for (auto& wv : waves) {
    wv.fy = rng.uniform(-1.0, 1.0);
    wv.fx = rng.uniform(-1.0, 1.0);
    wv.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    wv.amp = rng.uniform(0.2, 1.0);
    amp_sum += wv.amp;
  }

  Image img(layout.height, layout.width, style.modality);
  for (int y = 0; y < layout.height; ++y)
    for (int x = 0; x < layout.width; ++x) {
      double v = style.class_intensity[layout.labels.at(y, x)];
      if (style.bias_amplitude != 0.0) {
        double f = 0;
        for (const auto& wv : waves)
          f += wv.amp * std::cos(2.0 * std::numbers::pi *
                                     (wv.fy * y / layout.height +
                                      wv.fx * x / layout.width) +
                                 wv.phase);
        v = (v + 1.0) * (1.0 + style.bias_amplitude * f / amp_sum) - 1.0;
      }
      if (style.noise_sigma != 0.0) v += style.noise_sigma * rng.normal();
      if (style.gamma != 1.0) {
        const double u = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
        v = 2.0 * std::pow(u, style.gamma) - 1.0;
      }
      img.at(y, x) = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  return img;
}

SequesteredSplit::SequesteredSplit(Split split) : split_(std::move(split)) {}

const LabelMap& SequesteredSplit::read_label(std::size_t i) const {
  reads_->fetch_add(1);
  return split_.labels.at(i);
}

namespace {

Split make_split(const DatasetConfig& config, const std::string& name,
                 Modality modality, int count) {
  if (count < 1)
    throw ConfigError("split '" + name + "' needs at least one item");
  const ModalityStyle& style =
      modality == Modality::A ? config.style_a : config.style_b;
  Split s;
  s.name = name;
  s.modality = modality;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t anatomy_seed =
        derive_seed(config.seed, "anatomy/" + name, i);
    const AnatomyLayout layout = sample_anatomy(anatomy_seed, config.anatomy);
    Image img = render_modality(layout, style,
                                derive_seed(config.seed, "render/" + name, i));
    img.modality = modality;
    s.images.push_back(std::move(img));
    s.labels.push_back(layout.labels);
    s.anatomy_seeds.push_back(anatomy_seed);
  }
  return s;
}

}  // namespace

DatasetBundle build_dataset(const DatasetConfig& config) {
  validate_image_size(config.anatomy.height, config.anatomy.width);
  const SplitCounts& c = config.counts;
  DatasetBundle b;
  b.config = config;
  b.a_train = make_split(config, "a_train", Modality::A, c.a_train);
  b.a_val = make_split(config, "a_val", Modality::A, c.a_val);
  b.b_train = SequesteredSplit(
      make_split(config, "b_train", Modality::B, c.b_train));
  b.b_oracle = make_split(config, "b_oracle", Modality::B, c.b_oracle);
  b.b_val = make_split(config, "b_val", Modality::B, c.b_val);
  b.b_test = make_split(config, "b_test", Modality::B, c.b_test);

  std::set<std::uint64_t> seeds;
  std::size_t total = 0;
  auto collect = [&](const std::vector<std::uint64_t>& v) {
    seeds.insert(v.begin(), v.end());
    total += v.size();
  };
  collect(b.a_train.anatomy_seeds);
  collect(b.a_val.anatomy_seeds);
  collect(b.b_train.anatomy_seeds());
  collect(b.b_oracle.anatomy_seeds);
  collect(b.b_val.anatomy_seeds);
  collect(b.b_test.anatomy_seeds);
  if (seeds.size() != total)
    throw DataError("anatomy seed collision across splits");
  return b;
}

namespace {
std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}
}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> unpaired_epoch(
    std::size_t a_count, std::size_t b_count, std::uint64_t seed, int epoch) {
  if (a_count == 0) throw DataError("unpaired_epoch: empty A split");
  Rng rng_a(derive_seed(seed, "epoch/a", static_cast<std::uint64_t>(epoch)));
  Rng rng_b(derive_seed(seed, "epoch/b", static_cast<std::uint64_t>(epoch)));
  const auto pa = shuffled(a_count, rng_a);
  const auto pb = shuffled(b_count, rng_b);
  const std::size_t draws = std::max(a_count, b_count);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(draws);
  for (std::size_t i = 0; i < draws; ++i)
    out.emplace_back(pa[i % a_count], b_count ? pb[i % b_count] : 0);
  return out;
}

Tensor<float> to_tensor(const Image& image) { return to_tensor({&image}); }

Tensor<float> to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) return {};
  const int h = images.front()->height, w = images.front()->width;
  Tensor<float> t(Shape{static_cast<int>(images.size()), 1, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    if (img.height != h || img.width != w)
      throw ShapeError("batch images differ in size");
    std::copy(img.pixels.begin(), img.pixels.end(),
              t.plane(static_cast<int>(n), 0));
  }
  return t;
}

Image to_image(const Tensor<float>& t, int n, Modality modality) {
  const Shape s = t.shape();
  if (s.c != 1) throw ShapeError("to_image expects one channel, got " + s.str());
  Image img(s.h, s.w, modality);
  std::copy(t.plane(n, 0), t.plane(n, 0) + s.plane(), img.pixels.begin());
  return img;
}

std::vector<UnpairedBatch> unpaired_batches(const Split& a,
                                            const std::vector<Image>& b,
                                            std::uint64_t seed, int epoch,
                                            int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (a.size() == 0) throw DataError("unpaired_batches: empty A split");
  const auto draws = unpaired_epoch(a.size(), b.size(), seed, epoch);
  std::vector<UnpairedBatch> out;
  for (std::size_t start = 0; start < draws.size(); start += batch_size) {
    const std::size_t end =
        std::min(draws.size(), start + static_cast<std::size_t>(batch_size));
    UnpairedBatch batch;
    std::vector<const Image*> xs, ys;
    for (std::size_t i = start; i < end; ++i) {
      const auto [ai, bi] = draws[i];
      xs.push_back(&a.images[ai]);
      const auto& lab = a.labels[ai].ids;
      batch.m.insert(batch.m.end(), lab.begin(), lab.end());
      batch.a_index.push_back(ai);
      if (!b.empty()) {
        ys.push_back(&b[bi]);
        batch.b_index.push_back(bi);
      }
    }
    batch.x = to_tensor(xs);
    if (!ys.empty()) batch.y = to_tensor(ys);
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace essnet
