#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "essnet/data.hpp"
#include "essnet/dataset_io.hpp"
#include "essnet/errors.hpp"
#include "essnet/png_export.hpp"
#include "essnet/rng.hpp"

using namespace essnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("essnet-test-data-" + name);
  fs::remove_all(p);
  return p;
}

DatasetConfig small_config(std::uint64_t seed = 3) {
  DatasetConfig c;
  c.anatomy.height = c.anatomy.width = 32;
  c.counts = {4, 2, 3, 3, 2, 3};
  c.seed = seed;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Concatenated bytes of every file under a directory, in path order.
std::string tree_bytes(const fs::path& root) {
  std::set<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
  std::string out;
  for (const auto& f : files) out += f.string() + "\n" + slurp(root / f);
  return out;
}

}  // namespace

TEST_CASE("rng is reproducible and derive_seed separates tags") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
  CHECK(derive_seed(1, "x", 0) != derive_seed(1, "x", 1));
  CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
  Rng c(9);
  (void)c.normal();
  const std::string st = c.state();
  const double next = c.uniform();
  Rng d;
  d.set_state(st);
  CHECK(d.uniform() == next);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(c.below(7) < 7u);
  }
}

TEST_CASE("sample_anatomy is deterministic per seed") {
  const AnatomyConfig cfg;
  CHECK(sample_anatomy(7, cfg) == sample_anatomy(7, cfg));
  CHECK(sample_anatomy(7, cfg).labels.ids != sample_anatomy(8, cfg).labels.ids);
}

TEST_CASE("sample_anatomy: every class present over 100 seeds") {
  const AnatomyConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const AnatomyLayout l = sample_anatomy(seed, cfg);
    std::array<int, kClassCount> hist{};
    for (auto id : l.labels.ids) {
      REQUIRE(id < kClassCount);
      ++hist[id];
    }
    for (int c = 0; c < kClassCount; ++c) CHECK_MESSAGE(hist[c] > 0, "seed " << seed << " class " << c);
    CHECK(l.spleen_scale >= cfg.spleen_scale_min);
    CHECK(l.spleen_scale <= cfg.spleen_scale_max);
  }
}

TEST_CASE("organs lie inside the body ellipse") {
  const AnatomyConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const AnatomyLayout l = sample_anatomy(seed, cfg);
    const Ellipse& body = l.organs[0];
    for (int y = 0; y < l.height; ++y)
      for (int x = 0; x < l.width; ++x)
        if (l.labels.at(y, x) >= 2) CHECK(body.contains(y, x));
  }
}

TEST_CASE("image size precondition") {
  AnatomyConfig cfg;
  cfg.height = 63;
  CHECK_THROWS_AS(sample_anatomy(1, cfg), ConfigError);
  cfg.height = 28;
  CHECK_THROWS_AS(sample_anatomy(1, cfg), ConfigError);
  CHECK_NOTHROW(validate_image_size(32, 36));
}

TEST_CASE("noise-free render is piecewise constant on the label map") {
  const AnatomyLayout l = sample_anatomy(11, AnatomyConfig{});
  ModalityStyle s = ModalityStyle::a_like();
  s.noise_sigma = 0;
  s.bias_amplitude = 0;
  s.gamma = 1;
  const Image img = render_modality(l, s, 1);
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x)
      CHECK(img.at(y, x) == s.class_intensity[l.labels.at(y, x)]);
}

TEST_CASE("noise deviation matches sigma*sqrt(2/pi) within 20%") {
  // Mid-range intensities so clamping at +-1 never bites.
  ModalityStyle s;
  s.class_intensity = {-0.3f, -0.2f, -0.1f, 0.0f, 0.1f, 0.2f, 0.3f};
  s.bias_amplitude = 0;
  ModalityStyle clean = s;
  s.noise_sigma = 0.1;
  const AnatomyLayout l = sample_anatomy(4, AnatomyConfig{});
  const Image ref = render_modality(l, clean, 0);
  double sum = 0;
  std::size_t n = 0;
  bool differs = false;
  for (std::uint64_t r = 0; r < 50; ++r) {
    const Image img = render_modality(l, s, 100 + r);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      sum += std::fabs(img.pixels[i] - ref.pixels[i]);
      differs |= img.pixels[i] != ref.pixels[i];
      ++n;
    }
  }
  CHECK(differs);
  const double mad = sum / static_cast<double>(n);
  const double expect = 0.1 * std::sqrt(2.0 / 3.141592653589793);
  CHECK(mad == doctest::Approx(expect).epsilon(0.2));
}

TEST_CASE("render is deterministic and stays in [-1, 1]") {
  const AnatomyLayout l = sample_anatomy(2, AnatomyConfig{});
  for (const auto& s : {ModalityStyle::a_like(), ModalityStyle::b_like()}) {
    const Image a = render_modality(l, s, 5), b = render_modality(l, s, 5);
    CHECK(a == b);
    CHECK_NOTHROW(a.validate());
  }
}

TEST_CASE("built-in styles order classes differently") {
  const auto a = ModalityStyle::a_like().class_intensity;
  const auto b = ModalityStyle::b_like().class_intensity;
  bool reordered = false;
  for (int i = 1; i < kClassCount; ++i)
    for (int j = 1; j < kClassCount; ++j)
      if ((a[i] < a[j]) != (b[i] < b[j])) reordered = true;
  CHECK(reordered);
}

TEST_CASE("default dataset sizes and sequestration") {
  DatasetConfig c;
  c.anatomy.height = c.anatomy.width = 32;  // sizes only; keep it quick
  const DatasetBundle d = build_dataset(c);
  CHECK(d.a_train.size() == 60);
  CHECK(d.b_test.size() == 19);
  CHECK(d.b_train.label_reads() == 0);
  CHECK(d.b_train.modality() == Modality::B);
  (void)d.b_train.read_label(0);
  CHECK(d.b_train.label_reads() == 1);
}

TEST_CASE("splits use disjoint anatomy seeds and valid contents") {
  const DatasetBundle d = build_dataset(small_config());
  std::set<std::uint64_t> seen;
  std::size_t total = 0;
  for (const auto* s : {&d.a_train, &d.a_val, &d.b_oracle, &d.b_val, &d.b_test}) {
    seen.insert(s->anatomy_seeds.begin(), s->anatomy_seeds.end());
    total += s->size();
    for (std::size_t i = 0; i < s->size(); ++i) {
      CHECK_NOTHROW(s->images[i].validate());
      CHECK_NOTHROW(s->labels[i].validate());
      CHECK(s->images[i].modality == s->modality);
    }
  }
  seen.insert(d.b_train.anatomy_seeds().begin(), d.b_train.anatomy_seeds().end());
  total += d.b_train.size();
  CHECK(seen.size() == total);
  CHECK(d.b_train.label_reads() == 0);
}

TEST_CASE("dataset rebuild is byte-identical on disk") {
  const fs::path p1 = scratch("rebuild1"), p2 = scratch("rebuild2");
  save_dataset(p1, build_dataset(small_config()));
  save_dataset(p2, build_dataset(small_config()));
  CHECK(tree_bytes(p1) == tree_bytes(p2));
  const fs::path p3 = scratch("rebuild3");
  save_dataset(p3, build_dataset(small_config(4)));
  CHECK(tree_bytes(p1) != tree_bytes(p3));
  fs::remove_all(p1);
  fs::remove_all(p2);
  fs::remove_all(p3);
}

TEST_CASE("dataset round-trip keeps labels sequestered") {
  const fs::path p = scratch("roundtrip");
  const DatasetBundle d = build_dataset(small_config());
  save_dataset(p, d);
  CHECK(d.b_train.label_reads() == 0);
  const DatasetBundle e = load_dataset(p);
  CHECK(e.a_train.images == d.a_train.images);
  CHECK(e.a_train.labels == d.a_train.labels);
  CHECK(e.b_test.images == d.b_test.images);
  CHECK(e.b_train.images() == d.b_train.images());
  CHECK(e.b_train.label_reads() == 0);
  CHECK(e.config.seed == d.config.seed);
  CHECK(fs::exists(p / "view"));
  fs::remove_all(p);
}

TEST_CASE("split save/load is bitwise and rejects damage") {
  const fs::path p = scratch("split");
  const DatasetBundle d = build_dataset(small_config());
  save_split(p, d.a_train);
  const Split back = load_split(p);
  REQUIRE(back.size() == d.a_train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(std::memcmp(back.images[i].pixels.data(), d.a_train.images[i].pixels.data(),
                      back.images[i].pixels.size() * sizeof(float)) == 0);
    CHECK(back.labels[i] == d.a_train.labels[i]);
  }

  SUBCASE("truncated blob") {
    fs::resize_file(p / "000" / "image.f32", 100);
    CHECK_THROWS_AS(load_split(p), ShapeError);
  }
  SUBCASE("missing file") {
    fs::remove(p / "001" / "labels.u8");
    CHECK_THROWS_AS(load_split(p), IoError);
  }
  SUBCASE("corrupt manifest") {
    write_text(p / "split.json", "{ not json");
    CHECK_THROWS_AS(load_split(p), DataError);
  }
  fs::remove_all(p);
}

TEST_CASE("png export endpoints and round-trip") {
  CHECK(to_gray8(-1.0f) == 0);
  CHECK(to_gray8(1.0f) == 255);
  CHECK(to_gray8(-2.0f) == 0);
  CHECK(to_gray8(0.0f) == 128);
  const fs::path p = scratch("png");
  fs::create_directories(p);
  Image img(4, 8, Modality::A, -1.0f);
  img.at(1, 2) = 1.0f;
  export_png(img, p / "x.png");
  const Gray8 g = read_png_gray8(p / "x.png");
  CHECK(g.width == 8);
  CHECK(g.height == 4);
  CHECK(g.pixels[1 * 8 + 2] == 255);
  CHECK(g.pixels[0] == 0);
  fs::remove_all(p);
}

TEST_CASE("unpaired epoch: |A|=3, |B|=2 yields 3 draws with B cycled") {
  const auto e = unpaired_epoch(3, 2, 1, 1);
  REQUIRE(e.size() == 3);
  std::set<std::size_t> a;
  for (auto [ai, bi] : e) {
    a.insert(ai);
    CHECK(bi < 2);
  }
  CHECK(a.size() == 3);
  CHECK(e[2].second == e[0].second);
  CHECK(unpaired_epoch(3, 2, 1, 1) == e);
  CHECK(unpaired_epoch(2, 5, 1, 1).size() == 5);
}

TEST_CASE("unpaired pairing varies across epochs") {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t draws = 0;
  for (int epoch = 1; draws < 1000; ++epoch)
    for (auto p : unpaired_epoch(10, 7, 3, epoch)) {
      pairs.insert(p);
      ++draws;
    }
  CHECK(pairs.size() > 10);
}

TEST_CASE("unpaired_batches carries labels and batches") {
  const DatasetBundle d = build_dataset(small_config());
  const auto batches = unpaired_batches(d.a_train, d.b_train.images(), 9, 1, 2);
  REQUIRE(batches.size() == 2);
  const Shape s = batches[0].x.shape();
  CHECK(s == Shape{2, 1, 32, 32});
  CHECK(batches[0].y.shape() == s);
  CHECK(batches[0].m.size() == 2u * 32 * 32);
  const std::size_t ai = batches[0].a_index[0];
  CHECK(std::equal(d.a_train.labels[ai].ids.begin(), d.a_train.labels[ai].ids.end(),
                   batches[0].m.begin()));
  CHECK(d.b_train.label_reads() == 0);
  const auto solo = unpaired_batches(d.a_train, {}, 9, 1, 1);
  CHECK(solo.size() == d.a_train.size());
  CHECK(solo[0].y.empty());
}

TEST_CASE("image and label validation") {
  Image img(4, 4, Modality::A, 0.0f);
  img.pixels[3] = 1.5f;
  CHECK_THROWS_AS(img.validate(), DataError);
  img.pixels[3] = std::nanf("");
  CHECK_THROWS_AS(img.validate(), DataError);
  LabelMap lab(4, 4);
  lab.ids[0] = 7;
  CHECK_THROWS_AS(lab.validate(), DataError);
}
