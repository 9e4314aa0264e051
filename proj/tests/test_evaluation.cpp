#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "essnet/comparison.hpp"
#include "essnet/errors.hpp"
#include "essnet/report.hpp"
#include "essnet/rng.hpp"
#include "oracles.hpp"

using namespace essnet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

LabelMap grid(int h, int w, std::vector<std::uint8_t> ids) {
  LabelMap m(h, w);
  m.ids = std::move(ids);
  return m;
}

}  // namespace

TEST_CASE("dice conventions and small cases") {
  const std::vector<std::uint8_t> a = {1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<std::uint8_t> b = {1, 1, 0, 0, 1, 1, 0, 0};
  const std::vector<std::uint8_t> none(8, 0);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, b) == 0.5);
  CHECK(dice(none, none) == 1.0);
  CHECK(dice(a, none) == 0.0);
  CHECK(dice(none, a) == 0.0);
  CHECK_THROWS_AS(dice(a, std::vector<std::uint8_t>(3, 1)), ShapeError);
}

TEST_CASE("multiclass dice on the 2x2 case") {
  const LabelMap pred = grid(2, 2, {1, 1, 0, 2});
  const LabelMap ref = grid(2, 2, {1, 0, 0, 2});
  const DiceResult r = dice_multiclass(pred, ref, {0, 1, 2});
  CHECK(r.per_class[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.per_class[2] == 1.0);
  CHECK(r.mean_foreground == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  const DiceResult same = dice_multiclass(ref, ref);
  for (double v : same.per_class) CHECK(v == 1.0);
}

TEST_CASE("dice matches the set-counting oracle, is symmetric and permutation invariant") {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<std::uint8_t> a(n), b(n);
    const double pa = rng.uniform(), pb = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform() < pa;
      b[i] = rng.uniform() < pb;
    }
    CHECK(dice(a, b) == oracle::dice(a, b));
    CHECK(dice(a, b) == dice(b, a));
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<std::uint8_t> pa2(n), pb2(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa2[i] = a[perm[i]];
      pb2[i] = b[perm[i]];
    }
    CHECK(dice(pa2, pb2) == dice(a, b));
  }
}

TEST_CASE("wilcoxon: all-positive [1..5]") {
  const std::vector<double> d = {1, 2, 3, 4, 5};
  const WilcoxonOutcome w = wilcoxon_signed_rank(d);
  CHECK(w.w == 15);
  CHECK(w.n == 5);
  CHECK(w.exact);
  CHECK(w.p_value == doctest::Approx(0.0625).epsilon(1e-15));
  CHECK_FALSE(w.significant);
  const std::vector<double> zeros(5, 0.0);
  CHECK_THROWS_AS(wilcoxon_signed_rank(zeros), DataError);
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), DataError);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{1, 2, 0, 0, 3, 4}), DataError);
}

TEST_CASE("wilcoxon exact p equals brute-force enumeration for n <= 12") {
  Rng rng(7);
  for (std::size_t n = 5; n <= 12; ++n)
    for (int t = 0; t < 25; ++t) {
      std::vector<double> d(n);
      // Coarse values so ties and zeros are common.
      for (auto& v : d) v = static_cast<double>(static_cast<int>(rng.below(9)) - 3) * 0.5;
      std::size_t nonzero = 0;
      for (double v : d) nonzero += v != 0;
      if (nonzero < 5) continue;
      const WilcoxonOutcome w = wilcoxon_signed_rank(d, WilcoxonMethod::kExact);
      CHECK(w.p_value == doctest::Approx(oracle::wilcoxon_brute_p(d)).epsilon(1e-12));
      CHECK(w.w == oracle::wilcoxon_w(d));
      CHECK(w.w >= 0);
      CHECK(w.w <= w.n * (w.n + 1) / 2.0);
      CHECK(w.p_value > 0);
      CHECK(w.p_value <= 1);
    }
}

TEST_CASE("wilcoxon normal approximation tracks the exact p at n = 12") {
  Rng rng(11);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> d(12);
    const double shift = rng.uniform(-0.5, 0.5);
    for (auto& v : d) v = rng.normal() + shift;
    const double exact = wilcoxon_signed_rank(d, WilcoxonMethod::kExact).p_value;
    const double approx = wilcoxon_signed_rank(d, WilcoxonMethod::kNormal).p_value;
    worst = std::max(worst, std::fabs(exact - approx));
  }
  CHECK(worst < 0.02);
  std::vector<double> big(20);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<double>(i + 1);
  const WilcoxonOutcome w = wilcoxon_signed_rank(big);
  CHECK_FALSE(w.exact);
  CHECK(w.significant);
}

TEST_CASE("average ranks") {
  CHECK(signed_rank_magnitudes(std::vector<double>{-1, 1, 2, -3}) ==
        std::vector<double>{1.5, 1.5, 3, 4});
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS_AS(median({}), DataError);
}

TEST_CASE("montage geometry") {
  const int h = 5, w = 7;
  std::vector<MontageRow> rows(3, MontageRow(4, std::vector<std::uint8_t>(h * w, 10)));
  const Gray8 g = compose_montage(rows, h, w);
  CHECK(g.width == 4 * w + 3 * kMontageSeparator);
  CHECK(g.height == 3 * h + 2 * kMontageSeparator);
  CHECK(g.pixels[0] == 10);
  CHECK(g.pixels[w] == kSeparatorGray);
  CHECK(g.pixels[static_cast<std::size_t>(h) * g.width] == kSeparatorGray);
  CHECK(representative_indices({0.5, 0.1, 0.9, 0.3, 0.7}) == std::vector<std::size_t>{1, 0, 2});
}

namespace {

ComparisonReport synthetic_report() {
  ComparisonReport r;
  r.seed = 1;
  r.epochs = 1;
  const int n = 6;
  for (int i = 0; i < n; ++i) {
    r.image_ids.push_back("b_test/" + std::to_string(i));
    Image img(32, 32, Modality::B, 0.0f);
    r.test_images.push_back(img);
    LabelMap lab(32, 32);
    for (int k = 0; k < 32 * 32; ++k) lab.ids[k] = static_cast<std::uint8_t>((k + i) % 7);
    r.test_labels.push_back(lab);
  }
  Rng rng(3);
  for (const char* name : kMethods) {
    MethodResult m;
    m.name = name;
    for (int i = 0; i < n; ++i) {
      LabelMap pred = r.test_labels[i];
      for (auto& v : pred.ids)
        if (rng.uniform() < 0.3) v = static_cast<std::uint8_t>(rng.below(7));
      m.per_image.push_back(dice_multiclass(pred, r.test_labels[i], {}, r.image_ids[i]));
      m.predictions.push_back(pred);
    }
    r.methods.push_back(m);
  }
  summarize(r);
  return r;
}

}  // namespace

TEST_CASE("report files: row counts, reference constants, determinism") {
  const ComparisonReport r = synthetic_report();
  CHECK(r.pairs.size() == 6);
  const fs::path a = fs::temp_directory_path() / "essnet-test-report-a";
  const fs::path b = fs::temp_directory_path() / "essnet-test-report-b";
  fs::remove_all(a);
  fs::remove_all(b);
  emit_report(r, a);
  emit_report(r, b);
  const std::string results = slurp(a / "results.csv");
  CHECK(count_lines(results) == 1 + 4 * r.image_ids.size() * kClassCount);
  CHECK(results == slurp(b / "results.csv"));
  const std::string stats = slurp(a / "stats.csv");
  CHECK(stats == slurp(b / "stats.csv"));
  CHECK(stats.find("essnet=0.9188") != std::string::npos);
  CHECK(stats.find("0.8801") != std::string::npos);
  CHECK(stats.find("0.9125") != std::string::npos);
  CHECK(stats.find("0.9107") != std::string::npos);
  CHECK(stats.find("not reproducible") != std::string::npos);
  for (const char* m : kMethods) {
    const Gray8 g = read_png_gray8(a / (std::string("montage_") + m + ".png"));
    CHECK(g.width == 4 * 32 + 3 * kMontageSeparator);
    CHECK(g.height == 3 * 32 + 2 * kMontageSeparator);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("run_comparison on a tiny config") {
  DatasetConfig dc;
  dc.anatomy.height = dc.anatomy.width = 32;
  dc.counts = {4, 2, 3, 3, 2, 5};
  dc.seed = 2;
  const DatasetBundle data = build_dataset(dc);
  ComparisonConfig cc;
  cc.train.epochs = 1;
  cc.train.generator = {4, 1, 1, 1, Head::kTanh};
  cc.train.discriminator = {4, 3, 1};
  cc.train.seed = 3;
  const ComparisonReport r = run_comparison(data, cc);
  REQUIRE(r.methods.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.methods[i].name == kMethods[i]);
    CHECK(r.methods[i].spleen.size() == data.b_test.size());
    CHECK(r.methods[i].label_reads == 0);
  }
  CHECK(r.test_images == data.b_test.images);
  CHECK(r.method("essnet").synthesized.size() == data.b_test.size());
  CHECK(r.method("source_only").synthesized.empty());
  CHECK(data.b_train.label_reads() == 0);
  const DirectionalCheck c = directional_check(r);
  CHECK(c.essnet_median == r.method("essnet").median);
}
