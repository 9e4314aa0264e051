#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "essnet/checkpoint.hpp"
#include "essnet/dataset_io.hpp"
#include "essnet/errors.hpp"
#include "essnet/optim.hpp"
#include "essnet/rng.hpp"
#include "essnet/trainer.hpp"

using namespace essnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("essnet-test-trainer-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const DatasetBundle& tiny_data() {
  static const DatasetBundle d = [] {
    DatasetConfig c;
    c.anatomy.height = c.anatomy.width = 32;
    c.counts = {4, 2, 3, 3, 2, 3};
    c.seed = 5;
    return build_dataset(c);
  }();
  return d;
}

TrainConfig tiny_config(TrainMode mode = TrainMode::kEssNet, int epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  c.mode = mode;
  c.generator = {4, 1, 1, 1, Head::kTanh};
  c.discriminator = {4, 3, 1};
  c.pool_size = 3;
  c.seed = 11;
  return c;
}

bool same_report(const LossReport& a, const LossReport& b) {
  return a.gan_g1 == b.gan_g1 && a.gan_g2 == b.gan_g2 && a.cycle_a == b.cycle_a &&
         a.cycle_b == b.cycle_b && a.seg == b.seg && a.d1 == b.d1 && a.d2 == b.d2 &&
         a.total == b.total;
}

}  // namespace

TEST_CASE("best epoch selection: argmax with earliest tie") {
  CHECK(best_epoch_index({0.2, 0.8, 0.8, 0.5}) == 2);
  CHECK(best_epoch_index({0.4}) == 1);
  CHECK(best_epoch_index({0.1, 0.2, 0.3, 0.4}) == 4);
  CHECK(best_epoch_index({std::nan(""), 0.1}) == 2);
  CHECK_THROWS_AS(best_epoch_index({}), DataError);
  TrainingRun empty;
  CHECK_THROWS_AS(select_best_epoch(empty), DataError);
}

TEST_CASE("mode names and config validation") {
  for (TrainMode m : {TrainMode::kEssNet, TrainMode::kTwoStageSynthesis, TrainMode::kTwoStageSeg,
                      TrainMode::kSegOnly})
    CHECK(train_mode_from_name(train_mode_name(m)) == m);
  CHECK_THROWS_AS(train_mode_from_name("cyclegan"), ConfigError);
  TrainConfig c;
  c.lr_g = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.mode = TrainMode::kTwoStageSeg;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(TrainConfig{}.lr_g == 1e-4);
  CHECK(TrainConfig{}.lr_d == 2e-4);
}

TEST_CASE("adam step matches the bias-corrected update") {
  auto net = build_discriminator<float>(DiscriminatorConfig{2, 2, 1}, 1);
  const auto& w = net.param("head.conv.w");
  const float w0 = w->value[0], w1 = w->value[1];
  Adam opt(net, AdamConfig{0.1, 0.5, 0.999, 1e-8});
  w->grad_buffer()[0] = 2.0f;
  opt.step();
  // After one step m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(w->value[0] == doctest::Approx(w0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-6));
  CHECK(w->value[1] == w1);  // zero gradient, zero moments: no move
  CHECK(opt.steps() == 1);
}

TEST_CASE("image pool fills, then swaps about half the time") {
  ImagePool pool(2, 1);
  auto img = [](float v) { return Tensor<float>(Shape{1, 1, 2, 2}, v); };
  CHECK(pool.query(img(1))[0] == 1);
  CHECK(pool.query(img(2))[0] == 2);
  int swapped = 0;
  for (int i = 0; i < 400; ++i)
    if (pool.query(img(100.0f + i))[0] != 100.0f + i) ++swapped;
  CHECK(swapped > 150);
  CHECK(swapped < 250);
  CHECK(pool.images().size() == 2);
  ImagePool off(0, 1);
  CHECK(off.query(img(7))[0] == 7);
}

TEST_CASE("train_step: report identity and determinism") {
  const auto& d = tiny_data();
  const auto batches = unpaired_batches(d.a_train, d.b_train.images(), 1, 1, 1);
  Trainer a(tiny_config()), b(tiny_config());
  for (int i = 0; i < 3; ++i) {
    const auto& bt = batches[i];
    const LossReport ra = a.train_step(bt.x, bt.m, bt.y);
    const LossReport rb = b.train_step(bt.x, bt.m, bt.y);
    CHECK(same_report(ra, rb));
    CHECK(ra.finite());
    CHECK(ra.total == total_loss(ra, a.config().weights));
  }
  CHECK(d.b_train.label_reads() == 0);
}

TEST_CASE("seg-only weights with G1 frozen: loss falls over 10 steps") {
  const auto& d = tiny_data();
  TrainConfig c = tiny_config();
  c.weights = {0, 0, 0, 0, 1};
  c.lr_g = 1e-3;
  Trainer t(c);
  t.models().g1.set_trainable(false);
  const Tensor<float> g1_before = t.models().g1.param("in.conv.w")->value;
  const auto b = unpaired_batches(d.a_train, d.b_train.images(), 1, 1, 1).front();
  const double first = t.train_step(b.x, b.m, b.y).seg;
  double last = first;
  for (int i = 0; i < 9; ++i) last = t.train_step(b.x, b.m, b.y).seg;
  CHECK(last < first);
  CHECK(t.models().g1.param("in.conv.w")->value == g1_before);
}

TEST_CASE("non-finite loss aborts with a numeric error") {
  const auto& d = tiny_data();
  Trainer t(tiny_config());
  t.models().g1.param("out.conv.b")->value[0] = std::numeric_limits<float>::quiet_NaN();
  const auto b = unpaired_batches(d.a_train, d.b_train.images(), 1, 1, 1).front();
  CHECK_THROWS_AS(t.train_step(b.x, b.m, b.y), NumericError);
}

TEST_CASE("two_stage_synthesis never builds S") {
  Trainer t(tiny_config(TrainMode::kTwoStageSynthesis, 1));
  CHECK_FALSE(t.models().s.has_value());
  const TrainingRun run = t.train(tiny_data());
  REQUIRE(run.last);
  for (Role r : run.last->roles()) CHECK(r != Role::S);
  for (const auto& [name, tensor] : run.last->tensors) CHECK(name.rfind("S/", 0) != 0);
  CHECK(std::isnan(run.records[0].val_dice));
}

TEST_CASE("training runs: records, finiteness, sequestration") {
  const auto& d = tiny_data();
  Trainer t(tiny_config(TrainMode::kEssNet, 2));
  const TrainingRun run = t.train(d);
  REQUIRE(run.records.size() == 2);
  for (const auto& r : run.records) {
    CHECK(r.losses.finite());
    CHECK(r.losses.total == total_loss(r.losses, t.config().weights));
    CHECK((r.val_dice >= 0 && r.val_dice <= 1));
  }
  CHECK(d.b_train.label_reads() == 0);
  const Checkpoint best = select_best_epoch(run);
  std::vector<double> scores{run.records[0].val_dice, run.records[1].val_dice};
  CHECK(best.epoch() == best_epoch_index(scores));
}

TEST_CASE("essnet and two-stage share architectures and hyperparameters") {
  const fs::path dir = scratch("arch");
  Trainer synth(tiny_config(TrainMode::kTwoStageSynthesis, 1));
  save_checkpoint(dir, synth.checkpoint());
  TrainConfig seg_cfg = tiny_config(TrainMode::kTwoStageSeg, 1);
  seg_cfg.synthesis_checkpoint = dir;
  Trainer seg(seg_cfg);
  Trainer ess(tiny_config(TrainMode::kEssNet, 1));
  CHECK(ess.models().g1.generator_config() == synth.models().g1.generator_config());
  CHECK(ess.models().g2.generator_config() == synth.models().g2.generator_config());
  CHECK(ess.models().d1.discriminator_config() == synth.models().d1.discriminator_config());
  CHECK(ess.models().s->generator_config() == seg.models().s->generator_config());
  CHECK(ess.models().s->layers() == seg.models().s->layers());
  CHECK(seg.models().g1.param("in.conv.w")->value == synth.models().g1.param("in.conv.w")->value);
  const TrainingRun run = seg.train(tiny_data());
  CHECK(run.records.size() == 1);
  CHECK(tiny_data().b_train.label_reads() == 0);
  // The frozen synthesizer did not move.
  CHECK(seg.models().g1.param("in.conv.w")->value == synth.models().g1.param("in.conv.w")->value);
  fs::remove_all(dir);
}

TEST_CASE("seg_only trains on its own modality") {
  for (Modality m : {Modality::A, Modality::B}) {
    TrainConfig c = tiny_config(TrainMode::kSegOnly, 1);
    c.seg_only_modality = m;
    Trainer t(c);
    CHECK(t.models().s.has_value());
    const TrainingRun run = t.train(tiny_data());
    CHECK(run.records.size() == 1);
    CHECK(run.records[0].losses.gan_g1 == 0);
    CHECK(run.records[0].losses.seg > 0);
  }
  CHECK(tiny_data().b_train.label_reads() == 0);
}

TEST_CASE("checkpoint round-trip is byte-identical") {
  const fs::path a = scratch("ckpt-a"), b = scratch("ckpt-b");
  Trainer t(tiny_config());
  const auto& d = tiny_data();
  const auto bt = unpaired_batches(d.a_train, d.b_train.images(), 1, 1, 1).front();
  (void)t.train_step(bt.x, bt.m, bt.y);
  save_checkpoint(a, t.checkpoint());
  const Checkpoint loaded = load_checkpoint(a);
  save_checkpoint(b, loaded);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  CHECK(slurp(a / "tensors.f32") == slurp(b / "tensors.f32"));
  CHECK(loaded.tensors.size() == t.checkpoint().tensors.size());

  SUBCASE("edited shape") {
    std::string m = slurp(a / "manifest.json");
    const auto pos = m.find("\"shape\"");
    REQUIRE(pos != std::string::npos);
    const auto digit = m.find_first_of("123456789", pos);
    m[digit] = m[digit] == '9' ? '8' : static_cast<char>(m[digit] + 1);
    write_text(a / "manifest.json", m);
    CHECK_THROWS_AS(load_checkpoint(a), DataError);
  }
  SUBCASE("truncated blob") {
    fs::resize_file(a / "tensors.f32", 64);
    CHECK_THROWS_AS(load_checkpoint(a), DataError);
  }
  SUBCASE("unknown architecture tag") {
    std::string m = slurp(a / "manifest.json");
    const auto pos = m.find("\"discriminator\"");
    REQUIRE(pos != std::string::npos);
    m.replace(pos, 15, "\"transformer\"");
    write_text(a / "manifest.json", m);
    CHECK_THROWS_AS(load_checkpoint(a), DataError);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("resume from checkpoint reproduces the uninterrupted run") {
  const auto& d = tiny_data();
  const fs::path full_dir = scratch("full"), part_dir = scratch("part");
  TrainConfig full_cfg = tiny_config(TrainMode::kEssNet, 3);
  full_cfg.out_dir = full_dir;
  Trainer full(full_cfg);
  const TrainingRun full_run = full.train(d);

  TrainConfig first_cfg = tiny_config(TrainMode::kEssNet, 2);
  first_cfg.out_dir = part_dir;
  Trainer first(first_cfg);
  (void)first.train(d);

  TrainConfig resume_cfg = tiny_config(TrainMode::kEssNet, 3);
  resume_cfg.out_dir = part_dir;
  Trainer resumed(resume_cfg);
  resumed.restore(load_checkpoint(part_dir / "checkpoints" / "latest"));
  CHECK(resumed.epoch() == 2);
  const TrainingRun rest = resumed.train(d);
  REQUIRE(rest.records.size() == 1);
  CHECK(rest.records[0].epoch == 3);
  CHECK(same_report(rest.records[0].losses, full_run.records[2].losses));
  CHECK(rest.records[0].val_dice == full_run.records[2].val_dice);
  const Checkpoint a = full.checkpoint(), b = resumed.checkpoint();
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].first == b.tensors[i].first);
    CHECK(a.tensors[i].second == b.tensors[i].second);
  }
  CHECK(slurp(full_dir / "metrics.csv") == slurp(part_dir / "metrics.csv"));
  CHECK(d.b_train.label_reads() == 0);
  fs::remove_all(full_dir);
  fs::remove_all(part_dir);
}

TEST_CASE("restore rejects a checkpoint from another mode") {
  Trainer synth(tiny_config(TrainMode::kTwoStageSynthesis, 1));
  Trainer ess(tiny_config(TrainMode::kEssNet, 1));
  CHECK_THROWS_AS(ess.restore(synth.checkpoint()), DataError);
}

TEST_CASE("argmax labels: certain class, ties, naive oracle") {
  Tensor<float> p(Shape{1, 7, 2, 2}, 0.0f);
  p.at(0, 3, 0, 0) = 1.0f;
  p.at(0, 2, 0, 1) = 0.5f;
  p.at(0, 5, 0, 1) = 0.5f;
  p.at(0, 6, 1, 0) = 0.6f;
  p.at(0, 1, 1, 0) = 0.4f;
  for (int c = 0; c < 7; ++c) p.at(0, c, 1, 1) = 1.0f / 7;
  const LabelMap l = argmax_labels(p);
  CHECK(l.at(0, 0) == 3);
  CHECK(l.at(0, 1) == 2);
  CHECK(l.at(1, 0) == 6);
  CHECK(l.at(1, 1) == 0);

  Rng rng(3);
  Tensor<float> r(Shape{1, 7, 9, 9});
  for (auto& v : r.values()) v = static_cast<float>(rng.below(4)) / 4.0f;  // frequent ties
  const LabelMap lr = argmax_labels(r);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      int best = 0;
      for (int c = 0; c < 7; ++c)
        if (r.at(0, c, y, x) > r.at(0, best, y, x)) best = c;
      CHECK(lr.at(y, x) == best);
    }
}

TEST_CASE("inference runs S only") {
  Trainer t(tiny_config());
  const Image& img = tiny_data().b_test.images[0];
  const std::size_t g1 = forward_calls(Role::G1), g2 = forward_calls(Role::G2),
                    s = forward_calls(Role::S);
  const LabelMap lab = infer_segmentation(*t.models().s, img);
  CHECK(forward_calls(Role::G1) == g1);
  CHECK(forward_calls(Role::G2) == g2);
  CHECK(forward_calls(Role::S) == s + 1);
  CHECK(lab.height == img.height);
  CHECK_NOTHROW(lab.validate());
}

TEST_CASE("translate flips modality and preserves shape") {
  Trainer t(tiny_config());
  const Image& img = tiny_data().a_val.images[0];
  const Image out = translate(t.models().g1, img);
  CHECK(out.modality == Modality::B);
  CHECK(out.height == img.height);
  CHECK(out.width == img.width);
  for (float v : out.pixels) CHECK(std::fabs(v) < 1.0f);
  CHECK(translate(t.models().g1, img) == out);
}
