#include "essnet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "essnet/dataset_io.hpp"
#include "essnet/dice.hpp"
#include "essnet/errors.hpp"

namespace essnet {

namespace fs = std::filesystem;
using nlohmann::json;

const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kEssNet: return "essnet";
    case TrainMode::kTwoStageSynthesis: return "two_stage_synthesis";
    case TrainMode::kTwoStageSeg: return "two_stage_seg";
    case TrainMode::kSegOnly: return "seg_only";
  }
  return "?";
}

TrainMode train_mode_from_name(const std::string& name) {
  for (TrainMode m : {TrainMode::kEssNet, TrainMode::kTwoStageSynthesis,
                      TrainMode::kTwoStageSeg, TrainMode::kSegOnly})
    if (name == train_mode_name(m)) return m;
  throw ConfigError("unknown training mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr_g > 0) || !std::isfinite(lr_g)) throw ConfigError("lr_g must be > 0");
  if (!(lr_d > 0) || !std::isfinite(lr_d)) throw ConfigError("lr_d must be > 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2 must be in [0, 1)");
  if (pool_size < 0) throw ConfigError("pool size must be >= 0");
  weights.validate();
  generator.validate();
  discriminator.validate();
  if (mode == TrainMode::kTwoStageSeg && synthesis_checkpoint.empty())
    throw ConfigError("two_stage_seg needs a synthesis checkpoint");
}

int best_epoch_index(const std::vector<double>& scores) {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    if (best == 0 || scores[i] > best_score) {
      best = static_cast<int>(i) + 1;
      best_score = scores[i];
    }
  }
  if (best == 0) throw DataError("no epoch has a finite validation score");
  return best;
}

Checkpoint select_best_epoch(const TrainingRun& run) {
  if (run.best) return *run.best;
  std::vector<double> scores;
  for (const auto& r : run.records) scores.push_back(r.val_dice);
  const EpochRecord& rec = run.records.at(best_epoch_index(scores) - 1);
  if (rec.checkpoint.empty())
    throw DataError("best epoch " + std::to_string(rec.epoch) +
                    " has no stored checkpoint");
  return load_checkpoint(rec.checkpoint);
}

namespace {

bool uses_cycle(TrainMode m) {
  return m == TrainMode::kEssNet || m == TrainMode::kTwoStageSynthesis;
}
bool uses_seg(TrainMode m) { return m != TrainMode::kTwoStageSynthesis; }

std::vector<Role> stored_roles(TrainMode m) {
  switch (m) {
    case TrainMode::kEssNet: return {Role::G1, Role::G2, Role::D1, Role::D2, Role::S};
    case TrainMode::kTwoStageSynthesis: return {Role::G1, Role::G2, Role::D1, Role::D2};
    case TrainMode::kTwoStageSeg: return {Role::G1, Role::S};
    case TrainMode::kSegOnly: return {Role::S};
  }
  return {};
}

std::uint64_t init_seed(std::uint64_t seed, Role r) {
  return derive_seed(seed, std::string("init/") + role_name(r));
}

void require_finite(double v, const char* what, int epoch, std::size_t step) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + what + " loss at epoch " +
                       std::to_string(epoch) + " step " + std::to_string(step));
}

std::string format_metrics_row(int epoch, const LossReport& r, double val) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", epoch,
                r.gan_g1, r.gan_g2, r.cycle_a, r.cycle_b, r.seg, r.d1, r.d2,
                r.total, val);
  return buf;
}

constexpr const char* kMetricsHeader =
    "epoch,gan_g1,gan_g2,cycle_a,cycle_b,seg,d1,d2,total,val_dice\n";

// Keeps the header and the first `epochs` rows so a resumed run continues
// the same file.
void prepare_metrics(const fs::path& path, int epochs) {
  std::string kept = kMetricsHeader;
  if (epochs > 0 && fs::exists(path)) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    for (int i = 0; i < epochs && std::getline(in, line); ++i) kept += line + "\n";
  }
  write_text(path, kept);
}

void append_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void accumulate(LossReport& sum, const LossReport& r) {
  sum.gan_g1 += r.gan_g1;
  sum.gan_g2 += r.gan_g2;
  sum.cycle_a += r.cycle_a;
  sum.cycle_b += r.cycle_b;
  sum.seg += r.seg;
  sum.d1 += r.d1;
  sum.d2 += r.d2;
}

double scalar(const Var<float>& v) { return static_cast<double>(v->value[0]); }

}  // namespace

Trainer::Trainer(TrainConfig config) : config_(std::move(config)) {
  config_.validate();
  const TrainMode mode = config_.mode;
  const std::uint64_t seed = config_.seed;
  if (uses_cycle(mode)) {
    models_.g1 = build_generator<float>(config_.generator, init_seed(seed, Role::G1), Role::G1);
    models_.g2 = build_generator<float>(config_.generator, init_seed(seed, Role::G2), Role::G2);
    models_.d1 = build_discriminator<float>(config_.discriminator,
                                            init_seed(seed, Role::D1), Role::D1);
    models_.d2 = build_discriminator<float>(config_.discriminator,
                                            init_seed(seed, Role::D2), Role::D2);
  }
  if (mode == TrainMode::kTwoStageSeg) {
    const Checkpoint synth = load_checkpoint(config_.synthesis_checkpoint);
    models_.g1 = restore_network(synth, Role::G1);
    models_.g1.set_trainable(false);
  }
  if (uses_seg(mode))
    models_.s = build_segmenter<float>(config_.generator, init_seed(seed, Role::S));

  const AdamConfig g{config_.lr_g, config_.beta1, config_.beta2, 1e-8};
  const AdamConfig d{config_.lr_d, config_.beta1, config_.beta2, 1e-8};
  if (uses_cycle(mode)) {
    opt_g1_ = Adam(models_.g1, g);
    opt_g2_ = Adam(models_.g2, g);
    opt_d1_ = Adam(models_.d1, d);
    opt_d2_ = Adam(models_.d2, d);
    pool_fake_b_ = ImagePool(config_.pool_size, derive_seed(seed, "pool/fake_b"));
    pool_fake_a_ = ImagePool(config_.pool_size, derive_seed(seed, "pool/fake_a"));
  }
  if (models_.s) opt_s_ = Adam(*models_.s, g);
}

LossReport Trainer::train_step(const Tensor<float>& x,
                               std::span<const std::uint8_t> m,
                               const Tensor<float>& y) {
  if (!uses_cycle(config_.mode))
    throw ConfigError(std::string("train_step is not available in mode ") +
                      train_mode_name(config_.mode));
  LossReport report;

  // Generator side, discriminators frozen.
  models_.d1.set_trainable(false);
  models_.d2.set_trainable(false);
  models_.g1.zero_grad();
  models_.g2.zero_grad();
  if (models_.s) models_.s->zero_grad();
  const GeneratorPass<float> pass =
      generator_pass(models_, x, m, y, config_.weights, config_.loss);
  report.gan_g1 = scalar(pass.gan_g1);
  report.gan_g2 = scalar(pass.gan_g2);
  report.cycle_a = scalar(pass.cycle_a);
  report.cycle_b = scalar(pass.cycle_b);
  report.seg = scalar(pass.seg);
  const std::size_t step = static_cast<std::size_t>(opt_g1_.steps());
  require_finite(scalar(pass.total), "generator", epoch_ + 1, step);
  backward(pass.total);
  opt_g1_.step();
  opt_g2_.step();
  if (models_.s) opt_s_.step();
  models_.d1.set_trainable(true);
  models_.d2.set_trainable(true);

  // Discriminators on real vs pooled fakes.
  auto d_step = [&](Network<float>& d, Adam& opt, ImagePool& pool,
                    const Tensor<float>& real, const Var<float>& fake,
                    const char* what) {
    d.zero_grad();
    const Tensor<float> pooled = pool.query(fake->value);
    const Var<float> loss =
        adversarial_loss_d(d.forward(constant(real)), d.forward(constant(pooled)),
                           config_.loss.gan_mode);
    require_finite(scalar(loss), what, epoch_ + 1, step);
    backward(loss);
    opt.step();
    return scalar(loss);
  };
  report.d1 = d_step(models_.d1, opt_d1_, pool_fake_b_, y, pass.fake_b, "D1");
  report.d2 = d_step(models_.d2, opt_d2_, pool_fake_a_, x, pass.fake_a, "D2");
  report.total = total_loss(report, config_.weights);
  return report;
}

LossReport Trainer::seg_step(const Tensor<float>& x,
                             std::span<const std::uint8_t> m) {
  if (uses_cycle(config_.mode) || !models_.s)
    throw ConfigError(std::string("seg_step is not available in mode ") +
                      train_mode_name(config_.mode));
  Tensor<float> input = x;
  if (config_.mode == TrainMode::kTwoStageSeg) input = generator_forward(models_.g1, x);
  models_.s->zero_grad();
  const Var<float> logits = models_.s->forward(constant(input));
  const Var<float> loss = seg_loss_from_logits(logits, m, config_.loss.seg_reduction);
  LossReport report;
  report.seg = scalar(loss);
  require_finite(report.seg, "segmentation", epoch_ + 1,
                 static_cast<std::size_t>(opt_s_.steps()));
  backward(loss);
  opt_s_.step();
  report.total = total_loss(report, config_.weights);
  return report;
}

double Trainer::validate(const DatasetBundle& data) const {
  if (!models_.s) return std::numeric_limits<double>::quiet_NaN();
  const Split* split = &data.b_val;
  if (config_.paper_protocol)
    split = &data.b_test;
  else if (config_.mode == TrainMode::kSegOnly && config_.seg_only_modality == Modality::A)
    split = &data.a_val;
  if (split->size() == 0) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0;
  for (std::size_t i = 0; i < split->size(); ++i) {
    const LabelMap pred = infer_segmentation(*models_.s, split->images[i]);
    sum += dice_multiclass(pred, split->labels[i], {kSpleen}).spleen();
  }
  return sum / static_cast<double>(split->size());
}

TrainingRun Trainer::train(const DatasetBundle& data) {
  TrainingRun run;
  run.mode = config_.mode;
  const fs::path ckpt_dir = config_.out_dir.empty() ? fs::path() : config_.out_dir / "checkpoints";
  const fs::path metrics = config_.out_dir.empty() ? fs::path() : config_.out_dir / "metrics.csv";
  if (!config_.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(ckpt_dir, ec);
    if (ec) throw IoError("cannot create " + ckpt_dir.string() + ": " + ec.message());
    prepare_metrics(metrics, epoch_);
    if (epoch_ > 0 && best_epoch_ > 0 && fs::exists(ckpt_dir / "best" / "manifest.json"))
      run.best = load_checkpoint(ckpt_dir / "best");
  }

  const Split* labeled = &data.a_train;
  if (config_.mode == TrainMode::kSegOnly && config_.seg_only_modality == Modality::B)
    labeled = &data.b_oracle;
  const std::uint64_t order_seed = derive_seed(config_.seed, "data-order");
  static const std::vector<Image> kNoImages;

  while (epoch_ < config_.epochs) {
    const int e = epoch_ + 1;
    const bool cycle = uses_cycle(config_.mode);
    const auto batches = unpaired_batches(*labeled, cycle ? data.b_train.images() : kNoImages,
                                          order_seed, e, config_.batch_size);
    LossReport sum;
    for (const auto& b : batches)
      accumulate(sum, cycle ? train_step(b.x, b.m, b.y) : seg_step(b.x, b.m));
    const double n = static_cast<double>(batches.size());
    LossReport mean{sum.gan_g1 / n, sum.gan_g2 / n, sum.cycle_a / n, sum.cycle_b / n,
                    sum.seg / n,    sum.d1 / n,     sum.d2 / n,      0};
    mean.total = total_loss(mean, config_.weights);
    epoch_ = e;

    EpochRecord rec{e, mean, validate(data), {}};
    const bool improved = std::isfinite(rec.val_dice) && (best_epoch_ == 0 || rec.val_dice > best_val_);
    if (improved) {
      best_val_ = rec.val_dice;
      best_epoch_ = e;
    }
    Checkpoint ck = checkpoint();
    if (!config_.out_dir.empty()) {
      append_text(metrics, format_metrics_row(e, mean, rec.val_dice));
      save_checkpoint(ckpt_dir / "latest", ck);
      if (improved) {
        save_checkpoint(ckpt_dir / "best", ck);
        rec.checkpoint = ckpt_dir / "best";
      }
      if (config_.keep_all_checkpoints) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d", e);
        save_checkpoint(ckpt_dir / name, ck);
        rec.checkpoint = ckpt_dir / name;
      }
    }
    if (improved) run.best = ck;
    run.last = std::move(ck);
    run.records.push_back(std::move(rec));
  }
  return run;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.meta["epoch"] = epoch_;
  ck.meta["mode"] = train_mode_name(config_.mode);
  ck.meta["seed"] = config_.seed;
  ck.meta["best_val"] = best_val_;
  ck.meta["best_epoch"] = best_epoch_;
  const Network<float>* nets[] = {&models_.g1, &models_.g2, &models_.d1, &models_.d2,
                                  models_.s ? &*models_.s : nullptr};
  const Adam* opts[] = {&opt_g1_, &opt_g2_, &opt_d1_, &opt_d2_, &opt_s_};
  for (Role r : stored_roles(config_.mode)) {
    const int i = static_cast<int>(r);
    store_network(ck, *nets[i]);
    if (config_.mode == TrainMode::kTwoStageSeg && r == Role::G1) continue;
    const std::string tag = role_name(r);
    ck.meta["adam"][tag] = opts[i]->steps();
    const auto& params = nets[i]->parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      ck.tensors.emplace_back(tag + "/adam_m/" + params[k].first, opts[i]->first_moment()[k]);
      ck.tensors.emplace_back(tag + "/adam_v/" + params[k].first, opts[i]->second_moment()[k]);
    }
  }
  if (uses_cycle(config_.mode)) {
    for (const auto& [tag, pool] : {std::pair{"fake_b", &pool_fake_b_},
                                    std::pair{"fake_a", &pool_fake_a_}}) {
      ck.meta["pools"][tag] = {{"count", pool->images().size()},
                               {"rng", pool->rng().state()}};
      for (std::size_t k = 0; k < pool->images().size(); ++k)
        ck.tensors.emplace_back(std::string("pool/") + tag + "/" + std::to_string(k),
                                pool->images()[k]);
    }
  }
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  try {
    const std::string mode = ck.meta.at("mode").get<std::string>();
    if (mode != train_mode_name(config_.mode))
      throw DataError("checkpoint was written in mode " + mode + ", trainer runs " +
                      train_mode_name(config_.mode));
    Network<float>* nets[] = {&models_.g1, &models_.g2, &models_.d1, &models_.d2,
                              models_.s ? &*models_.s : nullptr};
    Adam* opts[] = {&opt_g1_, &opt_g2_, &opt_d1_, &opt_d2_, &opt_s_};
    for (Role r : stored_roles(config_.mode)) {
      const int i = static_cast<int>(r);
      const Network<float> loaded = restore_network(ck, r);
      const auto& dst = nets[i]->parameters();
      const auto& src = loaded.parameters();
      if (dst.size() != src.size())
        throw DataError(std::string("checkpoint network ") + role_name(r) +
                        " does not match the configured architecture");
      for (std::size_t k = 0; k < dst.size(); ++k) {
        if (dst[k].second->value.shape() != src[k].second->value.shape())
          throw DataError("checkpoint tensor " + std::string(role_name(r)) + "/" +
                          dst[k].first + " has the wrong shape");
        dst[k].second->value = src[k].second->value;
      }
      if (config_.mode == TrainMode::kTwoStageSeg && r == Role::G1) continue;
      const std::string tag = role_name(r);
      opts[i]->set_steps(ck.meta.at("adam").at(tag).get<std::int64_t>());
      for (std::size_t k = 0; k < dst.size(); ++k) {
        opts[i]->first_moment()[k] = ck.tensor(tag + "/adam_m/" + dst[k].first);
        opts[i]->second_moment()[k] = ck.tensor(tag + "/adam_v/" + dst[k].first);
      }
    }
    if (uses_cycle(config_.mode)) {
      for (auto [tag, pool] : {std::pair{"fake_b", &pool_fake_b_},
                               std::pair{"fake_a", &pool_fake_a_}}) {
        const json& p = ck.meta.at("pools").at(tag);
        const std::size_t count = p.at("count").get<std::size_t>();
        pool->images().clear();
        for (std::size_t k = 0; k < count; ++k)
          pool->images().push_back(
              ck.tensor(std::string("pool/") + tag + "/" + std::to_string(k)));
        pool->rng().set_state(p.at("rng").get<std::string>());
      }
    }
    epoch_ = ck.meta.at("epoch").get<int>();
    best_val_ = ck.meta.at("best_val").get<double>();
    best_epoch_ = ck.meta.at("best_epoch").get<int>();
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt trainer checkpoint: ") + e.what());
  }
}

Image translate(const Network<float>& generator, const Image& img) {
  img.validate();
  const Tensor<float> out = generator_forward(generator, to_tensor(img));
  return to_image(out, 0, other(img.modality));
}

LabelMap argmax_labels(const Tensor<float>& probs) {
  const Shape s = probs.shape();
  if (s.n != 1 || s.c < 1) throw ShapeError("argmax_labels expects [1, C, H, W], got " + s.str());
  LabelMap out(s.h, s.w, s.c);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      int best = 0;
      float best_p = probs.at(0, 0, y, x);
      for (int c = 1; c < s.c; ++c)
        if (probs.at(0, c, y, x) > best_p) {
          best_p = probs.at(0, c, y, x);
          best = c;
        }
      out.ids[static_cast<std::size_t>(y) * s.w + x] = static_cast<std::uint8_t>(best);
    }
  return out;
}

LabelMap infer_segmentation(const Network<float>& segmenter, const Image& img) {
  img.validate();
  return argmax_labels(segmenter_forward(segmenter, to_tensor(img)));
}

}  // namespace essnet
