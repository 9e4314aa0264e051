#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "essnet/checkpoint.hpp"
#include "essnet/data.hpp"
#include "essnet/losses.hpp"
#include "essnet/networks.hpp"
#include "essnet/optim.hpp"

namespace essnet {

/// essnet: end-to-end synthesis + segmentation.
/// two_stage_synthesis: the cycle subnet alone (no segmenter is built).
/// two_stage_seg: segmenter trained on G1(x) with G1 frozen from a
///   synthesis checkpoint.
/// seg_only: segmenter trained directly on labeled images of one modality.
enum class TrainMode : std::uint8_t {
  kEssNet,
  kTwoStageSynthesis,
  kTwoStageSeg,
  kSegOnly,
};
const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 1;
  double lr_g = 1e-4;  // G1, G2 and S
  double lr_d = 2e-4;  // D1 and D2
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  LossOptions loss;
  int pool_size = 50;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::kEssNet;
  GeneratorConfig generator = GeneratorConfig::desk();
  DiscriminatorConfig discriminator = DiscriminatorConfig::desk();
  /// seg_only: A trains on a_train and validates on a_val; B trains on
  /// b_oracle and validates on b_val.
  Modality seg_only_modality = Modality::A;
  /// Select the best epoch on b_test instead of b_val.
  bool paper_protocol = false;
  /// Where checkpoints and metrics.csv go; empty keeps everything in memory.
  std::filesystem::path out_dir;
  /// Required by two_stage_seg.
  std::filesystem::path synthesis_checkpoint;
  /// Keep a checkpoint for every epoch rather than only latest and best.
  bool keep_all_checkpoints = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  LossReport losses;  // mean over the epoch's steps
  double val_dice = 0;  // mean spleen Dice on the validation split; NaN if none
  std::filesystem::path checkpoint;
};

struct TrainingRun {
  TrainMode mode = TrainMode::kEssNet;
  std::vector<EpochRecord> records;
  /// Best-by-validation and final checkpoints, always kept in memory.
  std::optional<Checkpoint> best;
  std::optional<Checkpoint> last;
};

/// 1-based index of the highest score; ties go to the earliest epoch;
/// non-finite scores never win. Throws DataError when nothing qualifies.
int best_epoch_index(const std::vector<double>& scores);

/// Checkpoint of the argmax-validation epoch.
Checkpoint select_best_epoch(const TrainingRun& run);

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  const TrainConfig& config() const { return config_; }
  const ModelSet<float>& models() const { return models_; }
  ModelSet<float>& models() { return models_; }
  /// Completed epochs.
  int epoch() const { return epoch_; }

  /// One iteration of the two-path loop: an Adam step on G1, G2 (and S) for
  /// the generator-side objective, then one step each on D1 (y vs pooled
  /// G1(x)) and D2 (x vs pooled G2(y)). Throws NumericError on a non-finite
  /// loss.
  LossReport train_step(const Tensor<float>& x, std::span<const std::uint8_t> m,
                        const Tensor<float>& y);

  /// One segmenter update on labeled images (seg_only / two_stage_seg; in
  /// two_stage_seg the input is translated by the frozen G1 first).
  LossReport seg_step(const Tensor<float>& x, std::span<const std::uint8_t> m);

  /// Runs the remaining epochs. Never reads b_train labels.
  TrainingRun train(const DatasetBundle& data);

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  double validate(const DatasetBundle& data) const;

  TrainConfig config_;
  ModelSet<float> models_;
  Adam opt_g1_, opt_g2_, opt_d1_, opt_d2_, opt_s_;
  ImagePool pool_fake_b_, pool_fake_a_;
  int epoch_ = 0;
  double best_val_ = -1;
  int best_epoch_ = 0;
};

/// Generator wrapper: same shape, opposite modality tag.
Image translate(const Network<float>& generator, const Image& img);

/// Per-pixel argmax of the segmenter's probabilities (ties -> lowest ID).
/// Only the segmenter runs.
LabelMap infer_segmentation(const Network<float>& segmenter, const Image& img);

/// Argmax over channels of a [1, C, H, W] probability map.
LabelMap argmax_labels(const Tensor<float>& probs);

}  // namespace essnet
