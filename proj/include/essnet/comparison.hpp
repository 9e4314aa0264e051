#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "essnet/data.hpp"
#include "essnet/dice.hpp"
#include "essnet/trainer.hpp"
#include "essnet/wilcoxon.hpp"

namespace essnet {

/// The four strategies, in report order.
inline constexpr std::array<const char*, 4> kMethods = {
    "source_only", "oracle_target", "two_stage", "essnet"};

struct ReferenceMedian {
  const char* method;
  double median_dice;
};

/// Published medians from the clinical study (private MRI/CT cohorts).
/// Recorded for context only; they are not reproducible here.
inline constexpr std::array<ReferenceMedian, 4> kReferenceMedians = {{
    {"essnet", 0.9188},
    {"two_stage (CycleGAN+Seg)", 0.8801},
    {"multi-atlas (MAS)", 0.9125},
    {"oracle_target (ResNet)", 0.9107},
}};

struct MethodResult {
  std::string name;
  std::vector<DiceResult> per_image;  // aligned with the B_test images
  std::vector<double> spleen;         // per-image spleen Dice
  std::vector<LabelMap> predictions;
  /// G1 outputs on source images, for methods that train a synthesizer.
  std::vector<Image> synthesized;
  double median = 0;
  double mean = 0;
  int best_epoch = 0;
  /// Cumulative B_train label reads observed right after this method trained.
  std::size_t label_reads = 0;
};

struct PairwiseTest {
  std::string a, b;
  std::optional<WilcoxonOutcome> outcome;
  std::string error;  // set when the test is undefined (e.g. all ties)
};

struct ComparisonReport {
  std::vector<std::string> image_ids;
  std::vector<Image> test_images;
  std::vector<LabelMap> test_labels;
  std::vector<MethodResult> methods;
  std::vector<PairwiseTest> pairs;
  std::uint64_t seed = 0;
  int epochs = 0;

  const MethodResult& method(const std::string& name) const;
};

struct ComparisonConfig {
  /// Shared hyperparameters; mode, out_dir and synthesis_checkpoint are set
  /// per method.
  TrainConfig train;
  /// Per-method checkpoints and metrics go under <out_dir>/<method>. When
  /// empty a temporary directory is used for the two-stage hand-off.
  std::filesystem::path out_dir;
  std::function<void(const std::string&)> log;
};

double median(std::vector<double> values);

/// Per-image Dice of a segmenter over a labeled split.
std::vector<DiceResult> evaluate_segmenter(const Network<float>& segmenter,
                                           const Split& split,
                                           std::vector<LabelMap>* predictions = nullptr);

/// Trains all four methods on the same seeds and scores them on b_test.
ComparisonReport run_comparison(const DatasetBundle& data,
                                const ComparisonConfig& config);

/// Recomputes medians and all pairwise signed-rank tests.
void summarize(ComparisonReport& report);

struct DirectionalCheck {
  double essnet_mean = 0, source_only_mean = 0;
  double essnet_median = 0, two_stage_median = 0, oracle_median = 0;
  bool beats_source_only = false;  // mean gap >= 0.15
  bool beats_two_stage = false;    // median >= two_stage median
  bool near_oracle = false;        // |median gap| <= 0.05
  bool all() const { return beats_source_only && beats_two_stage && near_oracle; }
};

DirectionalCheck directional_check(const ComparisonReport& report);

}  // namespace essnet
