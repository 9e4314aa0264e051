#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "essnet/tensor.hpp"

namespace essnet {

enum class Modality : std::uint8_t { A, B };

inline Modality other(Modality m) {
  return m == Modality::A ? Modality::B : Modality::A;
}
inline const char* modality_name(Modality m) {
  return m == Modality::A ? "A" : "B";
}

/// Class IDs double as paint order: a higher ID overwrites a lower one.
enum class Organ : std::uint8_t {
  kBackground = 0,
  kBody = 1,
  kLiver = 2,
  kStomach = 3,
  kLeftKidney = 4,
  kRightKidney = 5,
  kSpleen = 6,
};

inline constexpr int kClassCount = 7;
inline constexpr int kSpleen = static_cast<int>(Organ::kSpleen);

const char* class_name(int id);

/// Single-channel image with values in [-1, 1], row-major.
struct Image {
  int height = 0;
  int width = 0;
  Modality modality = Modality::A;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, Modality m, float fill = -1.0f)
      : height(h), width(w), modality(m),
        pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  /// Throws DataError on size mismatch or values outside [-1, 1].
  void validate() const;
  bool operator==(const Image&) const = default;
};

/// Per-pixel class IDs in [0, class_count).
struct LabelMap {
  int height = 0;
  int width = 0;
  int class_count = kClassCount;
  std::vector<std::uint8_t> ids;

  LabelMap() = default;
  LabelMap(int h, int w, int classes = kClassCount)
      : height(h), width(w), class_count(classes),
        ids(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return ids[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return ids[static_cast<std::size_t>(y) * width + x]; }

  void validate() const;
  bool operator==(const LabelMap&) const = default;
};

struct Ellipse {
  double cy = 0, cx = 0;  // centre, pixels
  double ry = 1, rx = 1;  // semi-axes, pixels
  double angle = 0;       // radians

  bool contains(double y, double x) const;
};

struct AnatomyConfig {
  int height = 64;
  int width = 64;
  /// Spleen enlargement factor range; > 1 models splenomegaly.
  double spleen_scale_min = 1.0;
  double spleen_scale_max = 1.8;
  /// Relative jitter applied to organ placement and size.
  double jitter = 1.0;
};

struct AnatomyLayout {
  int height = 0;
  int width = 0;
  /// Indexed by class ID - 1 (body first, spleen last).
  std::array<Ellipse, kClassCount - 1> organs{};
  double spleen_scale = 1.0;
  LabelMap labels;

  bool operator==(const AnatomyLayout& o) const;
};

/// Throws ConfigError unless H, W >= 32 and divisible by 4.
void validate_image_size(int height, int width);

AnatomyLayout sample_anatomy(std::uint64_t seed, const AnatomyConfig& config);

struct ModalityStyle {
  std::array<float, kClassCount> class_intensity{};
  double noise_sigma = 0.0;
  /// Amplitude of a smooth multiplicative field on (value + 1).
  double bias_amplitude = 0.0;
  /// Contrast exponent on the [0, 1]-rescaled intensity.
  double gamma = 1.0;
  Modality modality = Modality::A;

  static ModalityStyle a_like();
  static ModalityStyle b_like();
};

Image render_modality(const AnatomyLayout& layout, const ModalityStyle& style,
                      std::uint64_t seed);

/// A named collection of images with paired labels.
struct Split {
  std::string name;
  Modality modality = Modality::A;
  std::vector<Image> images;
  std::vector<LabelMap> labels;
  std::vector<std::uint64_t> anatomy_seeds;

  std::size_t size() const { return images.size(); }
};

/// Image split whose labels exist but are withheld: every read through
/// read_label() is counted, and training code must leave the count at 0.
class SequesteredSplit {
 public:
  SequesteredSplit() = default;
  explicit SequesteredSplit(Split split);

  const std::string& name() const { return split_.name; }
  Modality modality() const { return split_.modality; }
  const std::vector<Image>& images() const { return split_.images; }
  const std::vector<std::uint64_t>& anatomy_seeds() const {
    return split_.anatomy_seeds;
  }
  std::size_t size() const { return split_.size(); }

  /// Audited label access.
  const LabelMap& read_label(std::size_t i) const;
  std::size_t label_reads() const { return reads_->load(); }

 private:
  friend void save_sequestered(const std::filesystem::path&,
                               const SequesteredSplit&);
  Split split_;
  std::shared_ptr<std::atomic<std::size_t>> reads_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

struct SplitCounts {
  int a_train = 60;
  int a_val = 10;
  int b_train = 40;
  int b_oracle = 40;
  int b_val = 10;
  int b_test = 19;
};

struct DatasetConfig {
  AnatomyConfig anatomy;
  SplitCounts counts;
  ModalityStyle style_a = ModalityStyle::a_like();
  ModalityStyle style_b = ModalityStyle::b_like();
  std::uint64_t seed = 1;
};

/// a_train/a_val: labeled source modality. b_train: unlabeled target
/// modality (labels sequestered). b_oracle: a separately drawn labeled
/// target-modality split used only by the oracle baseline. b_val/b_test:
/// labeled target modality for model selection and evaluation.
struct DatasetBundle {
  DatasetConfig config;
  Split a_train;
  Split a_val;
  SequesteredSplit b_train;
  Split b_oracle;
  Split b_val;
  Split b_test;
};

DatasetBundle build_dataset(const DatasetConfig& config);

/// One epoch of unpaired draws: max(|A|, |B|) (a-index, b-index) pairs, each
/// side following its own shuffle with the shorter side cycled.
std::vector<std::pair<std::size_t, std::size_t>> unpaired_epoch(
    std::size_t a_count, std::size_t b_count, std::uint64_t seed, int epoch);

struct UnpairedBatch {
  Tensor<float> x;               // [N, 1, H, W], modality A
  std::vector<std::uint8_t> m;   // N * H * W labels for x
  Tensor<float> y;               // [N, 1, H, W], modality B
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

/// Batches of (x, m, y) for one epoch. b may be empty, in which case y is
/// left empty and the epoch length is |A|.
std::vector<UnpairedBatch> unpaired_batches(const Split& a,
                                            const std::vector<Image>& b,
                                            std::uint64_t seed, int epoch,
                                            int batch_size);

Tensor<float> to_tensor(const Image& image);
Tensor<float> to_tensor(const std::vector<const Image*>& images);
Image to_image(const Tensor<float>& t, int n, Modality modality);

}  // namespace essnet
