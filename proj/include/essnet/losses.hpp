#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "essnet/autograd.hpp"
#include "essnet/networks.hpp"

namespace essnet {

/// Generator-side adversarial term. Non-saturating: -mean log sigmoid(s).
/// Minimax: mean log(1 - sigmoid(s)), the literal form. Least squares:
/// mean (s - 1)^2 with the matching discriminator loss.
enum class GanMode : std::uint8_t { kNonSaturating, kMinimax, kLeastSquares };
GanMode gan_mode_from_name(const std::string& name);
const char* gan_mode_name(GanMode m);

/// Segmentation loss reduction over pixels.
enum class SegReduction : std::uint8_t { kMean, kSum };

struct LossWeights {
  double gan_ab = 1.0;   // lambda_1, G1 / D1
  double gan_ba = 1.0;   // lambda_2, G2 / D2
  double cycle_a = 10.0; // lambda_3
  double cycle_b = 10.0; // lambda_4
  double seg = 1.0;      // lambda_5

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct LossOptions {
  GanMode gan_mode = GanMode::kNonSaturating;
  SegReduction seg_reduction = SegReduction::kMean;
};

struct LossReport {
  double gan_g1 = 0;
  double gan_g2 = 0;
  double cycle_a = 0;
  double cycle_b = 0;
  double seg = 0;
  double d1 = 0;
  double d2 = 0;
  double total = 0;

  bool finite() const;
};

// ---- differentiable forms -------------------------------------------------

/// -[mean log sigmoid(real) + mean log(1 - sigmoid(fake))] (log modes) or
/// mean (real - 1)^2 + mean fake^2 (least squares).
template <typename T>
Var<T> adversarial_loss_d(const Var<T>& scores_real, const Var<T>& scores_fake,
                          GanMode mode = GanMode::kNonSaturating);

template <typename T>
Var<T> adversarial_loss_g(const Var<T>& scores_fake,
                          GanMode mode = GanMode::kNonSaturating);

/// Mean absolute difference.
template <typename T>
Var<T> cycle_loss(const Var<T>& original, const Var<T>& reconstructed);

/// -log p(true class) from segmenter logits, averaged over pixels (mean) or
/// summed over pixels (sum); always averaged over the batch.
template <typename T>
Var<T> seg_loss_from_logits(const Var<T>& logits,
                            std::span<const std::uint8_t> labels,
                            SegReduction reduction = SegReduction::kMean);

// ---- value forms ----------------------------------------------------------

double adversarial_loss_d(const Tensor<double>& scores_real,
                          const Tensor<double>& scores_fake,
                          GanMode mode = GanMode::kNonSaturating);
double adversarial_loss_g(const Tensor<double>& scores_fake,
                          GanMode mode = GanMode::kNonSaturating);
double cycle_loss(const Tensor<double>& original,
                  const Tensor<double>& reconstructed);
/// probs is [N, C, H, W] with per-pixel distributions.
double seg_loss(const Tensor<double>& probs, std::span<const std::uint8_t> labels,
                SegReduction reduction = SegReduction::kMean);

/// lambda-weighted sum of the five generator-side terms of `terms`.
double total_loss(const LossReport& terms, const LossWeights& weights);

// ---- full generator-side objective ----------------------------------------

template <typename T>
struct GeneratorPass {
  Var<T> fake_b, rec_a, fake_a, rec_b, seg_logits;
  Var<T> gan_g1, gan_g2, cycle_a, cycle_b, seg, total;
};

/// Path A: x -> G1 -> {S, G2}; Path B: y -> G2 -> G1. Discriminators score
/// the fakes; whether their parameters collect gradients is up to the
/// caller. Without a segmenter the seg term is a constant 0.
template <typename T>
GeneratorPass<T> generator_pass(const ModelSet<T>& models, const Tensor<T>& x,
                                std::span<const std::uint8_t> labels,
                                const Tensor<T>& y, const LossWeights& weights,
                                const LossOptions& options);

}  // namespace essnet
