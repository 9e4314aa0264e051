#include "essnet/losses.hpp"

#include <cmath>

#include "essnet/errors.hpp"
#include "essnet/ops.hpp"

namespace essnet {

GanMode gan_mode_from_name(const std::string& name) {
  if (name == "non_saturating") return GanMode::kNonSaturating;
  if (name == "minimax") return GanMode::kMinimax;
  if (name == "least_squares") return GanMode::kLeastSquares;
  throw ConfigError("unknown gan_mode '" + name + "'");
}

const char* gan_mode_name(GanMode m) {
  switch (m) {
    case GanMode::kNonSaturating: return "non_saturating";
    case GanMode::kMinimax: return "minimax";
    case GanMode::kLeastSquares: return "least_squares";
  }
  return "?";
}

void LossWeights::validate() const {
  for (double w : {gan_ab, gan_ba, cycle_a, cycle_b, seg})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ConfigError("loss weights must be finite and >= 0");
}

bool LossReport::finite() const {
  for (double v : {gan_g1, gan_g2, cycle_a, cycle_b, seg, d1, d2, total})
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
Var<T> adversarial_loss_d(const Var<T>& real, const Var<T>& fake, GanMode mode) {
  if (mode == GanMode::kLeastSquares)
    return ops::weighted_sum<T>({{ops::mean_squared_to(real, T(1)), T(1)},
                                 {ops::mean_squared_to(fake, T(0)), T(1)}});
  // -log sigmoid(r) = softplus(-r); -log(1 - sigmoid(f)) = softplus(f).
  return ops::weighted_sum<T>({{ops::mean_softplus(real, T(-1)), T(1)},
                               {ops::mean_softplus(fake, T(1)), T(1)}});
}

template <typename T>
Var<T> adversarial_loss_g(const Var<T>& fake, GanMode mode) {
  switch (mode) {
    case GanMode::kNonSaturating:
      return ops::mean_softplus(fake, T(-1));
    case GanMode::kMinimax:
      return ops::weighted_sum<T>({{ops::mean_softplus(fake, T(1)), T(-1)}});
    case GanMode::kLeastSquares:
      return ops::mean_squared_to(fake, T(1));
  }
  throw ConfigError("unknown gan mode");
}

template <typename T>
Var<T> cycle_loss(const Var<T>& original, const Var<T>& reconstructed) {
  return ops::mean_abs_diff(reconstructed, original);
}

template <typename T>
Var<T> seg_loss_from_logits(const Var<T>& logits,
                            std::span<const std::uint8_t> labels,
                            SegReduction reduction) {
  if (reduction == SegReduction::kMean)
    return ops::softmax_cross_entropy(logits, labels, false);
  const T batch = T(logits->value.shape().n);
  return ops::weighted_sum<T>(
      {{ops::softmax_cross_entropy(logits, labels, true), T(1) / batch}});
}

double adversarial_loss_d(const Tensor<double>& real, const Tensor<double>& fake,
                          GanMode mode) {
  return adversarial_loss_d(constant(real), constant(fake), mode)->value[0];
}

double adversarial_loss_g(const Tensor<double>& fake, GanMode mode) {
  return adversarial_loss_g(constant(fake), mode)->value[0];
}

double cycle_loss(const Tensor<double>& original,
                  const Tensor<double>& reconstructed) {
  return cycle_loss(constant(original), constant(reconstructed))->value[0];
}

double seg_loss(const Tensor<double>& probs, std::span<const std::uint8_t> labels,
                SegReduction reduction) {
  const Shape s = probs.shape();
  const std::size_t plane = s.plane();
  if (labels.size() != static_cast<std::size_t>(s.n) * plane)
    throw ShapeError("seg_loss: label count does not match probability map " +
                     s.str());
  double total = 0;
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      const int label = labels[n * plane + p];
      if (label >= s.c)
        throw DataError("class ID " + std::to_string(label) +
                        " out of range for " + std::to_string(s.c) + " classes");
      total -= std::log(std::max(probs.plane(n, label)[p], 1e-300));
    }
  return reduction == SegReduction::kMean ? total / (s.n * double(plane))
                                          : total / s.n;
}

double total_loss(const LossReport& t, const LossWeights& w) {
  return w.gan_ab * t.gan_g1 + w.gan_ba * t.gan_g2 + w.cycle_a * t.cycle_a +
         w.cycle_b * t.cycle_b + w.seg * t.seg;
}

template <typename T>
GeneratorPass<T> generator_pass(const ModelSet<T>& models, const Tensor<T>& x,
                                std::span<const std::uint8_t> labels,
                                const Tensor<T>& y, const LossWeights& weights,
                                const LossOptions& options) {
  GeneratorPass<T> p;
  const Var<T> real_a = constant(x);
  const Var<T> real_b = constant(y);

  p.fake_b = models.g1.forward(real_a);
  p.rec_a = models.g2.forward(p.fake_b);
  p.fake_a = models.g2.forward(real_b);
  p.rec_b = models.g1.forward(p.fake_a);

  p.gan_g1 = adversarial_loss_g(models.d1.forward(p.fake_b), options.gan_mode);
  p.gan_g2 = adversarial_loss_g(models.d2.forward(p.fake_a), options.gan_mode);
  p.cycle_a = cycle_loss(real_a, p.rec_a);
  p.cycle_b = cycle_loss(real_b, p.rec_b);

  std::vector<std::pair<Var<T>, T>> terms{
      {p.gan_g1, T(weights.gan_ab)},
      {p.gan_g2, T(weights.gan_ba)},
      {p.cycle_a, T(weights.cycle_a)},
      {p.cycle_b, T(weights.cycle_b)}};
  if (models.s) {
    p.seg_logits = models.s->forward(p.fake_b);
    p.seg = seg_loss_from_logits(p.seg_logits, labels, options.seg_reduction);
    terms.emplace_back(p.seg, T(weights.seg));
  } else {
    p.seg = constant(Tensor<T>(Shape{}, T(0)));
  }
  p.total = ops::weighted_sum(terms);
  return p;
}

#define ESSNET_INSTANTIATE_LOSSES(T)                                          \
  template Var<T> adversarial_loss_d(const Var<T>&, const Var<T>&, GanMode);  \
  template Var<T> adversarial_loss_g(const Var<T>&, GanMode);                 \
  template Var<T> cycle_loss(const Var<T>&, const Var<T>&);                   \
  template Var<T> seg_loss_from_logits(                                       \
      const Var<T>&, std::span<const std::uint8_t>, SegReduction);            \
  template GeneratorPass<T> generator_pass(                                   \
      const ModelSet<T>&, const Tensor<T>&, std::span<const std::uint8_t>,    \
      const Tensor<T>&, const LossWeights&, const LossOptions&);

ESSNET_INSTANTIATE_LOSSES(float)
ESSNET_INSTANTIATE_LOSSES(double)

}  // namespace essnet
