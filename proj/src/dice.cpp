#include "essnet/dice.hpp"

#include <numeric>

#include "essnet/errors.hpp"

namespace essnet {

double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref) {
  if (pred.size() != ref.size())
    throw ShapeError("dice: mask sizes differ (" + std::to_string(pred.size()) +
                     " vs " + std::to_string(ref.size()) + ")");
  std::size_t p = 0, r = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = ref[i] != 0;
    p += a;
    r += b;
    both += a && b;
  }
  if (p + r == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + r);
}

DiceResult dice_multiclass(const LabelMap& pred, const LabelMap& ref,
                           std::vector<int> classes, std::string image_id) {
  if (pred.height != ref.height || pred.width != ref.width ||
      pred.ids.size() != ref.ids.size())
    throw ShapeError("dice_multiclass: label maps differ in shape");
  const int c_count = std::max(pred.class_count, ref.class_count);
  if (classes.empty()) {
    classes.resize(c_count);
    std::iota(classes.begin(), classes.end(), 0);
  }
  DiceResult out;
  out.image_id = std::move(image_id);
  out.per_class.assign(c_count, 0.0);
  std::vector<std::uint8_t> pm(pred.ids.size()), rm(ref.ids.size());
  double fg_sum = 0;
  int fg_count = 0;
  for (int c : classes) {
    if (c < 0 || c >= c_count)
      throw DataError("dice_multiclass: class " + std::to_string(c) +
                      " out of range");
    for (std::size_t i = 0; i < pm.size(); ++i) {
      pm[i] = pred.ids[i] == c;
      rm[i] = ref.ids[i] == c;
    }
    out.per_class[c] = dice(pm, rm);
    if (c != 0) {
      fg_sum += out.per_class[c];
      ++fg_count;
    }
  }
  out.mean_foreground = fg_count ? fg_sum / fg_count : 0.0;
  return out;
}

}  // namespace essnet
