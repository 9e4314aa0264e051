#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "essnet/data.hpp"

namespace essnet {

/// 2|P n R| / (|P| + |R|) over binary masks (nonzero = foreground). Both
/// empty -> 1, exactly one empty -> 0.
double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> ref);

struct DiceResult {
  std::string image_id;
  std::vector<double> per_class;  // index = class ID, background included
  double mean_foreground = 0;

  double spleen() const { return per_class.at(kSpleen); }
};

/// Binary Dice per class in `classes` (default: all of 0..C-1), mean over
/// the foreground classes among them.
DiceResult dice_multiclass(const LabelMap& pred, const LabelMap& ref,
                           std::vector<int> classes = {},
                           std::string image_id = {});

}  // namespace essnet
