#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "essnet/comparison.hpp"
#include "essnet/png_export.hpp"

namespace essnet {

inline constexpr int kMontageSeparator = 2;
inline constexpr std::uint8_t kSeparatorGray = 255;

/// One row of equally sized 8-bit tiles.
using MontageRow = std::vector<std::vector<std::uint8_t>>;

/// Lays tiles out on a grid with separator bands between rows and
/// columns: width = cols * tile_w + (cols - 1) * sep, likewise for height.
Gray8 compose_montage(const std::vector<MontageRow>& rows, int tile_height,
                      int tile_width, int separator = kMontageSeparator);

/// Columns: real B | synthesized B | predicted labels | reference labels.
/// A missing synthesized image becomes a mid-grey tile.
MontageRow montage_row(const Image& real, const Image* synthesized,
                       const LabelMap& predicted, const LabelMap& reference);

/// Indices of the lowest, median and highest scores (ties -> lowest index).
std::vector<std::size_t> representative_indices(const std::vector<double>& scores);

std::string results_csv(const ComparisonReport& report);
std::string stats_csv(const ComparisonReport& report);

/// results.csv, stats.csv and montage_<method>.png under out_dir.
void emit_report(const ComparisonReport& report, const std::filesystem::path& out_dir);

}  // namespace essnet
