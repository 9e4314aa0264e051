#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "essnet/data.hpp"

namespace essnet {

/// Linear map [-1, 1] -> [0, 255], rounded and clamped.
std::uint8_t to_gray8(float value);

/// Class ID -> evenly spaced grey level.
std::uint8_t label_to_gray8(int id, int class_count);

void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels);

/// 8-bit grey values plus dimensions, read back from a PNG (tests, tools).
struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
Gray8 read_png_gray8(const std::filesystem::path& path);

void export_png(const Image& image, const std::filesystem::path& path);
void export_png(const LabelMap& labels, const std::filesystem::path& path);

}  // namespace essnet
