#include "essnet/png_export.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "essnet/errors.hpp"

namespace essnet {

std::uint8_t to_gray8(float value) {
  const double v = std::clamp((static_cast<double>(value) + 1.0) * 127.5, 0.0,
                              255.0);
  return static_cast<std::uint8_t>(std::lround(v));
}

std::uint8_t label_to_gray8(int id, int class_count) {
  if (class_count <= 1) return 0;
  return static_cast<std::uint8_t>(
      std::lround(255.0 * id / static_cast<double>(class_count - 1)));
}

namespace {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    throw ShapeError("png: pixel buffer does not match dimensions");
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: write failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Gray8 read_png_gray8(const std::filesystem::path& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: read failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  Gray8 out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("png: expected 8-bit greyscale in " + path.string());
  }
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y)
    png_read_row(png, out.pixels.data() + static_cast<std::size_t>(y) * out.width,
                 nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void export_png(const Image& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> px(image.pixels.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_gray8(image.pixels[i]);
  write_png_gray8(path, image.width, image.height, px);
}

void export_png(const LabelMap& labels, const std::filesystem::path& path) {
  std::vector<std::uint8_t> px(labels.ids.size());
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = label_to_gray8(labels.ids[i], labels.class_count);
  write_png_gray8(path, labels.width, labels.height, px);
}

}  // namespace essnet
