#include "essnet/report.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "essnet/dataset_io.hpp"
#include "essnet/errors.hpp"

namespace essnet {

namespace fs = std::filesystem;

Gray8 compose_montage(const std::vector<MontageRow>& rows, int tile_height,
                      int tile_width, int separator) {
  if (rows.empty() || rows[0].empty()) throw DataError("montage: no tiles");
  const int cols = static_cast<int>(rows[0].size());
  const int n_rows = static_cast<int>(rows.size());
  Gray8 out;
  out.width = cols * tile_width + (cols - 1) * separator;
  out.height = n_rows * tile_height + (n_rows - 1) * separator;
  out.pixels.assign(static_cast<std::size_t>(out.width) * out.height, kSeparatorGray);
  const std::size_t tile_px = static_cast<std::size_t>(tile_height) * tile_width;
  for (int r = 0; r < n_rows; ++r) {
    if (static_cast<int>(rows[r].size()) != cols)
      throw DataError("montage: ragged rows");
    for (int c = 0; c < cols; ++c) {
      const auto& tile = rows[r][c];
      if (tile.size() != tile_px) throw ShapeError("montage: tile size mismatch");
      const int y0 = r * (tile_height + separator), x0 = c * (tile_width + separator);
      for (int y = 0; y < tile_height; ++y)
        std::copy_n(tile.data() + static_cast<std::size_t>(y) * tile_width, tile_width,
                    out.pixels.data() + static_cast<std::size_t>(y0 + y) * out.width + x0);
    }
  }
  return out;
}

namespace {

std::vector<std::uint8_t> gray(const Image& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), out.begin(), to_gray8);
  return out;
}

std::vector<std::uint8_t> gray(const LabelMap& lab) {
  std::vector<std::uint8_t> out(lab.ids.size());
  std::transform(lab.ids.begin(), lab.ids.end(), out.begin(),
                 [&](std::uint8_t id) { return label_to_gray8(id, lab.class_count); });
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

MontageRow montage_row(const Image& real, const Image* synthesized,
                       const LabelMap& predicted, const LabelMap& reference) {
  MontageRow row;
  row.push_back(gray(real));
  if (synthesized)
    row.push_back(gray(*synthesized));
  else
    row.emplace_back(real.pixels.size(), std::uint8_t{128});
  row.push_back(gray(predicted));
  row.push_back(gray(reference));
  return row;
}

std::vector<std::size_t> representative_indices(const std::vector<double>& scores) {
  if (scores.empty()) throw DataError("montage: no scores");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return {order.front(), order[(order.size() - 1) / 2], order.back()};
}

std::string results_csv(const ComparisonReport& report) {
  std::string out = "method,image_id,class_id,class_name,dice\n";
  for (const auto& m : report.methods)
    for (std::size_t i = 0; i < m.per_image.size(); ++i)
      for (std::size_t c = 0; c < m.per_image[i].per_class.size(); ++c)
        out += m.name + "," + report.image_ids.at(i) + "," + std::to_string(c) + "," +
               class_name(static_cast<int>(c)) + "," + fmt(m.per_image[i].per_class[c]) +
               "\n";
  return out;
}

std::string stats_csv(const ComparisonReport& report) {
  std::string out;
  out += "# spleen Dice on " + std::to_string(report.image_ids.size()) +
         " test images, seed " + std::to_string(report.seed) + ", " +
         std::to_string(report.epochs) + " epochs\n";
  out += "# published reference medians (clinical cohorts, not reproducible here):";
  for (const auto& r : kReferenceMedians)
    out += std::string(" ") + r.method + "=" + fmt(r.median_dice).substr(0, 6) + ";";
  out += "\n";
  out += "row,method,other,n,median,mean,w,p_value,exact,significant\n";
  for (const auto& m : report.methods)
    out += "method," + m.name + ",," + std::to_string(m.spleen.size()) + "," +
           fmt(m.median) + "," + fmt(m.mean) + ",,,,\n";
  for (const auto& p : report.pairs) {
    out += "pair," + p.a + "," + p.b + ",";
    if (p.outcome) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%zu,,,%.1f,%.6g,%d,%d\n", p.outcome->n, p.outcome->w,
                    p.outcome->p_value, p.outcome->exact ? 1 : 0,
                    p.outcome->significant ? 1 : 0);
      out += buf;
    } else {
      out += "0,,,,,,0\n";
    }
  }
  return out;
}

void emit_report(const ComparisonReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "results.csv", results_csv(report));
  write_text(out_dir / "stats.csv", stats_csv(report));
  if (report.test_images.empty()) return;
  const int h = report.test_images[0].height, w = report.test_images[0].width;
  for (const auto& m : report.methods) {
    std::vector<MontageRow> rows;
    for (std::size_t i : representative_indices(m.spleen))
      rows.push_back(montage_row(report.test_images[i],
                                 m.synthesized.empty() ? nullptr : &m.synthesized[i],
                                 m.predictions.at(i), report.test_labels[i]));
    const Gray8 g = compose_montage(rows, h, w);
    write_png_gray8(out_dir / ("montage_" + m.name + ".png"), g.width, g.height, g.pixels);
  }
}

}  // namespace essnet
