#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rolldrop::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::vector<double> band_lo, band_hi;  // optional shaded band, same length as x
  bool markers = false;                  // one <circle> per point
  bool step = false;                     // draw as a step function
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  int width = 640;
  int height = 400;
};

// Self-contained SVG documents. Output depends only on the inputs.
std::string line_plot(const PlotSpec& spec, const std::vector<Series>& series);
std::string histogram_plot(const PlotSpec& spec, const std::vector<double>& edges,
                           const std::vector<double>& counts);

void write_svg(const std::filesystem::path& path, const std::string& doc);

// Picks the plot type from the CSV header:
//   train_record.csv          -> <stem>_sigma.svg, <stem>_reward.svg
//   sweep (success_rate)      -> <stem>.svg
//   multi-seed curves         -> <stem>.svg
//   distributions_hist.csv    -> <stem>_<channel>.svg
//   distributions_mean.csv    -> <stem>.svg
// Returns the files written. Malformed CSV raises ParseError with the line.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& csv,
                                              const std::filesystem::path& out_dir);

}  // namespace rolldrop::svg
