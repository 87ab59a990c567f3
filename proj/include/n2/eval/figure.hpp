#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace n2 {

struct Series {
  std::string name;
  std::vector<double> y;
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
};

/// Line chart of series over a shared index axis, y clamped to [y_min, y_max].
/// The PNG carries axes, gridlines and series only; the SVG adds the title,
/// axis labels and legend.
void write_line_chart_png(const std::filesystem::path& path, const std::vector<Series>& series, double y_min,
                          double y_max, int width = 960, int height = 420);
void write_line_chart_svg(const std::filesystem::path& path, const std::vector<Series>& series, double y_min,
                          double y_max, const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<std::size_t>& separators = {});

}  // namespace n2
