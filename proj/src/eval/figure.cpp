#include "n2/eval/figure.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "n2/error.hpp"

namespace n2 {

namespace {

constexpr int kMarginLeft = 56, kMarginRight = 16, kMarginTop = 16, kMarginBottom = 32;

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> rgb;
  Canvas(int w_, int h_) : w(w_), h(h_), rgb(static_cast<std::size_t>(w_ * h_ * 3), 255) {}
  void put(int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    std::copy(c.begin(), c.end(), rgb.begin() + (static_cast<std::ptrdiff_t>(y) * w + x) * 3);
  }
  void line(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c, int thick = 1) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      for (int ox = 0; ox < thick; ++ox)
        for (int oy = 0; oy < thick; ++oy) put(x0 + ox, y0 + oy, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }
};

struct Frame {
  int width, height;
  double y_min, y_max;
  std::size_t n;
  double px(std::size_t i) const {
    const double span = static_cast<double>(width - kMarginLeft - kMarginRight);
    return kMarginLeft + (n > 1 ? span * static_cast<double>(i) / static_cast<double>(n - 1) : span / 2);
  }
  double py(double v) const {
    const double t = (std::clamp(v, y_min, y_max) - y_min) / (y_max - y_min);
    return kMarginTop + (1.0 - t) * static_cast<double>(height - kMarginTop - kMarginBottom);
  }
};

Frame frame_for(const std::vector<Series>& series, double y_min, double y_max, int width, int height) {
  if (!(y_max > y_min)) throw ConfigError("chart needs y_max > y_min");
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.y.size());
  return {width, height, y_min, y_max, n};
}

std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_line_chart_png(const std::filesystem::path& path, const std::vector<Series>& series, double y_min,
                          double y_max, int width, int height) {
  const auto f = frame_for(series, y_min, y_max, width, height);
  Canvas cv(width, height);
  for (int q = 0; q <= 4; ++q) {
    const int y = static_cast<int>(std::lround(f.py(y_min + (y_max - y_min) * q / 4.0)));
    cv.line(kMarginLeft, y, width - kMarginRight, y, {220, 220, 220});
  }
  cv.line(kMarginLeft, kMarginTop, kMarginLeft, height - kMarginBottom, {0, 0, 0});
  cv.line(kMarginLeft, height - kMarginBottom, width - kMarginRight, height - kMarginBottom, {0, 0, 0});
  for (const auto& s : series)
    for (std::size_t i = 1; i < s.y.size(); ++i)
      cv.line(static_cast<int>(std::lround(f.px(i - 1))), static_cast<int>(std::lround(f.py(s.y[i - 1]))),
              static_cast<int>(std::lround(f.px(i))), static_cast<int>(std::lround(f.py(s.y[i]))), s.rgb, 2);

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw DataError("cannot write figure " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) png_write_row(png, cv.rgb.data() + static_cast<std::ptrdiff_t>(y) * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_line_chart_svg(const std::filesystem::path& path, const std::vector<Series>& series, double y_min,
                          double y_max, const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<std::size_t>& separators) {
  const int width = 960, height = 420;
  const auto f = frame_for(series, y_min, y_max, width, height);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write figure " + path.string());
  char buf[160];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + 40
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"14\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
  os << "<g transform=\"translate(0,20)\">\n";
  for (int q = 0; q <= 4; ++q) {
    const double v = y_min + (y_max - y_min) * q / 4.0;
    std::snprintf(buf, sizeof buf, "<line x1=\"%d\" x2=\"%d\" y1=\"%.2f\" y2=\"%.2f\" stroke=\"#ddd\"/>", kMarginLeft,
                  width - kMarginRight, f.py(v), f.py(v));
    os << buf << "\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%.2f\" text-anchor=\"end\">%.2f</text>", kMarginLeft - 6,
                  f.py(v) + 4, v);
    os << buf << "\n";
  }
  for (std::size_t s : separators) {
    std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" x2=\"%.2f\" y1=\"%d\" y2=\"%d\" stroke=\"#bbb\" stroke-dasharray=\"3,3\"/>",
                  f.px(s) - 0.5, f.px(s) - 0.5, kMarginTop, height - kMarginBottom);
    os << buf << "\n";
  }
  for (const auto& s : series) {
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", s.rgb[0], s.rgb[1], s.rgb[2]);
    os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << buf << "\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", f.px(i), f.py(s.y[i]));
      os << buf;
    }
    os << "\"/>\n";
  }
  os << "<line x1=\"" << kMarginLeft << "\" x2=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" y2=\""
     << height - kMarginBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kMarginLeft << "\" x2=\"" << width - kMarginRight << "\" y1=\"" << height - kMarginBottom
     << "\" y2=\"" << height - kMarginBottom << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 8 << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(14," << height / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label)
     << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", s.rgb[0], s.rgb[1], s.rgb[2]);
    const int y = kMarginTop + 12 + static_cast<int>(k) * 16;
    os << "<line x1=\"" << width - 220 << "\" x2=\"" << width - 196 << "\" y1=\"" << y - 4 << "\" y2=\"" << y - 4
       << "\" stroke=\"" << buf << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << width - 190 << "\" y=\"" << y << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</g>\n</svg>\n";
}

}  // namespace n2
