#include "n2/data/raster.hpp"

#include <algorithm>
#include <cmath>

namespace n2 {

std::vector<std::uint8_t> rasterize_even_odd(const std::vector<Polygon>& polygons, std::int64_t h, std::int64_t w) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h * w), 0);
  std::vector<double> xs;
  for (std::int64_t r = 0; r < h; ++r) {
    const double y = static_cast<double>(r);
    xs.clear();
    for (const auto& poly : polygons) {
      const std::size_t n = poly.size();
      if (n < 3) continue;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& a = poly[i];
        const Point2& b = poly[j];
        if ((a.y > y) != (b.y > y)) xs.push_back((b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x);
      }
    }
    std::sort(xs.begin(), xs.end());
    // Pixel c is inside iff an odd number of crossings lie strictly right of
    // it, i.e. iff it falls in [xs[2k], xs[2k+1]) for some k.
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const double lo = std::max(std::ceil(xs[k]), 0.0);
      for (auto c = static_cast<std::int64_t>(lo); c < w && static_cast<double>(c) < xs[k + 1]; ++c)
        out[static_cast<std::size_t>(r * w + c)] = 1;
    }
  }
  return out;
}

}  // namespace n2
