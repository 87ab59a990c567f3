#pragma once

#include <cstdint>
#include <vector>

namespace n2 {

/// Point in pixel coordinates: x along columns, y along rows; pixel (r, c)
/// has its center at (c, r).
struct Point2 {
  double x = 0;
  double y = 0;
};

using Polygon = std::vector<Point2>;

/// Even-odd scanline fill of closed polygons onto an (h, w) grid. A pixel is
/// set when a ray from its center toward +x crosses the union of all polygon
/// edges an odd number of times, so nested contours produce holes. Edges
/// count on the half-open span min(y0, y1) <= y < max(y0, y1).
std::vector<std::uint8_t> rasterize_even_odd(const std::vector<Polygon>& polygons, std::int64_t h,
                                             std::int64_t w);

}  // namespace n2
