#include "n2/data/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "n2/error.hpp"

namespace n2 {

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

namespace fs = std::filesystem;

bool VolumeRecord::present(std::int64_t c, std::int64_t z) const {
  const auto begin = masks.begin() + static_cast<std::ptrdiff_t>((c * depth + z) * slice_size());
  return std::any_of(begin, begin + static_cast<std::ptrdiff_t>(slice_size()), [](std::uint8_t v) { return v != 0; });
}

void VolumeRecord::validate() const {
  if (depth < 1 || height < 1 || width < 1)
    throw DataError("volume '" + subject_id + "': empty geometry");
  const auto n = static_cast<std::size_t>(depth * height * width);
  if (image.size() != n)
    throw DataError("volume '" + subject_id + "': image has " + std::to_string(image.size()) +
                    " voxels, geometry implies " + std::to_string(n));
  if (masks.size() != n * class_names.size())
    throw DataError("volume '" + subject_id + "': masks have " + std::to_string(masks.size()) +
                    " voxels, expected " + std::to_string(n * class_names.size()));
  for (auto v : masks)
    if (v > 1) throw DataError("volume '" + subject_id + "': masks must be binary");
}

void save_volume(const fs::path& dir, const VolumeRecord& v) {
  v.validate();
  fs::create_directories(dir);
  {
    std::vector<float> f(v.image.begin(), v.image.end());
    std::ofstream os(dir / "image.f32", std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!os) throw DataError("cannot write " + (dir / "image.f32").string());
  }
  {
    std::ofstream os(dir / "masks.u8", std::ios::binary | std::ios::trunc);
    os.write(reinterpret_cast<const char*>(v.masks.data()), static_cast<std::streamsize>(v.masks.size()));
    if (!os) throw DataError("cannot write " + (dir / "masks.u8").string());
  }
  nlohmann::json j;
  j["subject_id"] = v.subject_id;
  j["shape"] = {v.depth, v.height, v.width};
  j["spacing"] = v.spacing;
  j["class_names"] = v.class_names;
  j["image_dtype"] = "float32-le";
  j["mask_dtype"] = "uint8";
  j["source"] = v.source;
  std::ofstream os(dir / "volume.json", std::ios::trunc);
  os << j.dump(2) << "\n";
  if (!os) throw DataError("cannot write " + (dir / "volume.json").string());
}

namespace {

std::vector<char> read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

VolumeRecord load_volume(const fs::path& dir) {
  const auto meta_path = dir / "volume.json";
  if (!fs::exists(meta_path)) throw DataError("no volume at " + dir.string() + " (missing volume.json)");
  nlohmann::json j;
  try {
    std::ifstream is(meta_path);
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + meta_path.string() + ": " + e.what());
  }
  VolumeRecord v;
  try {
    v.subject_id = j.at("subject_id").get<std::string>();
    const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 3) throw DataError(meta_path.string() + ": shape must have 3 entries");
    v.depth = shape[0];
    v.height = shape[1];
    v.width = shape[2];
    v.spacing = j.at("spacing").get<std::array<double, 3>>();
    v.class_names = j.at("class_names").get<std::vector<std::string>>();
    v.source = j.value("source", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  const auto n = static_cast<std::size_t>(v.depth * v.height * v.width);
  const auto raw = read_file(dir / "image.f32");
  if (raw.size() != n * sizeof(float))
    throw DataError((dir / "image.f32").string() + ": expected " + std::to_string(n * sizeof(float)) + " bytes, found " +
                    std::to_string(raw.size()));
  std::vector<float> f(n);
  std::memcpy(f.data(), raw.data(), raw.size());
  v.image.assign(f.begin(), f.end());
  const auto m = read_file(dir / "masks.u8");
  if (m.size() != n * v.class_names.size())
    throw DataError((dir / "masks.u8").string() + ": expected " + std::to_string(n * v.class_names.size()) +
                    " bytes, found " + std::to_string(m.size()));
  v.masks.assign(m.begin(), m.end());
  v.validate();
  return v;
}

VolumeRecord resample_slices(const VolumeRecord& v, std::int64_t out_h, std::int64_t out_w) {
  if (out_h == v.height && out_w == v.width) return v;
  VolumeRecord r = v;
  r.height = out_h;
  r.width = out_w;
  r.spacing[1] = v.spacing[1] * static_cast<double>(v.height) / static_cast<double>(out_h);
  r.spacing[2] = v.spacing[2] * static_cast<double>(v.width) / static_cast<double>(out_w);
  r.image.assign(static_cast<std::size_t>(v.depth * out_h * out_w), 0.0);
  r.masks.assign(static_cast<std::size_t>(v.num_classes() * v.depth * out_h * out_w), 0);
  const double sy = static_cast<double>(v.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(v.width) / static_cast<double>(out_w);
  for (std::int64_t z = 0; z < v.depth; ++z)
    for (std::int64_t y = 0; y < out_h; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(v.height - 1));
      const auto y0 = static_cast<std::int64_t>(fy);
      const auto y1 = std::min(y0 + 1, v.height - 1);
      const double wy = fy - static_cast<double>(y0);
      const auto ny = std::min(static_cast<std::int64_t>((static_cast<double>(y) + 0.5) * sy), v.height - 1);
      for (std::int64_t x = 0; x < out_w; ++x) {
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(v.width - 1));
        const auto x0 = static_cast<std::int64_t>(fx);
        const auto x1 = std::min(x0 + 1, v.width - 1);
        const double wx = fx - static_cast<double>(x0);
        r.voxel(z, y, x) = (1 - wy) * ((1 - wx) * v.voxel(z, y0, x0) + wx * v.voxel(z, y0, x1)) +
                           wy * ((1 - wx) * v.voxel(z, y1, x0) + wx * v.voxel(z, y1, x1));
        const auto nx = std::min(static_cast<std::int64_t>((static_cast<double>(x) + 0.5) * sx), v.width - 1);
        for (std::int64_t c = 0; c < v.num_classes(); ++c) r.mask(c, z, y, x) = v.mask(c, z, ny, nx);
      }
    }
  return r;
}

VolumeRecord select_classes(const VolumeRecord& v, const std::vector<std::string>& names,
                            std::vector<std::string>* missing) {
  VolumeRecord r = v;
  r.class_names = names;
  const auto plane = static_cast<std::size_t>(v.depth * v.slice_size());
  r.masks.assign(plane * names.size(), 0);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = std::find(v.class_names.begin(), v.class_names.end(), names[i]);
    if (it == v.class_names.end()) {
      if (missing) missing->push_back(names[i]);
      continue;
    }
    const auto src = static_cast<std::size_t>(it - v.class_names.begin());
    std::copy_n(v.masks.begin() + static_cast<std::ptrdiff_t>(src * plane), plane,
                r.masks.begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return r;
}

}  // namespace n2
