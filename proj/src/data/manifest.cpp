#include "n2/data/manifest.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "n2/error.hpp"

namespace n2 {

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : subjects)
    if (e.split == name) out.push_back(e);
  return out;
}

std::vector<VolumeRecord> Manifest::load_split(const std::string& name) const {
  std::vector<VolumeRecord> out;
  for (const auto& e : split(name)) {
    auto v = load_volume(base_dir / e.path);
    if (v.subject_id != e.subject_id)
      throw DataError("manifest subject '" + e.subject_id + "' points at volume '" + v.subject_id + "'");
    if (!class_names.empty() && v.class_names != class_names)
      throw DataError("subject '" + e.subject_id + "' has a different class list than the manifest");
    out.push_back(std::move(v));
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["class_names"] = m.class_names;
  auto& subjects = j["subjects"] = nlohmann::json::array();
  for (const auto& e : m.subjects) subjects.push_back({{"id", e.subject_id}, {"path", e.path}, {"split", e.split}});
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  os << j.dump(2) << "\n";
  if (!os) throw DataError("cannot write manifest " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    const auto j = nlohmann::json::parse(is);
    if (j.value("version", 0) != 1) throw DataError("manifest " + path.string() + ": unsupported version");
    m.class_names = j.value("class_names", std::vector<std::string>{});
    std::set<std::string> seen;
    for (const auto& s : j.at("subjects")) {
      ManifestEntry e{s.at("id").get<std::string>(), s.at("path").get<std::string>(), s.at("split").get<std::string>()};
      if (e.split != "train" && e.split != "val" && e.split != "test")
        throw DataError("manifest " + path.string() + ": subject '" + e.subject_id + "' has unknown split '" + e.split + "'");
      if (!seen.insert(e.subject_id).second)
        throw DataError("manifest " + path.string() + ": duplicate subject '" + e.subject_id + "'");
      m.subjects.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

std::vector<std::string> assign_splits(std::size_t n, double val_fraction, double test_fraction) {
  if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction >= 1)
    throw ConfigError("split fractions must be >= 0 and sum below 1");
  const auto test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * test_fraction));
  const auto val = static_cast<std::size_t>(std::lround(static_cast<double>(n) * val_fraction));
  if (test + val >= n && n > 0) throw ConfigError("split fractions leave no training subjects");
  std::vector<std::string> out(n, "train");
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= n - test) out[i] = "test";
    else if (i >= n - test - val) out[i] = "val";
  }
  return out;
}

}  // namespace n2
