#include "n2/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "n2/error.hpp"

namespace n2 {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'N', '2', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::string_view kParamPrefix = "param/";

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw DataError("checkpoint " + path.string() + ": truncated file");
  return v;
}

std::string get_string(std::istream& is, std::uint64_t len, const std::filesystem::path& path) {
  if (len > (1ull << 32)) throw DataError("checkpoint " + path.string() + ": corrupt length field");
  std::string s(len, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(len)))
    throw DataError("checkpoint " + path.string() + ": truncated file");
  return s;
}

}  // namespace

const Tensor* Archive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    const std::string meta = archive.meta.dump();
    put<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint64_t>(os, archive.tensors.size());
    for (const auto& [name, t] : archive.tensors) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
      for (auto d : t.shape()) put<std::int64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.values().data()),
               static_cast<std::streamsize>(t.values().size() * sizeof(Real)));
    }
    if (!os) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint " + path.string() + ": not an N2 checkpoint");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  Archive a;
  try {
    a.meta = nlohmann::json::parse(get_string(is, get<std::uint64_t>(is, path), path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": bad metadata: " + e.what());
  }
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is, get<std::uint32_t>(is, path), path);
    const auto ndim = get<std::uint32_t>(is, path);
    if (ndim > 8) throw DataError("checkpoint " + path.string() + ": corrupt tensor '" + name + "'");
    Shape shape(ndim);
    for (auto& d : shape) {
      d = get<std::int64_t>(is, path);
      if (d < 0) throw DataError("checkpoint " + path.string() + ": corrupt tensor '" + name + "'");
    }
    std::vector<Real> values(static_cast<std::size_t>(shape_numel(shape)));
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(Real))))
      throw DataError("checkpoint " + path.string() + ": truncated tensor '" + name + "'");
    a.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return a;
}

Archive network_archive(const N2Network& net, const nlohmann::json& extra) {
  Archive a;
  a.meta["model"] = net.config();
  if (!extra.is_null()) a.meta["extra"] = extra;
  for (const auto& [name, t] : net.params().entries())
    a.tensors.emplace_back(std::string(kParamPrefix) + name, t.detach());
  return a;
}

void save_checkpoint(const std::filesystem::path& path, const N2Network& net, const nlohmann::json& extra) {
  write_archive(path, network_archive(net, extra));
}

std::unique_ptr<N2Network> network_from_archive(const Archive& archive) {
  if (!archive.meta.contains("model")) throw DataError("checkpoint has no model config");
  ModelConfig cfg;
  try {
    cfg = archive.meta.at("model").get<ModelConfig>();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint model config: ") + e.what());
  }
  auto net = std::make_unique<N2Network>(cfg, 0);
  std::set<std::string> seen;
  for (const auto& [name, t] : archive.tensors) {
    if (name.rfind(kParamPrefix, 0) != 0) continue;
    const std::string pname = name.substr(kParamPrefix.size());
    if (!net->params().contains(pname))
      throw DataError("checkpoint tensor '" + pname + "' does not belong to the configured model");
    Tensor dst = net->params().get(pname);
    if (dst.shape() != t.shape())
      throw DataError("checkpoint tensor '" + pname + "' has shape " + shape_str(t.shape()) +
                      ", config implies " + shape_str(dst.shape()));
    std::copy(t.values().begin(), t.values().end(), dst.mutable_values().begin());
    seen.insert(pname);
  }
  for (const auto& [name, _] : net->params().entries())
    if (!seen.count(name)) throw DataError("checkpoint is missing parameter '" + name + "'");
  return net;
}

std::unique_ptr<N2Network> load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra) {
  const Archive a = read_archive(path);
  auto net = network_from_archive(a);
  if (extra) *extra = a.meta.value("extra", nlohmann::json{});
  return net;
}

}  // namespace n2
