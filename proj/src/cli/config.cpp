#include "n2/cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include <toml.hpp>

#include "n2/error.hpp"

namespace n2::cli {

namespace {

nlohmann::json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    auto out = nlohmann::json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    auto out = nlohmann::json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw ConfigError("unsupported TOML value type (dates and times are not config values)");
}

bool compatible(const nlohmann::json& def, const nlohmann::json& value) {
  if (def.is_null() || value.is_null()) return true;
  if (def.is_number() && value.is_number()) return true;
  return def.type() == value.type();
}

}  // namespace

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  try {
    if (path.extension() == ".json") {
      auto j = nlohmann::json::parse(is);
      if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold an object at the top level");
      return j;
    }
    return toml_to_json(toml::parse(is, path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config file " << path.string() << ": " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
}

void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) throw ConfigError("config section '" + prefix + "' must be a mapping");
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, path);
    } else {
      if (!compatible(slot, value))
        throw ConfigError("config key '" + path + "' expects a " + std::string(slot.type_name()) + ", got " +
                          value.dump());
      slot = value;
    }
  }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  // Build {"a": {"b": value}} and merge, so overrides get the same checks.
  nlohmann::json overlay = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    overlay = nlohmann::json{{part, overlay}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge_config(config, overlay);
}

std::vector<std::string> describe_keys(const nlohmann::json& defaults) {
  std::vector<std::string> out;
  const std::function<void(const nlohmann::json&, const std::string&)> walk = [&](const nlohmann::json& j,
                                                                                  const std::string& prefix) {
    for (const auto& [key, value] : j.items()) {
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      if (value.is_object()) walk(value, path);
      else out.push_back(path + " (default " + value.dump() + ")");
    }
  };
  walk(defaults, "");
  return out;
}

}  // namespace n2::cli
