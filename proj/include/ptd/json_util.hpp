#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "ptd/error.hpp"

namespace ptd {

/// Rejects any key of `j` outside `allowed`.
inline void require_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                               std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto key : allowed) ok = ok || item.key() == key;
    if (!ok) throw ConfigError(std::string(context) + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
T get_required(const nlohmann::json& j, const char* key, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string(context) + ": missing key '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(context) + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace ptd
