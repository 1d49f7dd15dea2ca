// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

#include "smtl/error.hpp"

namespace smtl::jsonu {

using nlohmann::json;

inline void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
}

/// Rejects keys outside `allowed`.
inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  require_object(j, where);
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_as(const json& v, std::string_view where, std::string_view key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + ": field '" + std::string(key) + "' has the wrong type");
  }
}

template <class T>
T required(const json& j, std::string_view key, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ConfigError(std::string(where) + ": missing required field '" + std::string(key) + "'");
  }
  return get_as<T>(*it, where, key);
}

template <class T>
T optional(const json& j, std::string_view key, T fallback, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return get_as<T>(*it, where, key);
}

}  // namespace smtl::jsonu
