#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "poseflow/common.hpp"

namespace poseflow {

// Schema helpers that report violations with JSON-pointer paths.

inline const nlohmann::json& expect_object(const nlohmann::json& j, const std::string& ptr) {
  if (!j.is_object()) throw ConfigError(ptr, "expected object");
  return j;
}

inline const nlohmann::json& expect_field(const nlohmann::json& j, const std::string& ptr,
                                          const std::string& key) {
  expect_object(j, ptr);
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(ptr + "/" + key, "missing required field");
  return *it;
}

template <typename T>
T field_or(const nlohmann::json& j, const std::string& ptr, const std::string& key, T fallback) {
  if (!j.is_object()) throw ConfigError(ptr, "expected object");
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(ptr + "/" + key, std::string("wrong type, got ") + it->type_name());
  }
}

inline int positive_int(const nlohmann::json& j, const std::string& ptr, const std::string& key,
                        int fallback) {
  const int v = field_or<int>(j, ptr, key, fallback);
  if (v <= 0) throw ConfigError(ptr + "/" + key, "expected positive integer");
  return v;
}

inline double unit_fraction(const nlohmann::json& j, const std::string& ptr,
                            const std::string& key, double fallback) {
  const double v = field_or<double>(j, ptr, key, fallback);
  if (v < 0.0 || v > 1.0) throw ConfigError(ptr + "/" + key, "expected value in [0,1]");
  return v;
}

}  // namespace poseflow
