// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ssmdiff {

using Json = nlohmann::json;

/// Invalid or unknown configuration content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads one JSON object section, rejecting keys nobody asked for.
///
///   FieldReader r(j, "model");
///   r.read("channels", cfg.channels);
///   r.finish();  // throws ConfigError listing the valid keys
class FieldReader {
 public:
  FieldReader(const Json& object, std::string section);

  template <typename T>
  FieldReader& read(const std::string& key, T& field) {
    known_.push_back(key);
    auto it = object_.find(key);
    if (it == object_.end()) return *this;
    try {
      field = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  /// Sub-object for nested sections; missing keys yield an empty object.
  const Json& child(const std::string& key);

  void finish() const;

 private:
  const Json& object_;
  std::string section_;
  std::vector<std::string> known_;
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace ssmdiff
