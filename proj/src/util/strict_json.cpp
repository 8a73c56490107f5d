// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/util/strict_json.hpp"

#include <algorithm>

namespace ssmdiff {

FieldReader::FieldReader(const Json& object, std::string section)
    : object_(object), section_(std::move(section)) {
  if (!object_.is_object() && !object_.is_null()) {
    throw ConfigError("section '" + section_ + "' must be an object");
  }
}

const Json& FieldReader::child(const std::string& key) {
  static const Json kEmpty = Json::object();
  known_.push_back(key);
  auto it = object_.find(key);
  return it == object_.end() ? kEmpty : *it;
}

void FieldReader::finish() const {
  if (!object_.is_object()) return;
  for (const auto& [key, _] : object_.items()) {
    if (std::find(known_.begin(), known_.end(), key) != known_.end()) continue;
    std::vector<std::string> valid = known_;
    std::sort(valid.begin(), valid.end());
    std::string list;
    for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
    throw ConfigError("unknown key '" + key + "' in section '" + section_ +
                      "'; valid keys: " + list);
  }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ssmdiff
