#pragma once

#include <set>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "syncsim/errors.hpp"

namespace syncsim::detail {

// Reads optional fields from a JSON object and rejects keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& doc, std::string context)
      : doc_(doc), context_(std::move(context)) {
    if (!doc_.is_object() && !doc_.is_null()) throw ConfigError(context_ + ": expected an object");
  }

  template <class T>
  FieldReader& get(const std::string& key, T& out) {
    seen_.insert(key);
    if (doc_.is_null() || !doc_.contains(key)) return *this;
    try {
      out = doc_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return doc_.is_object() && doc_.contains(key);
  }

  const nlohmann::json& at(const std::string& key) const { return doc_.at(key); }

  void finish() const {
    if (!doc_.is_object()) return;
    for (const auto& item : doc_.items())
      if (!seen_.count(item.key())) throw ConfigError(context_ + ": unknown key '" + item.key() + "'");
  }

 private:
  const nlohmann::json& doc_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace syncsim::detail
