#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "hialign/errors.hpp"

namespace hialign::detail {

// Reads fields out of a JSON object while tracking their dotted path, so
// every config error names the exact field at fault.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + display(path_) + "' must be an object");
  }

  template <typename T>
  void required(const std::string& name, T& out) {
    if (!j_.contains(name)) throw ConfigError("config: missing required field '" + child(name) + "'");
    read(name, out);
  }

  template <typename T>
  bool optional(const std::string& name, T& out) {
    if (!j_.contains(name)) return false;
    read(name, out);
    return true;
  }

  const nlohmann::json* section(const std::string& name, bool required_section) {
    if (!j_.contains(name)) {
      if (required_section) throw ConfigError("config: missing required field '" + child(name) + "'");
      return nullptr;
    }
    seen_.insert(name);
    return &j_.at(name);
  }

  std::string child(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

  // Rejects keys that were never read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown field '" + child(key) + "'");
    }
  }

 private:
  static std::string display(const std::string& p) { return p.empty() ? "<root>" : p; }

  template <typename T>
  void read(const std::string& name, T& out) {
    seen_.insert(name);
    try {
      out = j_.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: field '" + child(name) + "' has the wrong type");
    }
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace hialign::detail
