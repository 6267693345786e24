#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "lgdf/core/error.hpp"

namespace lgdf::cli {

/// Read access to one JSON object of the run config. Every key that is read
/// is recorded; finish() rejects the rest, so a misspelt key is an error
/// rather than a silently ignored setting. Errors name the dotted field path.
class Block {
 public:
  Block(const nlohmann::json& j, std::string path);

  const std::string& path() const { return path_; }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), field(key));
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(field(key) + ": required");
    return convert<T>(j_.at(key), field(key));
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return convert<T>(j_.at(key), field(key));
  }

  /// Nested object; a missing key yields an empty block.
  Block child(const std::string& key);
  const nlohmann::json& raw(const std::string& key);

  Eigen::VectorXd vector(const std::string& key);
  /// Array of equal-length rows, returned as rows x cols.
  Eigen::MatrixXd matrix(const std::string& key);

  /// Throws ConfigError listing every key that was never read.
  void finish() const;

  template <class T>
  static T convert(const nlohmann::json& v, const std::string& field) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field + ": expected true or false");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(field + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
          throw ConfigError(field + ": must be non-negative");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field + ": expected a string");
    }
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field + ": wrong type");
    }
  }

 private:
  nlohmann::json j_;
  std::string path_;
  std::set<std::string> used_;
};

/// Re-throws a module ConfigError/ArgumentError/DomainError with the block
/// path prepended.
template <class F>
auto with_context(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace lgdf::cli
