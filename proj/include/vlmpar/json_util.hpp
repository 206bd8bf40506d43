#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

namespace vlmpar {

/// Throws ConfigError if `j` is not an object or holds a key outside `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& context);

/// j[key] as T when present, otherwise `fallback`. Type errors become ConfigError.
template <typename T>
T value_or(const nlohmann::json& j, const char* key, T fallback, const std::string& context);

/// j[key] as T; missing keys and type errors become ConfigError.
template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& context);

}  // namespace vlmpar
