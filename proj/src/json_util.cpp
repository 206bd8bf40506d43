#include "vlmpar/json_util.hpp"

#include <cstdint>
#include <vector>

#include "vlmpar/error.hpp"

namespace vlmpar {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + context);
  }
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& context) {
  if (!j.contains(key)) throw ConfigError(std::string("missing key '") + key + "' in " + context);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("key '") + key + "' in " + context + " has the wrong type");
  }
}

template <typename T>
T value_or(const nlohmann::json& j, const char* key, T fallback, const std::string& context) {
  if (!j.contains(key)) return fallback;
  return required<T>(j, key, context);
}

#define VLMPAR_INSTANTIATE(T)                                                          \
  template T required<T>(const nlohmann::json&, const char*, const std::string&);      \
  template T value_or<T>(const nlohmann::json&, const char*, T, const std::string&);

VLMPAR_INSTANTIATE(double)
VLMPAR_INSTANTIATE(std::size_t)
VLMPAR_INSTANTIATE(std::string)
VLMPAR_INSTANTIATE(bool)
VLMPAR_INSTANTIATE(std::vector<double>)

#undef VLMPAR_INSTANTIATE

}  // namespace vlmpar
