#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace sar::detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
  if (!j.is_object()) throw std::runtime_error(ctx + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw std::runtime_error(ctx + ": unknown key '" + key + "'");
  }
}

}  // namespace sar::detail
