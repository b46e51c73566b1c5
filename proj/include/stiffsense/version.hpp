#pragma once

namespace stiffsense {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace stiffsense
