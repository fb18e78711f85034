#pragma once

namespace superrad {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace superrad
