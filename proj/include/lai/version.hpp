#pragma once

namespace lai {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace lai
