#pragma once

namespace citeworthy {

inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace citeworthy
