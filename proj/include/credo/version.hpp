#pragma once

namespace credo {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace credo
