#pragma once

namespace gemflow {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gemflow
