#pragma once

namespace comppn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace comppn
