#pragma once

namespace tfm {

inline constexpr const char* kVersion = "0.1.0";

} // namespace tfm
