#pragma once

namespace ie {

inline constexpr const char* kVersion = "0.1.0";

} // namespace ie
