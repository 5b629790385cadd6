#pragma once

namespace mrg {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace mrg
