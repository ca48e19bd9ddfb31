#pragma once

namespace catlab {

inline constexpr const char* kVersion = "0.1.0";

}
