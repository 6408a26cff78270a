#pragma once

namespace expa {
inline constexpr const char* kVersion = "0.1.0";
}
