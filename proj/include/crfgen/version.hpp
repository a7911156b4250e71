#pragma once

namespace crfgen {

inline constexpr const char* kVersion = "crfgen 0.1.0";

}  // namespace crfgen
