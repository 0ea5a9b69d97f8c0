#pragma once

namespace bkd {

inline constexpr const char* version_string = "bkd 0.1.0";

}  // namespace bkd
