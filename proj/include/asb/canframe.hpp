#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace asb::can {

// Canonical CAN frame text is `ID#PAYLOAD`: a 1-8 hex digit identifier and a
// 0-16 hex digit payload, both uppercase, no separators. Grouping dots
// (`5A1#11.22.33`) are accepted on input and stripped.
std::optional<std::string> normalize_frame(std::string_view text);

inline bool is_frame(std::string_view text) { return normalize_frame(text).has_value(); }

}  // namespace asb::can
