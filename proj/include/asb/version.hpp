#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace asb {

// Dotted-numeric version with an optional trailing letter suffix, the grammar
// used by BOM entries and vulnerability ranges (`1.0.1f`, `3.8`). Numeric
// fields compare numerically (missing fields count as 0), the letter suffix
// compares lexicographically and an empty suffix sorts first.
struct Version {
  std::vector<long> nums;
  std::string suffix;

  static std::optional<Version> parse(std::string_view text);

  std::strong_ordering operator<=>(const Version& other) const;
  bool operator==(const Version& other) const { return (*this <=> other) == 0; }
};

}  // namespace asb
