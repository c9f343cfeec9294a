#include "asb/version.hpp"

#include <cctype>

namespace asb {

std::optional<Version> Version::parse(std::string_view text) {
  Version v;
  size_t i = 0;
  auto read_num = [&]() -> std::optional<long> {
    if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
    long n = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      n = n * 10 + (text[i] - '0');
      ++i;
    }
    return n;
  };
  auto first = read_num();
  if (!first) return std::nullopt;
  v.nums.push_back(*first);
  while (i < text.size() && text[i] == '.') {
    ++i;
    auto n = read_num();
    if (!n) return std::nullopt;
    v.nums.push_back(*n);
  }
  while (i < text.size() && std::islower(static_cast<unsigned char>(text[i]))) {
    v.suffix.push_back(text[i]);
    ++i;
  }
  if (i != text.size()) return std::nullopt;
  return v;
}

std::strong_ordering Version::operator<=>(const Version& other) const {
  size_t n = std::max(nums.size(), other.nums.size());
  for (size_t i = 0; i < n; ++i) {
    long a = i < nums.size() ? nums[i] : 0;
    long b = i < other.nums.size() ? other.nums[i] : 0;
    if (auto c = a <=> b; c != 0) return c;
  }
  return suffix <=> other.suffix;
}

}  // namespace asb
