#include "asb/canframe.hpp"

#include <cctype>

namespace asb::can {

namespace {

bool append_hex(std::string_view part, std::string& out) {
  for (char c : part) {
    if (c == '.') continue;
    if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return true;
}

}  // namespace

std::optional<std::string> normalize_frame(std::string_view text) {
  auto hash = text.find('#');
  if (hash == std::string_view::npos) return std::nullopt;
  std::string id, payload;
  if (!append_hex(text.substr(0, hash), id)) return std::nullopt;
  if (!append_hex(text.substr(hash + 1), payload)) return std::nullopt;
  if (id.empty() || id.size() > 8) return std::nullopt;
  if (payload.size() > 16) return std::nullopt;
  return id + "#" + payload;
}

}  // namespace asb::can
