#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

namespace asb::util {

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string base64_encode(std::string_view data);
std::optional<std::string> base64_decode(std::string_view text);

std::optional<std::string> read_file(const std::string& path);
bool write_file(const std::string& path, std::string_view content);

}  // namespace asb::util
