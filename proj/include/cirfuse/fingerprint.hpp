#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace cirfuse {

// 64-bit FNV-1a. Used for content fingerprints and offline-store keys,
// never for anything security related.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) noexcept;
  void update(std::string_view text) noexcept;

  template <typename T>
  void update_value(const T& value) noexcept {
    update(std::as_bytes(std::span<const T, 1>(&value, 1)));
  }

  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);
std::string content_hash(std::string_view text);
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace cirfuse
