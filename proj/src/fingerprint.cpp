#include "cirfuse/fingerprint.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "cirfuse/error.hpp"

namespace cirfuse {

void Fnv1a::update(std::span<const std::byte> bytes) noexcept {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update(std::string_view text) noexcept {
  update(std::as_bytes(std::span<const char>(text.data(), text.size())));
}

std::string Fnv1a::hex() const { return to_hex(state_); }

std::string to_hex(std::uint64_t value) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf.data(), 16);
}

std::string content_hash(std::string_view text) {
  Fnv1a h;
  h.update(text);
  return h.hex();
}

std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  Fnv1a h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex();
}

}  // namespace cirfuse
