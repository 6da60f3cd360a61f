#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dishforge {

using Bytes = std::vector<std::uint8_t>;

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Incremental SHA-256. Strings fed through `update_field` are length
/// prefixed, so ("ab","c") and ("a","bc") hash differently.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> data);
  Sha256& update(std::string_view data) { return update(as_bytes(data)); }
  Sha256& update_field(std::string_view field);

  std::array<std::uint8_t, 32> digest();
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::span<const std::uint8_t> data);
inline std::string sha256_hex(std::string_view data) { return sha256_hex(as_bytes(data)); }

/// First 8 bytes of SHA-256 over the length-prefixed fields, big endian.
/// Used wherever a deterministic 64-bit seed is derived from inputs.
std::uint64_t hash_u64(std::initializer_list<std::string_view> fields);

std::string to_hex(std::span<const std::uint8_t> data);

std::string base64_encode(std::span<const std::uint8_t> data);
/// Throws Error(InvalidArgument) on malformed input.
Bytes base64_decode(std::string_view text);

}  // namespace dishforge
