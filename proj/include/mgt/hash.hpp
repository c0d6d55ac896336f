#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace mgt {

/// 64-bit FNV-1a. Used for every persisted fingerprint, so the value must
/// never depend on platform or library version.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  template <typename T>
  void update_pod(const T& value) {
    update(std::as_bytes(std::span<const T>(&value, 1)));
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t hash_bytes(std::string_view bytes);
std::uint64_t hash_file(const std::filesystem::path& path);

/// Mixes two values into one seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

std::string to_hex(std::uint64_t value);
std::uint64_t from_hex(std::string_view text);

}  // namespace mgt
