#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace aerolabel {

/// Streaming 64-bit FNV-1a. Used for content addressing of stage inputs,
/// not for anything security related.
class ContentHash {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hash_file(const std::filesystem::path& path);
std::string hash_text(std::string_view text);

/// SplitMix64 step; used to derive independent per-trial / per-frame seeds
/// from a base seed and a counter.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(stream)) + index);
}

}  // namespace aerolabel
