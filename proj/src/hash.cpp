#include "aerolabel/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "aerolabel/error.hpp"

namespace aerolabel {

void ContentHash::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
}

void ContentHash::update(std::string_view text) {
  update(std::as_bytes(std::span(text.data(), text.size())));
}

std::string ContentHash::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string() + " for hashing");
  ContentHash h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    h.update(std::as_bytes(std::span(buf.data(), got)));
  }
  return h.hex();
}

std::string hash_text(std::string_view text) {
  ContentHash h;
  h.update(text);
  return h.hex();
}

}  // namespace aerolabel
