#include "fedhub/common/hash.h"

#include <openssl/sha.h>

#include <array>
#include <cstdint>

namespace fedhub {

namespace {

std::string to_hex(const unsigned char* digest, std::size_t n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0x0f];
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
  return to_hex(digest.data(), digest.size());
}

std::string sha256_hex(std::span<const unsigned char> data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(data.data(), data.size(), digest.data());
  return to_hex(digest.data(), digest.size());
}

std::string hash_fields(std::initializer_list<std::string_view> fields) {
  std::string material;
  for (const auto f : fields) {
    material += std::to_string(f.size());
    material += ':';
    material += f;
    material += ';';
  }
  return sha256_hex(material);
}

}  // namespace fedhub
