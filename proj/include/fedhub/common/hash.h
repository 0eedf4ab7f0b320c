#pragma once

#include <initializer_list>
#include <span>
#include <string>
#include <string_view>

namespace fedhub {

std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const unsigned char> data);

// Hash over a sequence of fields. Each field is length-prefixed so that field
// boundaries cannot be shifted to produce the same digest.
std::string hash_fields(std::initializer_list<std::string_view> fields);

}  // namespace fedhub
