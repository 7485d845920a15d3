#pragma once

#include <cstdint>
#include <string>

namespace omsd::hash {

// SHA-256 as a lowercase hex digest.
std::string sha256_hex(const uint8_t* data, size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::string& path);

}  // namespace omsd::hash
