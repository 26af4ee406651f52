#pragma once

#include <string>
#include <string_view>

namespace geoadapt {

// Hex-encoded SHA-256 digests (OpenSSL EVP backend).
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace geoadapt
