#pragma once

#include <string>

namespace dcwp {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// SHA-256 of a file's contents; error if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace dcwp
