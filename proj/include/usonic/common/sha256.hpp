#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace usonic {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Digest of a set of identifiers: sorted, newline-joined, then hashed, so the
/// result does not depend on the order the ids were collected in.
std::string sha256_of_id_set(std::vector<std::string> ids);

}  // namespace usonic
