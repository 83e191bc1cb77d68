#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace devmine {

/// A 128-bit digest rendered as 32 lowercase hex characters.
using DigestFunction = std::function<std::string(std::string_view)>;

/// MD5, the default event-hash strategy.
std::string md5_hex(std::string_view data);

/// Strategy used when callers do not pass one.
inline DigestFunction default_digest() { return &md5_hex; }

/// True iff `s` is exactly 32 characters of [0-9a-f].
bool is_digest_hex(std::string_view s);

}  // namespace devmine
