#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace latentir {

/// 64-bit FNV-1a. Stable across platforms; used for config and prompt digests.
[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view data,
                                              std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept {
    std::uint64_t h = seed;
    for (const char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// 16 lowercase hex digits.
[[nodiscard]] std::string hex_digest(std::string_view data);

}  // namespace latentir
