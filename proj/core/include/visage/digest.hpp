#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace visage {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x00000100000001b3ull;

// FNV-1a 64-bit rolling hash.  Pass the previous result as `seed` to chain
// several buffers into one digest.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = kFnvOffset);
std::uint64_t fnv1a64(const std::string& text, std::uint64_t seed = kFnvOffset);

// Whole-file digest; throws IoError if the file cannot be read.
std::uint64_t fnv1a64_file(const std::string& path);

// 16-char lowercase hex rendering.
std::string digest_hex(std::uint64_t value);

}  // namespace visage
