// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace vct {

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320). `seed` is the
// running value when hashing in chunks; start from 0.
std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t seed = 0);

// Whole-file helpers. Writes go through a sibling temp file followed by a
// rename so a crash never leaves a half-written file at `path`.
std::string read_file(const std::string& path);           // throws IoError
void write_file_atomic(const std::string& path, const std::string& bytes);
void ensure_parent_dir(const std::string& path);
void ensure_dir(const std::string& path);

// Shortest decimal form that round-trips the value (std::to_chars).
std::string format_real(double v);
std::string format_real(float v);

}  // namespace vct
