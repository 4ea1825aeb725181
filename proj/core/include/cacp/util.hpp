#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cacp {

// FNV-1a over raw bytes; used to derive deterministic fake-backend behaviour
// from image content and strings.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

// splitmix64 step; the workhorse for deriving independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Folds extra components into a seed. Used to give every (image, variant,
// purpose) combination its own reproducible RNG stream.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value);

std::string base64_encode(const void* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Hex-encoded SHA-256.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_file(const std::filesystem::path& path);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string to_lower(std::string_view s);

// Fixed-precision decimal formatting that round-trips doubles exactly.
std::string format_double(double v);

}  // namespace cacp
