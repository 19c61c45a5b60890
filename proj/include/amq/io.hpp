#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace amq::io {

// Writes through `fill` into `<path>.tmp` and renames onto `path` only when
// `fill` returns without throwing, so readers never see a partial file.
void write_atomically(const std::filesystem::path& path, bool binary,
                      const std::function<void(std::ostream&)>& fill);

void ensure_directory(const std::filesystem::path& dir);

// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

// Fixed-point text, e.g. format_fixed(0.91234, 4) == "0.9123".
std::string format_fixed(double value, int decimals);

double parse_real(std::string_view text);
std::uint64_t parse_uint(std::string_view text);

// Splits one CSV line on commas. Fields never contain commas or quotes in
// the files this project writes.
std::vector<std::string> split_csv_line(std::string_view line);

// FNV-1a over the bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace amq::io
