#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nicbf::csv {

/// Shortest decimal text that parses back to exactly the same double.
std::string format(double v);

double parse_double(std::string_view field);

std::vector<std::string> split(std::string_view line, char sep = ',');

std::string join(const std::vector<std::string>& fields, char sep = ',');

/// Whole file as a string; throws IoError naming the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// 64-bit FNV-1a, used for config hashes and artifact checksums in manifests.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex(std::uint64_t v);

}  // namespace nicbf::csv
