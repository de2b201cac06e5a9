#pragma once
// io.hpp — shared text-file helpers: lossless double formatting, atomic
// write-then-rename, and small parsing utilities used by the dataset,
// checkpoint and metrics formats.

#include <string>
#include <vector>

namespace pmc {

// Shortest representation that round-trips an IEEE double (%.17g).
std::string fmt_double(double v);
// Hexadecimal float (%a): exact round trip, used by checkpoints.
std::string fmt_double_hex(double v);

// Strict full-token parse; throws std::invalid_argument on garbage.
double parse_double(const std::string& token);
long parse_long(const std::string& token);

std::string read_file(const std::string& path);
// Writes to <path>.tmp then renames, so readers never observe partial files.
void atomic_write_file(const std::string& path, const std::string& content);

std::vector<std::string> split(const std::string& s, char sep);
std::vector<std::string> split_ws(const std::string& s);

}  // namespace pmc
