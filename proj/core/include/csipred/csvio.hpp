// Small text/CSV helpers shared by the exporters.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace csipred {

// FNV-1a over a byte string. Used to stamp output files with a config fingerprint.
std::uint64_t fnv1a_hash(const std::string& bytes);

// Standard comment line carried by every CSV we emit: "# config_hash=<hex> seed=<n>".
std::string csv_comment(std::uint64_t config_hash, std::uint64_t seed);

// Writes `content` through a temp file + rename so readers never observe partial output.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Splitter for our own exports. Fields never contain commas or quotes.
std::vector<std::string> split_csv_line(const std::string& line);

// Shortest decimal that round-trips the double.
std::string format_double(double v);

}  // namespace csipred
