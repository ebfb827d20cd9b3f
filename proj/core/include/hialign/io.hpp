#pragma once

#include <string>

namespace hialign {

std::string read_file(const std::string& path);

// Writes to "<path>.tmp" and renames over `path`, so readers never observe a
// partially written artifact.
void write_file_atomic(const std::string& path, const std::string& content);

// "fnv1a64:<16 hex digits>"
std::string content_hash(const std::string& bytes);

// Shortest round-trip decimal representation of a double.
std::string format_double(double x);

}  // namespace hialign
