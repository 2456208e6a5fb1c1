#pragma once

#include <string>
#include <vector>

namespace invcast {

std::vector<std::string> read_lines(const std::string& path);
std::vector<std::string> split_csv(const std::string& line);

/// Shortest round-trip representation of a double ("%.17g" pruned).
std::string fmt_double(double v);

double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

/// Writes to a temp file in the target directory, then renames into place.
void atomic_write(const std::string& path, const std::string& content);

}  // namespace invcast
