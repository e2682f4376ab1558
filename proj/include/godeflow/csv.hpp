#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "godeflow/array2d.hpp"

namespace godeflow::csv {

// Shortest decimal form that parses back to the same double (17 significant digits).
std::string format_double(double value);
double parse_double(const std::string& text);

void write_grid(const std::filesystem::path& path, const RealGrid& grid);
void write_grid(const std::filesystem::path& path, const BinaryGrid& grid);
RealGrid read_real_grid(const std::filesystem::path& path);
BinaryGrid read_binary_grid(const std::filesystem::path& path);

// Splits one line on commas; no quoting.
std::vector<std::string> split_line(const std::string& line);

}  // namespace godeflow::csv
