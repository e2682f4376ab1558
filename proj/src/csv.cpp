#include "godeflow/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "godeflow/errors.hpp"

namespace godeflow::csv {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

double parse_double(const std::string& text) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0' || errno == ERANGE) throw IoError("not a number: \"" + text + "\"");
    return v;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

namespace {

template <typename T, typename Fmt>
void write_any(const std::filesystem::path& path, const Array2D<T>& grid, Fmt fmt) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t r = 0; r < grid.rows(); ++r) {
        for (std::size_t c = 0; c < grid.cols(); ++c) {
            if (c) out << ',';
            out << fmt(grid(r, c));
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

template <typename T, typename Parse>
Array2D<T> read_any(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::vector<T>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<T> row;
        for (const auto& cell : split_line(line)) row.push_back(parse(cell));
        if (!rows.empty() && row.size() != rows.front().size()) throw IoError(path.string() + ": ragged rows");
        rows.push_back(std::move(row));
    }
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Array2D<T> grid(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) grid(r, c) = rows[r][c];
    }
    return grid;
}

}  // namespace

void write_grid(const std::filesystem::path& path, const RealGrid& grid) {
    write_any(path, grid, [](double v) { return format_double(v); });
}

void write_grid(const std::filesystem::path& path, const BinaryGrid& grid) {
    write_any(path, grid, [](int v) { return std::to_string(v); });
}

RealGrid read_real_grid(const std::filesystem::path& path) {
    return read_any<double>(path, [](const std::string& s) { return parse_double(s); });
}

BinaryGrid read_binary_grid(const std::filesystem::path& path) {
    return read_any<int>(path, [&](const std::string& s) {
        if (s == "0") return 0;
        if (s == "1") return 1;
        throw IoError(path.string() + ": expected 0 or 1, got \"" + s + "\"");
    });
}

}  // namespace godeflow::csv
