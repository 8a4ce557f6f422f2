#pragma once

// Text I/O helpers shared by the block dumps and the experiment runner.
// Doubles are printed in their shortest round-trip form (never more than 17
// significant digits) so that parse(format(x)) == x bitwise.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qelab/errors.hpp"
#include "qelab/sphere.hpp"

namespace qelab::io {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw numeric_error("parse_double: cannot parse '" + std::string(s) + "'");
    return v;
}

inline long long parse_int(std::string_view s) {
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw numeric_error("parse_int: cannot parse '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Portable text dump of an operator block: a degree line, an omega line,
// then one "re,im" line per entry in row-major order.
inline void write_block_csv(const sphere::OperatorBlock& block, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("write_block_csv: cannot open " + path.string());
    out << "degree," << block.degree << "\n";
    out << "omega," << format_double(block.omega) << "\n";
    for (const auto& e : block.elements)
        out << format_double(e.real()) << "," << format_double(e.imag()) << "\n";
    if (!out) throw validation_error("write_block_csv: write failed for " + path.string());
}

inline sphere::OperatorBlock read_block_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("read_block_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw numeric_error("read_block_csv: missing degree line");
    auto head = split(line, ',');
    if (head.size() != 2 || head[0] != "degree") throw numeric_error("read_block_csv: bad degree line");
    sphere::OperatorBlock block;
    block.degree = static_cast<int>(parse_int(head[1]));
    if (!std::getline(in, line)) throw numeric_error("read_block_csv: missing omega line");
    auto om = split(line, ',');
    if (om.size() != 2 || om[0] != "omega") throw numeric_error("read_block_csv: bad omega line");
    block.omega = parse_double(om[1]);
    const std::size_t d = 2 * block.degree + 1;
    block.elements.reserve(d * d);
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto parts = split(line, ',');
        if (parts.size() != 2) throw numeric_error("read_block_csv: bad entry line '" + line + "'");
        block.elements.emplace_back(parse_double(parts[0]), parse_double(parts[1]));
    }
    if (block.elements.size() != d * d)
        throw numeric_error("read_block_csv: entry count does not match degree");
    return block;
}

}  // namespace qelab::io
