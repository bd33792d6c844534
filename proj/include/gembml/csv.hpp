#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gembml/types.hpp"

namespace gembml {

/// Shortest round-trip decimal representation; locale-free, '.' decimal point.
inline std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

/// CSV with a header row, UTF-8, '\n' line endings. Byte-stable across runs
/// for identical data.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path.string());
        write_strings(header);
    }

    void row(const std::vector<std::string>& cells) { write_strings(cells); }

    void row_mixed(const std::vector<std::string>& labels, const Vec& values) {
        std::string line;
        for (size_t i = 0; i < labels.size(); ++i) {
            if (i) line += ',';
            line += labels[i];
        }
        for (double v : values) {
            line += ',';
            line += format_double(v);
        }
        line += '\n';
        out_ << line;
    }

private:
    void write_strings(const std::vector<std::string>& cells) {
        std::string line;
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        line += '\n';
        out_ << line;
    }
    std::ofstream out_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_file: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Header line plus data rows sorted lexicographically; for comparing outputs
/// of runs whose row emission order may differ.
inline std::string canonicalize_csv(const std::string& content) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : content) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    if (lines.empty()) return "";
    std::sort(lines.begin() + 1, lines.end());
    std::string out = lines[0];
    for (size_t i = 1; i < lines.size(); ++i) out += '\n' + lines[i];
    return out + '\n';
}

}  // namespace gembml
