#include "ckdprog/csv.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace ckdprog {

CsvReader::CsvReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw std::runtime_error("cannot open file: " + path);
}

void CsvReader::fail(const std::string& message) const {
    throw std::runtime_error(path_ + ":" + std::to_string(line_) + ": " + message);
}

void CsvReader::fail_column(const std::string& column, const std::string& message) const {
    fail("column '" + column + "': " + message);
}

bool CsvReader::next_row(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first_) {
            first_ = false;
            if (line.size() >= 3 && line[0] == '\xEF' && line[1] == '\xBB' && line[2] == '\xBF') {
                line.erase(0, 3);
            }
        }
        if (line.empty()) continue;
        split_csv_line(line, fields);
        return true;
    }
    return false;
}

void CsvReader::expect_header(const std::vector<std::string>& columns) {
    std::vector<std::string> fields;
    if (!next_row(fields)) fail("missing header row");
    if (fields != columns) {
        fail("unexpected header '" + join_csv(fields) + "', expected '" + join_csv(columns) + "'");
    }
}

int64_t CsvReader::to_int(const std::string& field, const std::string& column) const {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        fail_column(column, "not an integer: '" + field + "'");
    }
    return v;
}

double CsvReader::to_double(const std::string& field, const std::string& column) const {
    double v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        fail_column(column, "not a number: '" + field + "'");
    }
    return v;
}

void split_csv_line(std::string_view line, std::vector<std::string>& out) {
    out.clear();
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.emplace_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
}

std::string join_csv(const std::vector<std::string>& fields) {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace ckdprog
