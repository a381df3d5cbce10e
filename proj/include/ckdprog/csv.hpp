#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace ckdprog {

// Minimal comma-delimited reader for the toolkit's file formats. Fields never
// contain commas or quotes, so there is no quoting support. Handles CRLF line
// endings and a UTF-8 BOM on the first line. Error messages carry the file
// name and 1-based line number.
class CsvReader {
   public:
    explicit CsvReader(const std::string& path);

    // Checks that the first row matches exactly.
    void expect_header(const std::vector<std::string>& columns);

    // Returns false at end of file. Trailing blank lines are skipped.
    bool next_row(std::vector<std::string>& fields);

    size_t line() const { return line_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void fail(const std::string& message) const;
    [[noreturn]] void fail_column(const std::string& column, const std::string& message) const;

    int64_t to_int(const std::string& field, const std::string& column) const;
    double to_double(const std::string& field, const std::string& column) const;

   private:
    std::string path_;
    std::ifstream in_;
    size_t line_ = 0;
    bool first_ = true;
};

void split_csv_line(std::string_view line, std::vector<std::string>& out);
std::string join_csv(const std::vector<std::string>& fields);

// Shortest round-trip decimal rendering (std::to_chars).
std::string format_double(double v);

// Reads a whole file; throws if the file cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace ckdprog
