#pragma once

#include <charconv>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace usonic {

/// Formats a double as its shortest round-trip decimal form, so equal values
/// always produce byte-identical text.
std::string format_number(double v);

/// Comma-separated table with a fixed header. Fields containing commas or
/// quotes are quoted. Throws DataError when the file cannot be written.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  template <typename... Fields>
  void row(const Fields&... fields) {
    if (sizeof...(Fields) != columns_) throw_width(sizeof...(Fields));
    std::string line;
    bool first = true;
    ((append(line, first, field_text(fields))), ...);
    write_line(line);
  }

  void row_strings(const std::vector<std::string>& fields);

 private:
  static std::string field_text(std::string_view s) { return std::string(s); }
  static std::string field_text(const std::string& s) { return s; }
  static std::string field_text(const char* s) { return s; }
  static std::string field_text(std::floating_point auto v) { return format_number(static_cast<double>(v)); }
  static std::string field_text(std::integral auto v) { return std::to_string(v); }
  static void append(std::string& line, bool& first, const std::string& text);
  void write_line(const std::string& line);
  [[noreturn]] void throw_width(std::size_t got) const;

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

/// Parses a CSV written by CsvWriter (no embedded newlines). First row is the header.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace usonic
