#include "usonic/common/csv.hpp"

#include <array>
#include <cmath>

#include "usonic/common/error.hpp"

namespace usonic {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : path_(path), out_(path), columns_(header.size()) {
  if (!out_) throw DataError("cannot write " + path.string());
  row_strings(header);
}

void CsvWriter::row_strings(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) throw_width(fields.size());
  std::string line;
  bool first = true;
  for (const auto& f : fields) append(line, first, f);
  write_line(line);
}

void CsvWriter::append(std::string& line, bool& first, const std::string& text) {
  if (!first) line += ',';
  first = false;
  if (text.find_first_of(",\"") == std::string::npos) {
    line += text;
    return;
  }
  line += '"';
  for (char c : text) {
    if (c == '"') line += '"';
    line += c;
  }
  line += '"';
}

void CsvWriter::write_line(const std::string& line) {
  out_ << line << '\n';
  if (!out_) throw DataError("failed writing " + path_.string());
}

void CsvWriter::throw_width(std::size_t got) const {
  throw std::invalid_argument("CSV row has " + std::to_string(got) + " fields, header has " + std::to_string(columns_));
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(std::move(cur));
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace usonic
