#pragma once

#include <string>
#include <vector>

namespace t2g {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

// Comma-separated, double-quote quoting with "" escapes, LF or CRLF line
// ends, embedded newlines inside quoted fields. Every row must match the
// header width; empty string means missing.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv_file(const std::string& path);

void write_csv_file(const std::string& path, const CsvTable& table);
std::string csv_quote(const std::string& field);

}  // namespace t2g
