#pragma once

#include <string>
#include <vector>

namespace edscreen::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

/// Strict reader for the project's data files: UTF-8, one header row,
/// comma-separated, LF (or CRLF) line endings, no quoting. Throws
/// std::runtime_error on ragged rows.
Table read_file(const std::string& path);
Table parse(const std::string& text);

/// Writes with LF endings and no quoting; field values must not contain
/// commas or newlines (asserted).
void write_file(const std::string& path, const Table& table);
std::string to_string(const Table& table);

/// Throws std::runtime_error mentioning the offending column when the header
/// does not exactly match `expected` (order-sensitive).
void require_header(const Table& table, const std::vector<std::string>& expected,
                    const std::string& what);

std::string format_double(double v);  // shortest round-trip representation

}  // namespace edscreen::csv
