#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace camannot {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Lower-cases, trims, collapses internal whitespace runs to one space and
/// strips whitespace around ';' separators.
std::string normalize_label(std::string_view s);

/// Alphanumeric tokens of the lower-cased input.
std::vector<std::string> word_tokens(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);

struct CsvRow {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

/// RFC-4180 reader: quoted fields may contain commas, quotes ("") and newlines.
/// Accepts LF or CRLF line endings and skips blank lines.
std::vector<CsvRow> read_csv(std::istream& in);

std::string csv_field(std::string_view s);
std::string csv_line(const std::vector<std::string>& fields);

/// Plain Levenshtein distance, used for "did you mean" hints.
std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace camannot
