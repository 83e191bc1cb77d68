#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace devmine {

// ---- CSV (RFC 4180 quoting) ------------------------------------------------

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the record starts
  bool malformed = false;  // unterminated quote
};

/// Splits CSV text into records. Never throws; an unterminated quoted field
/// yields one final record flagged `malformed`. Blank lines are skipped.
std::vector<CsvRecord> parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

/// Shortest round-trip decimal rendering of a double ("nan" never produced
/// for finite input).
std::string format_number(double v);

/// Parses a finite double; nullopt on garbage or trailing text.
std::optional<double> parse_number(std::string_view text);

// ---- files -----------------------------------------------------------------

/// Reads a whole file. Throws InputError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling file and rename, so readers never observe
/// a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Throws InputError unless `text` is valid UTF-8.
void require_utf8(std::string_view text, std::string_view source_name);

}  // namespace devmine
