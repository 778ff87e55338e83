#pragma once

// Small helpers for the comma-separated files the toolkit reads and writes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace s2h::csv {

/// Shortest decimal that round-trips exactly.
std::string num(double v);
/// Fixed-point with `digits` decimals.
std::string fixed(double v, int digits);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

double to_double(std::string_view s);
std::int64_t to_int(std::string_view s);

/// Whole file into memory; DataError if unreadable.
std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes (truncate + write); DataError on failure.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Iterates lines without copying. Strips a trailing '\r'.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}
  bool next(std::string_view& line);
  std::size_t line_number() const { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace s2h::csv
