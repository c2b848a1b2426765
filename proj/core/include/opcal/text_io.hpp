#pragma once

#include "opcal/types.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Plain-text numeric I/O shared by every file format in the toolkit. Doubles
// are written in shortest round-trip form, so save/load is lossless and the
// output is byte-stable across runs.
namespace opcal::text {

std::string format_double(double value);
std::string join(std::span<const double> values, std::string_view sep = ",");
std::string join(std::span<const Index> values, std::string_view sep = ",");
std::string_view trim(std::string_view s);

/// Splits on `sep`, or on runs of whitespace when `sep` is ' '.
std::vector<std::string_view> split(std::string_view s, char sep);

/// Reads lines while tracking the line number for diagnostics. Blank lines and
/// lines starting with '#' are skipped.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source);

  /// Next significant line (trimmed); false at end of input.
  bool next(std::string& line);
  /// Like next() but raises ParseError at end of input.
  std::string expect_line(std::string_view what);

  std::size_t line_number() const noexcept { return line_; }
  const std::string& source() const noexcept { return source_; }

  [[noreturn]] void fail(const std::string& what) const;

  double to_double(std::string_view token) const;
  long long to_integer(std::string_view token) const;
  std::vector<double> to_doubles(std::string_view s, char sep) const;
  std::vector<Index> to_indices(std::string_view s, char sep) const;

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
};

/// One matrix row per line, entries separated by single spaces.
void write_rows(std::ostream& out, const Matrix& m);
/// Reads `rows` lines of exactly `cols` whitespace-separated values.
Matrix read_rows(LineReader& reader, Index rows, Index cols);

}  // namespace opcal::text
