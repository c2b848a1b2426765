#include "opcal/text_io.hpp"

#include "opcal/errors.hpp"

#include <cctype>
#include <charconv>
#include <istream>
#include <ostream>
#include <system_error>

namespace opcal {

void check_partition(const std::vector<FieldRange>& fields, Index n) {
  Index expected = 0;
  for (const auto& f : fields) {
    if (f.start != expected || f.end <= f.start) {
      throw DataError("field ranges must partition [0, " + std::to_string(n) +
                      ") in order; offending field '" + f.name + "'");
    }
    expected = f.end;
  }
  if (expected != n) {
    throw DataError("field ranges cover [0, " + std::to_string(expected) +
                    ") but state dimension is " + std::to_string(n));
  }
}

}  // namespace opcal

namespace opcal::text {

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw DataError("cannot format floating-point value");
  return std::string(buf, ptr);
}

std::string join(std::span<const double> values, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += format_double(values[i]);
  }
  return out;
}

std::string join(std::span<const Index> values, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(values[i]);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  if (sep == ' ') {
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      std::size_t j = i;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j > i) out.push_back(s.substr(i, j - i));
      i = j;
    }
    return out;
  }
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

LineReader::LineReader(std::istream& in, std::string source)
    : in_(in), source_(std::move(source)) {}

bool LineReader::next(std::string& line) {
  std::string raw;
  while (std::getline(in_, raw)) {
    ++line_;
    auto t = trim(raw);
    if (t.empty() || t.front() == '#') continue;
    line.assign(t);
    return true;
  }
  return false;
}

std::string LineReader::expect_line(std::string_view what) {
  std::string line;
  if (!next(line)) {
    throw ParseError(source_, line_ + 1, "unexpected end of file, expected " + std::string(what));
  }
  return line;
}

void LineReader::fail(const std::string& what) const {
  throw ParseError(source_, line_, what);
}

double LineReader::to_double(std::string_view token) const {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    fail("invalid number '" + std::string(token) + "'");
  }
  return value;
}

long long LineReader::to_integer(std::string_view token) const {
  token = trim(token);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    fail("invalid integer '" + std::string(token) + "'");
  }
  return value;
}

std::vector<double> LineReader::to_doubles(std::string_view s, char sep) const {
  std::vector<double> out;
  for (auto tok : split(s, sep)) out.push_back(to_double(tok));
  return out;
}

std::vector<Index> LineReader::to_indices(std::string_view s, char sep) const {
  std::vector<Index> out;
  for (auto tok : split(s, sep)) out.push_back(static_cast<Index>(to_integer(tok)));
  return out;
}

void write_rows(std::ostream& out, const Matrix& m) {
  std::string line;
  for (Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) line += ' ';
      line += format_double(m(i, j));
    }
    line += '\n';
    out << line;
  }
}

Matrix read_rows(LineReader& reader, Index rows, Index cols) {
  Matrix m(rows, cols);
  if (cols == 0) return m;
  for (Index i = 0; i < rows; ++i) {
    auto line = reader.expect_line("matrix row " + std::to_string(i));
    auto tokens = split(line, ' ');
    if (static_cast<Index>(tokens.size()) != cols) {
      reader.fail("expected " + std::to_string(cols) + " values, found " +
                  std::to_string(tokens.size()));
    }
    for (Index j = 0; j < cols; ++j) m(i, j) = reader.to_double(tokens[static_cast<std::size_t>(j)]);
  }
  return m;
}

}  // namespace opcal::text
