#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "mrg/errors.hpp"

namespace mrg {
namespace csv {

// Shortest decimal representation that round-trips the double exactly.
inline std::string double_str(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Coordinates: integral values print without a decimal part.
inline std::string coord_str(double v) {
  if (std::floor(v) == v && std::abs(v) < 9.0e15) {
    return std::to_string(static_cast<std::int64_t>(v));
  }
  return double_str(v);
}

// One logical row; quoted fields may span physical lines.
// Returns false at end of input with no row started.
inline bool read_row(std::istream& in, std::vector<std::string>& out) {
  out.clear();
  int c = in.get();
  if (c == EOF) return false;

  std::string field;
  bool quoted = false;
  bool row_open = true;
  while (row_open) {
    if (c == EOF) break;
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        const int next = in.peek();
        if (next == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      row_open = false;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      row_open = false;
    } else {
      field.push_back(ch);
    }
    if (row_open) c = in.get();
  }
  if (quoted) throw IngestError("unterminated quoted field in CSV input");
  out.push_back(std::move(field));
  return true;
}

inline std::string escape(const std::string& field) {
  const bool needs_quotes =
      field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += "\"";
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out.put(',');
    out << escape(row[i]);
  }
  out.put('\n');
}

}  // namespace csv
}  // namespace mrg
