#pragma once

// Reader/writer for the TOML subset used by experiment files: [table]
// headers, `key = value` pairs, # comments, and values that are strings,
// integers, floats, booleans or single-line arrays of those.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ol4el::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<std::int64_t, double, bool, std::string, Array> data;

  bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
  bool is_float() const { return std::holds_alternative<double>(data); }
  bool is_number() const { return is_int() || is_float(); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_array() const { return std::holds_alternative<Array>(data); }

  double as_number() const { return is_int() ? static_cast<double>(std::get<std::int64_t>(data)) : std::get<double>(data); }
  std::int64_t as_int() const { return std::get<std::int64_t>(data); }
  bool as_bool() const { return std::get<bool>(data); }
  const std::string& as_string() const { return std::get<std::string>(data); }
  const Array& as_array() const { return std::get<Array>(data); }
};

// Keys are "table.key" (or just "key" before the first table header).
using Document = std::map<std::string, Value>;

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  Value parse_all() {
    Value v = parse();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw SyntaxError(line_, what); }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  Value parse() {
    skip_ws();
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    return parse_scalar();
  }

  Value parse_string() {
    std::string out;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) fail("unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return Value{out};
  }

  Value parse_array() {
    Array items;
    ++pos_;
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return Value{items};
    }
    while (true) {
      items.push_back(parse());
      skip_ws();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          break;
        }
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        break;
      }
      fail("expected ',' or ']' in array");
    }
    return Value{items};
  }

  Value parse_scalar() {
    std::size_t end = pos_;
    while (end < text_.size() && text_[end] != ',' && text_[end] != ']' && text_[end] != ' ' && text_[end] != '\t')
      ++end;
    std::string tok(text_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return Value{true};
    if (tok == "false") return Value{false};
    std::string digits;
    for (char c : tok)
      if (c != '_') digits += c;
    if (!digits.empty() && digits.front() == '+') digits.erase(0, 1);
    const bool looks_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                             digits == "-inf" || digits == "nan";
    if (!looks_float) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec == std::errc() && p == digits.data() + digits.size() && !digits.empty()) return Value{v};
    } else {
      double v = 0.0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec == std::errc() && p == digits.data() + digits.size()) return Value{v};
    }
    fail("invalid value '" + tok + "'");
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

// Drops a trailing comment, ignoring '#' inside strings.
inline std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
      continue;
    }
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace detail

inline Document parse(std::string_view text) {
  Document doc;
  std::string table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    ++line_no;
    auto line = detail::trim(detail::strip_comment(text.substr(pos, eol - pos)));
    pos = eol + 1;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw SyntaxError(line_no, "unterminated table header");
      auto name = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::bare_key(name)) throw SyntaxError(line_no, "invalid table name");
      table = std::string(name);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw SyntaxError(line_no, "expected key = value");
    auto key = detail::trim(line.substr(0, eq));
    if (!detail::bare_key(key)) throw SyntaxError(line_no, "invalid key '" + std::string(key) + "'");
    const std::string full = table.empty() ? std::string(key) : table + "." + std::string(key);
    if (doc.count(full)) throw SyntaxError(line_no, "duplicate key '" + full + "'");
    doc[full] = detail::ValueParser(detail::trim(line.substr(eq + 1)), line_no).parse_all();
  }
  return doc;
}

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, p);
  // Keep floats recognizable as floats.
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

}  // namespace ol4el::toml
