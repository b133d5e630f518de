#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "speck/error.hpp"

namespace speck {

// Minimal TOML reader covering the subset the experiment configs use:
// comments, [section] headers, bare keys, strings, integers, floats,
// booleans, and single-line arrays of scalars.
struct TomlValue {
  enum class Kind { kInt, kFloat, kBool, kString, kArray };
  Kind kind = Kind::kInt;
  int64_t int_v = 0;
  double float_v = 0.0;
  bool bool_v = false;
  std::string string_v;
  std::vector<TomlValue> array_v;
  int line = 0;

  int64_t as_int() const {
    if (kind != Kind::kInt) throw ParseError("expected integer", line);
    return int_v;
  }
  double as_float() const {
    if (kind == Kind::kInt) return static_cast<double>(int_v);
    if (kind != Kind::kFloat) throw ParseError("expected number", line);
    return float_v;
  }
  bool as_bool() const {
    if (kind != Kind::kBool) throw ParseError("expected boolean", line);
    return bool_v;
  }
  const std::string& as_string() const {
    if (kind != Kind::kString) throw ParseError("expected string", line);
    return string_v;
  }
  const std::vector<TomlValue>& as_array() const {
    if (kind != Kind::kArray) throw ParseError("expected array", line);
    return array_v;
  }
};

struct TomlDoc {
  // section -> key -> value; top-level keys live under section "".
  std::map<std::string, std::map<std::string, TomlValue>> sections;

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
  }
};

namespace toml_detail {

inline void skip_ws(const std::string& s, size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

inline bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

inline std::string parse_string(const std::string& s, size_t& i, int line) {
  // s[i] == '"'
  ++i;
  std::string out;
  while (i < s.size() && s[i] != '"') {
    if (s[i] == '\\') {
      ++i;
      if (i >= s.size()) throw ParseError("unterminated escape", line);
      switch (s[i]) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default:
          throw ParseError(std::string("unsupported escape \\") + s[i], line);
      }
      ++i;
    } else {
      out.push_back(s[i++]);
    }
  }
  if (i >= s.size()) throw ParseError("unterminated string", line);
  ++i;  // closing quote
  return out;
}

inline TomlValue parse_scalar(const std::string& token, int line) {
  TomlValue v;
  v.line = line;
  if (token == "true" || token == "false") {
    v.kind = TomlValue::Kind::kBool;
    v.bool_v = token == "true";
    return v;
  }
  // Number: integer unless it has '.', 'e', 'E', or inf/nan markers.
  bool is_float = token.find_first_of(".eE") != std::string::npos;
  try {
    size_t used = 0;
    if (is_float) {
      v.kind = TomlValue::Kind::kFloat;
      v.float_v = std::stod(token, &used);
    } else {
      v.kind = TomlValue::Kind::kInt;
      v.int_v = std::stoll(token, &used, 10);
    }
    if (used != token.size()) throw ParseError("bad number: " + token, line);
  } catch (const std::exception&) {
    throw ParseError("cannot parse value: " + token, line);
  }
  return v;
}

inline TomlValue parse_value(const std::string& s, size_t& i, int line);

inline TomlValue parse_array(const std::string& s, size_t& i, int line) {
  // s[i] == '['
  ++i;
  TomlValue v;
  v.kind = TomlValue::Kind::kArray;
  v.line = line;
  skip_ws(s, i);
  if (i < s.size() && s[i] == ']') {
    ++i;
    return v;
  }
  while (true) {
    skip_ws(s, i);
    if (i >= s.size()) throw ParseError("unterminated array", line);
    v.array_v.push_back(parse_value(s, i, line));
    skip_ws(s, i);
    if (i < s.size() && s[i] == ',') {
      ++i;
      continue;
    }
    if (i < s.size() && s[i] == ']') {
      ++i;
      return v;
    }
    throw ParseError("expected ',' or ']' in array", line);
  }
}

inline TomlValue parse_value(const std::string& s, size_t& i, int line) {
  skip_ws(s, i);
  if (i >= s.size()) throw ParseError("missing value", line);
  if (s[i] == '"') {
    TomlValue v;
    v.kind = TomlValue::Kind::kString;
    v.line = line;
    v.string_v = parse_string(s, i, line);
    return v;
  }
  if (s[i] == '[') return parse_array(s, i, line);
  size_t start = i;
  while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' && s[i] != ' ' &&
         s[i] != '\t')
    ++i;
  return parse_scalar(s.substr(start, i - start), line);
}

}  // namespace toml_detail

inline TomlDoc toml_parse(const std::string& text) {
  using namespace toml_detail;
  TomlDoc doc;
  doc.sections[""];
  std::string current;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    size_t i = 0;
    skip_ws(raw, i);
    if (i >= raw.size() || raw[i] == '#') continue;

    if (raw[i] == '[') {
      ++i;
      size_t start = i;
      while (i < raw.size() && raw[i] != ']') ++i;
      if (i >= raw.size()) throw ParseError("unterminated section header", line_no);
      current = raw.substr(start, i - start);
      if (current.empty()) throw ParseError("empty section name", line_no);
      for (char c : current)
        if (!is_bare_key_char(c)) throw ParseError("bad section name: " + current, line_no);
      ++i;
      skip_ws(raw, i);
      if (i < raw.size() && raw[i] != '#')
        throw ParseError("trailing characters after section header", line_no);
      if (doc.sections.count(current))
        throw ParseError("duplicate section: " + current, line_no);
      doc.sections[current];
      continue;
    }

    size_t key_start = i;
    while (i < raw.size() && is_bare_key_char(raw[i])) ++i;
    const std::string key = raw.substr(key_start, i - key_start);
    if (key.empty()) throw ParseError("expected key", line_no);
    skip_ws(raw, i);
    if (i >= raw.size() || raw[i] != '=') throw ParseError("expected '='", line_no);
    ++i;
    TomlValue v = parse_value(raw, i, line_no);
    skip_ws(raw, i);
    if (i < raw.size() && raw[i] != '#')
      throw ParseError("trailing characters after value", line_no);
    auto& section = doc.sections[current];
    if (section.count(key))
      throw ParseError("duplicate key: " + key, line_no);
    v.line = line_no;
    section[key] = std::move(v);
  }
  return doc;
}

}  // namespace speck
