#pragma once

// Reader for the subset of TOML used by experiment configs:
//
//   # comment
//   [section]
//   key = 1.5            # numbers (integers stay integers)
//   name = "quadratic"   # basic strings with \" \\ \n \t escapes
//   flag = true
//   etas = [0.2, 0.1]    # single-line arrays of scalars
//
// Tables nest one level. Produces a JSON object {section: {key: value}};
// keys before the first header land in the top-level object.

#include <json.hpp>

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tlmc::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class LineParser {
 public:
  LineParser(const std::string& text, int line) : s_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  std::string bare_key() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  nlohmann::json value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return string_value();
    if (c == '[') return array_value();
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    return number_value();
  }

 private:
  nlohmann::json string_value() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char ch = s_[pos_++];
      if (ch == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case '"': ch = '"'; break;
          case '\\': ch = '\\'; break;
          case 'n': ch = '\n'; break;
          case 't': ch = '\t'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(ch);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json array_value() {
    ++pos_;  // [
    nlohmann::json arr = nlohmann::json::array();
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return arr;
    }
    for (;;) {
      skip_ws();
      if (peek() == '[') fail("nested arrays are not supported");
      arr.push_back(value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (peek() == ']') {  // trailing comma
          ++pos_;
          return arr;
        }
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  nlohmann::json number_value() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '+' ||
                                s_[pos_] == '-' || s_[pos_] == '.' || s_[pos_] == '_'))
      ++pos_;
    std::string tok = s_.substr(start, pos_ - start);
    if (tok.empty()) fail("expected a value");
    std::string clean;
    for (char ch : tok)
      if (ch != '_') clean.push_back(ch);
    const bool is_int = clean.find_first_of(".eEinfa") == std::string::npos;
    try {
      std::size_t used = 0;
      if (is_int) {
        const long long v = std::stoll(clean, &used);
        if (used == clean.size()) return v;
      } else {
        const double v = std::stod(clean, &used);
        if (used == clean.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("invalid value '" + tok + "'");
  }

  const std::string& s_;
  int line_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline nlohmann::json parse_toml_lite(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    detail::LineParser p(line, lineno);
    if (p.at_end_or_comment()) continue;
    if (p.peek() == '[') {
      p.expect('[');
      const std::string name = p.bare_key();
      p.expect(']');
      if (!p.at_end_or_comment()) p.fail("unexpected text after table header");
      if (root.contains(name)) p.fail("duplicate table [" + name + "]");
      root[name] = nlohmann::json::object();
      table = &root[name];
      continue;
    }
    const std::string key = p.bare_key();
    p.expect('=');
    nlohmann::json v = p.value();
    if (!p.at_end_or_comment()) p.fail("unexpected text after value");
    if (table->contains(key)) p.fail("duplicate key '" + key + "'");
    (*table)[key] = std::move(v);
  }
  return root;
}

inline nlohmann::json read_toml_lite(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_toml_lite(ss.str());
}

}  // namespace tlmc::cli
