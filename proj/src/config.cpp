#include "pk/config.hpp"

#include "pk/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pk::cfg {

bool Value::is_number() const {
  return std::holds_alternative<std::int64_t>(data) || std::holds_alternative<double>(data);
}

double Value::as_double() const {
  if (const auto* i = std::get_if<std::int64_t>(&data)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&data)) return *d;
  throw ConfigError("expected a number, got " + type_name());
}

std::int64_t Value::as_int() const {
  if (const auto* i = std::get_if<std::int64_t>(&data)) return *i;
  if (const auto* d = std::get_if<double>(&data)) {
    if (std::isfinite(*d) && std::floor(*d) == *d && std::abs(*d) < 9.0e15) return static_cast<std::int64_t>(*d);
    throw ConfigError("expected an integer, got " + serialize(*this));
  }
  throw ConfigError("expected an integer, got " + type_name());
}

bool Value::as_bool() const {
  if (const auto* b = std::get_if<bool>(&data)) return *b;
  throw ConfigError("expected true or false, got " + type_name());
}

const std::string& Value::as_string() const {
  if (const auto* s = std::get_if<std::string>(&data)) return *s;
  throw ConfigError("expected a string, got " + type_name());
}

const Array& Value::as_array() const {
  if (const auto* a = std::get_if<Array>(&data)) return *a;
  throw ConfigError("expected an array, got " + type_name());
}

std::string Value::type_name() const {
  switch (data.index()) {
    case 0: return "a boolean";
    case 1: return "an integer";
    case 2: return "a float";
    case 3: return "a string";
    default: return "an array";
  }
}

bool Document::has(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

const Table* Document::section(const std::string& name) const {
  const auto s = sections.find(name);
  return s == sections.end() ? nullptr : &s->second;
}

const Value& Document::at(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  if (s != sections.end()) {
    const auto k = s->second.find(key);
    if (k != s->second.end()) return k->second;
  }
  throw ConfigError(source + ": missing [" + section + "] " + key);
}

void Document::set(const std::string& section, const std::string& key, Value v) {
  sections[section][key] = std::move(v);
}

std::string Document::where(const std::string& section, const std::string& key) const {
  std::string w = source;
  if (has(section, key) && at(section, key).line > 0) w += ":" + std::to_string(at(section, key).line);
  return w + ": [" + section + "] " + key;
}

namespace {

template <class F>
auto typed(const Document& d, const std::string& section, const std::string& key, F&& f) {
  try {
    return f(d.at(section, key));
  } catch (const ConfigError& e) {
    throw ConfigError(d.where(section, key) + ": " + e.what());
  }
}

}  // namespace

double Document::number(const std::string& section, const std::string& key, double fallback) const {
  if (!has(section, key)) return fallback;
  return typed(*this, section, key, [](const Value& v) { return v.as_double(); });
}

std::int64_t Document::integer(const std::string& section, const std::string& key, std::int64_t fallback) const {
  if (!has(section, key)) return fallback;
  return typed(*this, section, key, [](const Value& v) { return v.as_int(); });
}

bool Document::flag(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  return typed(*this, section, key, [](const Value& v) { return v.as_bool(); });
}

std::string Document::text(const std::string& section, const std::string& key, const std::string& fallback) const {
  if (!has(section, key)) return fallback;
  return typed(*this, section, key, [](const Value& v) { return v.as_string(); });
}

std::vector<double> Document::numbers(const std::string& section, const std::string& key,
                                      const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  return typed(*this, section, key, [](const Value& v) {
    std::vector<double> out;
    if (v.is_number()) return std::vector<double>{v.as_double()};
    for (const auto& x : v.as_array()) out.push_back(x.as_double());
    return out;
  });
}

std::vector<std::int64_t> Document::integers(const std::string& section, const std::string& key,
                                             const std::vector<std::int64_t>& fallback) const {
  if (!has(section, key)) return fallback;
  return typed(*this, section, key, [](const Value& v) {
    std::vector<std::int64_t> out;
    if (v.is_number()) return std::vector<std::int64_t>{v.as_int()};
    for (const auto& x : v.as_array()) out.push_back(x.as_int());
    return out;
  });
}

namespace {

bool name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
         c == '.';
}

class LineParser {
 public:
  LineParser(const std::string& line, const std::string& source, int number)
      : s_(line), source_(source), line_(number) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source_ + ":" + std::to_string(line_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string name() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && name_char(s_[pos_])) ++pos_;
    if (pos_ == start) fail("expected a name");
    return s_.substr(start, pos_ - start);
  }

  Value value() {
    const char c = peek();
    Value v;
    if (c == '"') {
      v = Value(string());
    } else if (c == '[') {
      v = Value(array());
    } else {
      v = scalar();
    }
    v.line = line_;
    return v;
  }

 private:
  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  Array array() {
    ++pos_;
    Array out;
    while (true) {
      if (at_end()) fail("unterminated array (arrays must fit on one line)");
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  Value scalar() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
           s_[pos_] != '\t' && s_[pos_] != '\r') {
      ++pos_;
    }
    const std::string tok = s_.substr(start, pos_ - start);
    if (tok.empty()) fail("expected a value");
    if (tok == "true") return Value(true);
    if (tok == "false") return Value(false);
    if (tok == "inf" || tok == "+inf") return Value(std::numeric_limits<double>::infinity());
    if (tok == "-inf") return Value(-std::numeric_limits<double>::infinity());
    if (tok == "nan") return Value(std::numeric_limits<double>::quiet_NaN());
    const char* first = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* last = tok.data() + tok.size();
    if (tok.find_first_of(".eE") == std::string::npos) {
      std::int64_t i = 0;
      const auto r = std::from_chars(first, last, i);
      if (r.ec == std::errc() && r.ptr == last) return Value(i);
    } else {
      double d = 0.0;
      const auto r = std::from_chars(first, last, d);
      if (r.ec == std::errc() && r.ptr == last) return Value(d);
    }
    fail("cannot read value '" + tok + "'");
  }

  const std::string& s_;
  const std::string& source_;
  int line_;
  std::size_t pos_ = 0;
};

std::string format_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), d);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out + '"';
}

}  // namespace

Document parse(const std::string& text, const std::string& source) {
  Document doc;
  doc.source = source;
  std::istringstream in(text);
  std::string line;
  std::string current;
  std::map<std::string, int> seen_sections;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    LineParser p(line, source, number);
    if (p.at_end()) continue;
    if (p.peek() == '[') {
      p.expect('[');
      current = p.name();
      p.expect(']');
      if (!p.at_end()) p.fail("unexpected text after section header");
      const auto [it, fresh] = seen_sections.emplace(current, number);
      if (!fresh) p.fail("section [" + current + "] already opened on line " + std::to_string(it->second));
      doc.sections[current];
      continue;
    }
    const std::string key = p.name();
    p.expect('=');
    Value v = p.value();
    if (!p.at_end()) p.fail("unexpected text after value");
    Table& t = doc.sections[current];
    if (t.count(key) > 0) {
      p.fail("duplicate key '" + key + "' (first on line " + std::to_string(t.at(key).line) + ")");
    }
    t.emplace(key, std::move(v));
  }
  return doc;
}

Document load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path);
}

std::string serialize(const Value& v) {
  switch (v.data.index()) {
    case 0: return std::get<bool>(v.data) ? "true" : "false";
    case 1: return std::to_string(std::get<std::int64_t>(v.data));
    case 2: return format_double(std::get<double>(v.data));
    case 3: return quote(std::get<std::string>(v.data));
    default: {
      std::string out = "[";
      const auto& a = std::get<Array>(v.data);
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (i > 0) out += ", ";
        out += serialize(a[i]);
      }
      return out + "]";
    }
  }
}

std::string serialize(const Document& doc) {
  std::string out;
  const auto emit = [&](const Table& t) {
    for (const auto& [k, v] : t) out += k + " = " + serialize(v) + "\n";
  };
  if (const Table* root = doc.section("")) emit(*root);
  for (const auto& [name, table] : doc.sections) {
    if (name.empty()) continue;
    if (!out.empty()) out += "\n";
    out += "[" + name + "]\n";
    emit(table);
  }
  return out;
}

}  // namespace pk::cfg
