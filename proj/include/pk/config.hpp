#pragma once
// Experiment configuration text: `[section]` headers and `key = value` lines.
//
// Values are booleans, integers, floats, double-quoted strings and
// single-line arrays of values. `#` starts a comment outside strings. Keys
// that appear before any header belong to the section "".

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace pk::cfg {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array> data;
  /// Source line, 0 when built in code. Not part of equality.
  int line = 0;

  Value() = default;
  Value(bool b) : data(b) {}                          // NOLINT(google-explicit-constructor)
  Value(int i) : data(std::int64_t{i}) {}             // NOLINT(google-explicit-constructor)
  Value(long i) : data(std::int64_t{i}) {}            // NOLINT(google-explicit-constructor)
  Value(long long i) : data(std::int64_t{i}) {}       // NOLINT(google-explicit-constructor)
  Value(double d) : data(d) {}                        // NOLINT(google-explicit-constructor)
  Value(std::string s) : data(std::move(s)) {}        // NOLINT(google-explicit-constructor)
  Value(const char* s) : data(std::string(s)) {}      // NOLINT(google-explicit-constructor)
  Value(Array a) : data(std::move(a)) {}              // NOLINT(google-explicit-constructor)

  bool operator==(const Value& other) const { return data == other.data; }

  bool is_number() const;
  /// Integers widen to double.
  double as_double() const;
  /// Floats are accepted only when they hold an integral value.
  std::int64_t as_int() const;
  bool as_bool() const;
  const std::string& as_string() const;
  const Array& as_array() const;
  std::string type_name() const;
};

using Table = std::map<std::string, Value>;

class Document {
 public:
  std::map<std::string, Table> sections;
  std::string source = "<config>";

  bool has(const std::string& section, const std::string& key) const;
  /// Throws ConfigError naming the section and key when missing.
  const Value& at(const std::string& section, const std::string& key) const;
  const Table* section(const std::string& name) const;
  void set(const std::string& section, const std::string& key, Value v);

  double number(const std::string& section, const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& section, const std::string& key, std::int64_t fallback) const;
  bool flag(const std::string& section, const std::string& key, bool fallback) const;
  std::string text(const std::string& section, const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& section, const std::string& key,
                              const std::vector<double>& fallback) const;
  std::vector<std::int64_t> integers(const std::string& section, const std::string& key,
                                     const std::vector<std::int64_t>& fallback) const;

  /// "source:line: [section] key: what", for diagnostics about a value.
  std::string where(const std::string& section, const std::string& key) const;

  bool operator==(const Document& other) const { return sections == other.sections; }
};

/// Throws ConfigError "source:line: message" on syntax errors and duplicates.
Document parse(const std::string& text, const std::string& source = "<config>");
Document load(const std::string& path);

/// Canonical text; parse(serialize(d)) == d.
std::string serialize(const Document& doc);
std::string serialize(const Value& v);

}  // namespace pk::cfg
