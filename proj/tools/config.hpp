#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace swirl::cli {

/// One config value: number, string, boolean, or a flat array of those.
struct Value {
  using Scalar = std::variant<double, std::string, bool>;
  std::variant<double, std::string, bool, std::vector<Scalar>> data;
  int line = 0;
};

/// Parsed key-value document. Keys before the first [section] live in "".
class ConfigDocument {
 public:
  /// Throws ConfigError with the offending line number.
  static ConfigDocument parse(const std::string& text);

  bool has_section(const std::string& name) const { return sections_.count(name) > 0; }
  const std::map<std::string, Value>* section(const std::string& name) const;
  std::vector<std::string> section_names() const;

 private:
  std::map<std::string, std::map<std::string, Value>> sections_;
};

/// Typed, strict view of one section. Every key read is recorded; finish()
/// rejects the keys nobody asked for.
class SectionReader {
 public:
  SectionReader(const ConfigDocument& doc, std::string section);

  bool present() const { return values_ != nullptr; }
  bool has(const std::string& key) const;

  double number(const std::string& key, double fallback);
  std::int64_t integer(const std::string& key, std::int64_t fallback);
  std::string string(const std::string& key, const std::string& fallback);
  bool boolean(const std::string& key, bool fallback);
  /// Array readers also accept a single scalar as a one-element list.
  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback);
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback);

  /// Throws ConfigError naming the first unknown key.
  void finish() const;

 private:
  const Value* find(const std::string& key);
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string section_;
  const std::map<std::string, Value>* values_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace swirl::cli
