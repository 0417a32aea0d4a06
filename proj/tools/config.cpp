#include "config.hpp"

#include <cmath>
#include <sstream>

#include "swirl/error.hpp"

namespace swirl::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void syntax(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

// Strips a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

Value::Scalar parse_scalar(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.empty()) syntax(line, "missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') syntax(line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char n = s[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else if (s[i] == '"') {
        syntax(line, "unescaped quote inside string");
      } else {
        out += s[i];
      }
    }
    return out;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    syntax(line, "cannot parse value '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) syntax(line, "cannot parse value '" + s + "'");
  return v;
}

std::vector<Value::Scalar> parse_array(const std::string& s, int line) {
  std::vector<Value::Scalar> out;
  const std::string body = trim(s.substr(1, s.size() - 2));
  if (body.empty()) return out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) quoted = !quoted;
    if (c == '[' && !quoted) syntax(line, "nested arrays are not supported");
    if (c == ',' && !quoted) {
      out.push_back(parse_scalar(cur, line));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(parse_scalar(cur, line));
  return out;
}

std::string type_name(const Value& v) {
  switch (v.data.index()) {
    case 0:
      return "number";
    case 1:
      return "string";
    case 2:
      return "boolean";
    default:
      return "array";
  }
}

}  // namespace

ConfigDocument ConfigDocument::parse(const std::string& text) {
  ConfigDocument doc;
  doc.sections_[""];
  std::string current;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') syntax(line, "malformed section header");
      current = trim(s.substr(1, s.size() - 2));
      if (!valid_key(current)) syntax(line, "invalid section name '" + current + "'");
      if (doc.sections_.count(current)) syntax(line, "duplicate section [" + current + "]");
      doc.sections_[current];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) syntax(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string rhs = trim(s.substr(eq + 1));
    if (!valid_key(key)) syntax(line, "invalid key '" + key + "'");
    auto& sec = doc.sections_[current];
    if (sec.count(key)) syntax(line, "duplicate key '" + key + "'");
    Value v;
    v.line = line;
    if (!rhs.empty() && rhs.front() == '[') {
      if (rhs.back() != ']') syntax(line, "unterminated array");
      v.data = parse_array(rhs, line);
    } else {
      std::visit([&](auto&& x) { v.data = x; }, parse_scalar(rhs, line));
    }
    sec[key] = std::move(v);
  }
  return doc;
}

const std::map<std::string, Value>* ConfigDocument::section(const std::string& name) const {
  const auto it = sections_.find(name);
  return it == sections_.end() ? nullptr : &it->second;
}

std::vector<std::string> ConfigDocument::section_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : sections_) out.push_back(name);
  return out;
}

SectionReader::SectionReader(const ConfigDocument& doc, std::string section)
    : section_(std::move(section)), values_(doc.section(section_)) {}

bool SectionReader::has(const std::string& key) const {
  return values_ && values_->count(key) > 0;
}

const Value* SectionReader::find(const std::string& key) {
  seen_.insert(key);
  if (!values_) return nullptr;
  const auto it = values_->find(key);
  return it == values_->end() ? nullptr : &it->second;
}

void SectionReader::fail(const std::string& key, const std::string& what) const {
  const std::string where = section_.empty() ? key : "[" + section_ + "] " + key;
  const auto it = values_ ? values_->find(key) : decltype(values_->end()){};
  const int line = values_ && it != values_->end() ? it->second.line : 0;
  throw ConfigError("config line " + std::to_string(line) + ": " + where + " " + what);
}

double SectionReader::number(const std::string& key, double fallback) {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const double* d = std::get_if<double>(&v->data)) return *d;
  fail(key, "must be a number, got " + type_name(*v));
}

std::int64_t SectionReader::integer(const std::string& key, std::int64_t fallback) {
  const Value* v = find(key);
  if (!v) return fallback;
  const double* d = std::get_if<double>(&v->data);
  if (!d || std::floor(*d) != *d || std::abs(*d) > 9.0e15) fail(key, "must be an integer");
  return static_cast<std::int64_t>(*d);
}

std::string SectionReader::string(const std::string& key, const std::string& fallback) {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const std::string* s = std::get_if<std::string>(&v->data)) return *s;
  fail(key, "must be a string, got " + type_name(*v));
}

bool SectionReader::boolean(const std::string& key, bool fallback) {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const bool* b = std::get_if<bool>(&v->data)) return *b;
  fail(key, "must be true or false, got " + type_name(*v));
}

std::vector<std::string> SectionReader::strings(const std::string& key,
                                                std::vector<std::string> fallback) {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const std::string* single = std::get_if<std::string>(&v->data)) return {*single};
  const auto* arr = std::get_if<std::vector<Value::Scalar>>(&v->data);
  if (!arr) fail(key, "must be an array of strings");
  std::vector<std::string> out;
  for (const auto& x : *arr) {
    const std::string* s = std::get_if<std::string>(&x);
    if (!s) fail(key, "must be an array of strings");
    out.push_back(*s);
  }
  return out;
}

std::vector<double> SectionReader::numbers(const std::string& key,
                                           std::vector<double> fallback) {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const double* single = std::get_if<double>(&v->data)) return {*single};
  const auto* arr = std::get_if<std::vector<Value::Scalar>>(&v->data);
  if (!arr) fail(key, "must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : *arr) {
    const double* d = std::get_if<double>(&x);
    if (!d) fail(key, "must be an array of numbers");
    out.push_back(*d);
  }
  return out;
}

void SectionReader::finish() const {
  if (!values_) return;
  for (const auto& [key, value] : *values_) {
    if (!seen_.count(key)) {
      const std::string where = section_.empty() ? "top level" : "[" + section_ + "]";
      throw ConfigError("config line " + std::to_string(value.line) + ": unknown key '" + key +
                        "' in " + where);
    }
  }
}

}  // namespace swirl::cli
