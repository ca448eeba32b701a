#include "simplexlm/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "simplexlm/checkpoint.hpp"
#include "simplexlm/errors.hpp"
#include "simplexlm/text_corpus.hpp"

namespace simplexlm {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_float(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  return parse_number(s, out);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    parts.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

// Returns an error message, or empty when `value` is valid for `key`.
std::string check_value(const ConfigKey& key, std::string_view value) {
  switch (key.type) {
    case ValueType::kInt: {
      std::int64_t v;
      if (!parse_number(value, v)) return "expected an integer, got '" + std::string(value) + "'";
      break;
    }
    case ValueType::kUint: {
      std::uint64_t v;
      if (!parse_number(value, v)) {
        return "expected a non-negative integer, got '" + std::string(value) + "'";
      }
      break;
    }
    case ValueType::kFloat: {
      double v;
      if (!parse_float(value, v)) return "expected a number, got '" + std::string(value) + "'";
      break;
    }
    case ValueType::kBool:
      if (value != "true" && value != "false") {
        return "expected true or false, got '" + std::string(value) + "'";
      }
      break;
    case ValueType::kFloatList:
      for (auto part : split_list(value)) {
        double v;
        if (!parse_float(part, v)) {
          return "expected a comma-separated list of numbers, got '" + std::string(value) + "'";
        }
      }
      break;
    case ValueType::kString:
    case ValueType::kPath:
      if (value.empty()) return "value must not be empty";
      break;
  }
  if (!key.choices.empty() &&
      std::find(key.choices.begin(), key.choices.end(), value) == key.choices.end()) {
    std::string msg = "'" + std::string(value) + "' is not one of";
    for (const auto& c : key.choices) msg += " " + c;
    return msg;
  }
  return {};
}

}  // namespace

std::string_view value_type_name(ValueType type) {
  switch (type) {
    case ValueType::kInt: return "int";
    case ValueType::kUint: return "uint";
    case ValueType::kFloat: return "float";
    case ValueType::kBool: return "bool";
    case ValueType::kString: return "string";
    case ValueType::kPath: return "path";
    case ValueType::kFloatList: return "floats";
  }
  return "?";
}

const ConfigKey& RunConfig::key(std::string_view name) const {
  for (const auto& k : schema_) {
    if (k.name == name) return k;
  }
  throw ConfigError("unknown config key '" + std::string(name) + "'");
}

void RunConfig::parse(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key:type = value'");
    const std::string_view lhs = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto colon = lhs.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError(where + "missing type annotation in '" + std::string(lhs) + "'");
    }
    const std::string name(trim(lhs.substr(0, colon)));
    const std::string_view type = trim(lhs.substr(colon + 1));
    const ConfigKey* k = nullptr;
    for (const auto& candidate : schema_) {
      if (candidate.name == name) k = &candidate;
    }
    if (!k) throw ConfigError(where + "unknown key '" + name + "'");
    if (type != value_type_name(k->type)) {
      throw ConfigError(where + "key '" + name + "' has type " +
                        std::string(value_type_name(k->type)) + ", declared as " + std::string(type));
    }
    if (const std::string err = check_value(*k, value); !err.empty()) {
      throw ConfigError(where + name + ": " + err);
    }
    values_[name] = std::string(value);
    if (end == text.size()) break;
  }
}

void RunConfig::parse_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  parse(text, path.string());
}

void RunConfig::set(const std::string& name, const std::string& value, const std::string& source) {
  const ConfigKey& k = key(name);
  const std::string v(trim(value));
  if (const std::string err = check_value(k, v); !err.empty()) {
    throw ConfigError(source + ": " + name + ": " + err);
  }
  values_[name] = v;
}

void RunConfig::finalize() {
  for (const auto& k : schema_) {
    if (!values_.contains(k.name) && k.default_value) values_[k.name] = *k.default_value;
    if (!values_.contains(k.name)) {
      if (k.required) throw ConfigError("missing required config key '" + k.name + "'");
      continue;
    }
    if (k.type == ValueType::kPath && k.must_exist && !std::filesystem::exists(values_[k.name])) {
      throw ConfigError(k.name + ": path does not exist: " + values_[k.name]);
    }
  }
}

bool RunConfig::has(std::string_view name) const { return values_.find(name) != values_.end(); }

const std::string& RunConfig::raw(std::string_view name) const {
  const ConfigKey& k = key(name);
  const auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("config key '" + k.name + "' is not set");
  return it->second;
}

std::int64_t RunConfig::get_int(std::string_view name) const {
  std::int64_t v = 0;
  parse_number(std::string_view(raw(name)), v);
  return v;
}

std::uint64_t RunConfig::get_uint(std::string_view name) const {
  std::uint64_t v = 0;
  parse_number(std::string_view(raw(name)), v);
  return v;
}

double RunConfig::get_double(std::string_view name) const {
  double v = 0;
  parse_float(raw(name), v);
  return v;
}

bool RunConfig::get_bool(std::string_view name) const { return raw(name) == "true"; }

std::string RunConfig::get_string(std::string_view name) const { return raw(name); }

std::filesystem::path RunConfig::get_path(std::string_view name) const { return raw(name); }

std::vector<double> RunConfig::get_float_list(std::string_view name) const {
  std::vector<double> out;
  for (auto part : split_list(raw(name))) {
    double v = 0;
    parse_float(part, v);
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  for (const auto& k : schema_) {
    const auto it = values_.find(k.name);
    if (it == values_.end()) continue;
    out << k.name << ':' << value_type_name(k.type) << " = " << it->second << '\n';
  }
  return out.str();
}

std::uint64_t RunConfig::hash(const std::vector<std::string>& excluded) const {
  std::string text;
  for (const auto& k : schema_) {
    const auto it = values_.find(k.name);
    if (it == values_.end()) continue;
    if (std::find(excluded.begin(), excluded.end(), k.name) != excluded.end()) continue;
    text += k.name + ':' + std::string(value_type_name(k.type)) + " = " + it->second + '\n';
  }
  return fnv1a(text);
}

std::string hex64(std::uint64_t value) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace simplexlm
