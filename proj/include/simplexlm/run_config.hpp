#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace simplexlm {

enum class ValueType { kInt, kUint, kFloat, kBool, kString, kPath, kFloatList };

std::string_view value_type_name(ValueType type);

struct ConfigKey {
  std::string name;
  ValueType type = ValueType::kString;
  /// Applied by finalize() when the key is unset.
  std::optional<std::string> default_value;
  bool required = false;
  /// For kPath: the file must exist when finalize() runs.
  bool must_exist = false;
  std::vector<std::string> choices;
  std::string help;
};

using ConfigSchema = std::vector<ConfigKey>;

/// Flat typed key/value configuration.
///
/// Text form, one entry per line, `#` starts a comment:
///
///     seed:uint = 7
///     learning_rate:float = 1e-3
///     corpus:path = data/train.txt
///
/// The declared type must match the schema. Every problem is reported as a
/// ConfigError naming the source and line.
class RunConfig {
 public:
  explicit RunConfig(ConfigSchema schema) : schema_(std::move(schema)) {}

  void parse(std::string_view text, const std::string& source);
  void parse_file(const std::filesystem::path& path);
  /// Sets or overrides a value (e.g. from a command-line flag).
  void set(const std::string& name, const std::string& value, const std::string& source);
  /// Fills defaults, then checks required keys and path existence.
  void finalize();

  bool has(std::string_view name) const;
  std::int64_t get_int(std::string_view name) const;
  std::uint64_t get_uint(std::string_view name) const;
  double get_double(std::string_view name) const;
  bool get_bool(std::string_view name) const;
  std::string get_string(std::string_view name) const;
  std::filesystem::path get_path(std::string_view name) const;
  std::vector<double> get_float_list(std::string_view name) const;

  const ConfigSchema& schema() const { return schema_; }
  /// Every set value in schema order, in the text form above.
  std::string canonical() const;
  /// FNV-1a of canonical() without the keys listed in `excluded`.
  std::uint64_t hash(const std::vector<std::string>& excluded = {}) const;

 private:
  const ConfigKey& key(std::string_view name) const;
  const std::string& raw(std::string_view name) const;

  ConfigSchema schema_;
  std::map<std::string, std::string, std::less<>> values_;
};

/// Hex form used in file headers.
std::string hex64(std::uint64_t value);

}  // namespace simplexlm
