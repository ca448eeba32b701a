#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "simplexlm/optimizer.hpp"
#include "simplexlm/parameters.hpp"

namespace simplexlm {

enum class ArtifactKind : std::uint32_t {
  kDiffusionModel = 1,
  kClassifier = 2,
  kReferenceModel = 3,
};

std::string_view artifact_kind_name(ArtifactKind kind);

/// Versioned binary container shared by every model type. The byte layout
/// is documented in docs/checkpoint_format.md.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ArtifactKind kind = ArtifactKind::kDiffusionModel;
  std::uint64_t vocab_hash = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string rng_state;
  /// Model configuration and other string-typed settings, in order.
  std::vector<std::pair<std::string, std::string>> metadata;
  ParameterSet parameters;
  std::optional<AdamWState> optimizer;

  /// Throws DataError when `key` is missing.
  const std::string& meta(std::string_view key) const;
  std::size_t meta_size(std::string_view key) const;
  double meta_double(std::string_view key) const;
  void set_meta(std::string key, std::string value);
  void set_meta(std::string key, std::size_t value);
  /// Shortest representation that parses back to the same double.
  void set_meta(std::string key, double value);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws DataError on bad magic, version mismatch, truncation or checksum failure.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Written via a temporary file and rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<ArtifactKind> expected = std::nullopt);

/// Writes `bytes` to `path` through a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a(std::string_view text);

}  // namespace simplexlm
