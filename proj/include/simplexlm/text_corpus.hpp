#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "simplexlm/rng.hpp"
#include "simplexlm/simplex_codec.hpp"

namespace simplexlm {

enum class TokenizerMode { kWord, kChar };

TokenizerMode parse_tokenizer_mode(std::string_view name);
std::string_view tokenizer_mode_name(TokenizerMode mode);

/// Token table with reserved ids 0 (padding / beginning-of-sequence) and
/// 1 (unknown).
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary(std::vector<std::string> tokens, TokenizerMode mode);

  /// Keeps the max_size - 2 most frequent tokens; ties go to the
  /// lexicographically smaller token.
  static Vocabulary build(std::string_view text, TokenizerMode mode, std::size_t max_size);

  std::size_t size() const { return tokens_.size(); }
  TokenizerMode mode() const { return mode_; }
  const std::string& token(int id) const;
  /// Id of `token`, or kUnk when absent.
  int id(std::string_view token) const;

  TokenBlock encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  /// FNV-1a over the mode and the token table; identifies a tokenizer.
  std::uint64_t hash() const;

  /// One token per line, line number = id. Newlines, carriage returns and
  /// backslashes inside tokens are written as \n, \r and \\.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path, TokenizerMode mode);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  TokenizerMode mode_;
};

/// Splits text into raw tokens: whitespace-separated words, or UTF-8 code
/// points in character mode.
std::vector<std::string> split_tokens(std::string_view text, TokenizerMode mode);

/// Fixed-length training windows with a per-sequence held-out flag.
struct PackedCorpus {
  std::size_t length = 0;
  double holdout_fraction = 0.0;
  std::vector<TokenBlock> sequences;
  std::vector<bool> held_out;

  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> heldout_indices() const;

  /// Checks lengths, id range and flag consistency; throws DataError.
  void validate(std::size_t vocab_size) const;
};

/// Consecutive non-overlapping windows of `length`; the remainder is dropped.
/// Each window is held out independently with probability holdout_fraction.
PackedCorpus pack_sequences(std::span<const int> ids, std::size_t length, double holdout_fraction,
                            std::uint64_t seed);

/// Uniform draws with replacement from the training split.
std::vector<TokenBlock> sample_batch(const PackedCorpus& corpus, std::size_t batch, Rng& rng);

struct LabeledText {
  std::string label;
  std::string text;
};

/// Reads `label<TAB>text` lines; blank lines are skipped.
std::vector<LabeledText> read_labeled_corpus(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace simplexlm
