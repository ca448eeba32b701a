#include "simplexlm/text_corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "simplexlm/errors.hpp"

namespace simplexlm {

TokenizerMode parse_tokenizer_mode(std::string_view name) {
  if (name == "word") return TokenizerMode::kWord;
  if (name == "char") return TokenizerMode::kChar;
  throw ConfigError("unknown tokenizer mode '" + std::string(name) + "' (expected word|char)");
}

std::string_view tokenizer_mode_name(TokenizerMode mode) {
  return mode == TokenizerMode::kWord ? "word" : "char";
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: keep it as its own token
}

std::string escape_token(const std::string& token) {
  std::string out;
  for (char c : token) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else if (c == '\r') out += "\\r";
    else out += c;
  }
  return out;
}

std::string unescape_token(const std::string& line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && i + 1 < line.size()) {
      const char n = line[++i];
      out += n == 'n' ? '\n' : n == 'r' ? '\r' : n;
    } else {
      out += line[i];
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view text, TokenizerMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizerMode::kWord) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !is_space(text[i])) ++i;
      if (i > start) out.emplace_back(text.substr(start, i - start));
    }
  } else {
    std::size_t i = 0;
    while (i < text.size()) {
      const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      out.emplace_back(text.substr(i, n));
      i += n;
    }
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, TokenizerMode mode)
    : tokens_(std::move(tokens)), mode_(mode) {
  if (tokens_.size() < 3) throw DataError("vocabulary needs at least 3 entries");
  if (tokens_[kPad] != kPadToken || tokens_[kUnk] != kUnkToken) {
    throw DataError("vocabulary must reserve ids 0 and 1 for <pad> and <unk>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::string_view text, TokenizerMode mode, std::size_t max_size) {
  if (max_size < 3) throw ConfigError("vocabulary max_size must be >= 3");
  const auto raw = split_tokens(text, mode);
  if (raw.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : raw) {
    if (t == kPadToken || t == kUnkToken) continue;
    ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kUnkToken)};
  for (const auto& [token, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(token);
  }
  if (tokens.size() < 3) throw DataError("corpus contains no usable tokens");
  return Vocabulary(std::move(tokens), mode);
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

TokenBlock Vocabulary::encode(std::string_view text) const {
  TokenBlock out;
  for (const auto& t : split_tokens(text, mode_)) out.push_back(id(t));
  return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (mode_ == TokenizerMode::kWord && i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  feed(tokenizer_mode_name(mode_));
  for (const auto& t : tokens_) feed(t);
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << escape_token(t) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, TokenizerMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(unescape_token(line));
  return Vocabulary(std::move(tokens), mode);
}

std::vector<std::size_t> PackedCorpus::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (!held_out[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> PackedCorpus::heldout_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (held_out[i]) out.push_back(i);
  }
  return out;
}

void PackedCorpus::validate(std::size_t vocab_size) const {
  if (held_out.size() != sequences.size()) throw DataError("held-out flags do not match sequences");
  for (const auto& s : sequences) {
    if (s.size() != length) throw DataError("packed sequence has wrong length");
    for (int id : s) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
        throw DataError("packed sequence holds out-of-vocabulary id " + std::to_string(id));
      }
    }
  }
}

PackedCorpus pack_sequences(std::span<const int> ids, std::size_t length, double holdout_fraction,
                            std::uint64_t seed) {
  if (length == 0) throw ConfigError("sequence length must be positive");
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0)) {
    throw ConfigError("holdout fraction must lie in [0, 1]");
  }
  if (ids.size() < length) {
    throw DataError("token stream of " + std::to_string(ids.size()) +
                    " is shorter than sequence length " + std::to_string(length));
  }
  PackedCorpus out;
  out.length = length;
  out.holdout_fraction = holdout_fraction;
  Rng rng(seed);
  for (std::size_t start = 0; start + length <= ids.size(); start += length) {
    out.sequences.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(start),
                               ids.begin() + static_cast<std::ptrdiff_t>(start + length));
    out.held_out.push_back(rng.uniform() < holdout_fraction);
  }
  return out;
}

std::vector<TokenBlock> sample_batch(const PackedCorpus& corpus, std::size_t batch, Rng& rng) {
  const auto train = corpus.train_indices();
  if (train.empty()) throw DataError("training split is empty");
  std::vector<TokenBlock> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(corpus.sequences[train[rng.uniform_index(train.size())]]);
  return out;
}

std::vector<LabeledText> read_labeled_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read labeled corpus " + path.string());
  std::vector<LabeledText> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected label<TAB>text");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace simplexlm
