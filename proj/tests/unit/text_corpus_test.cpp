#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "simplexlm/errors.hpp"
#include "simplexlm/text_corpus.hpp"

namespace simplexlm {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("simplexlm_" + name);
}

TEST(BuildVocab, FrequencyOrder) {
  const Vocabulary v = Vocabulary::build("a b a", TokenizerMode::kWord, 10);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(0), "<pad>");
  EXPECT_EQ(v.token(1), "<unk>");
  EXPECT_EQ(v.token(2), "a");
  EXPECT_EQ(v.token(3), "b");
}

TEST(BuildVocab, CharModeTieBreaksLexicographically) {
  const Vocabulary v = Vocabulary::build("ba", TokenizerMode::kChar, 10);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(2), "a");
  EXPECT_EQ(v.token(3), "b");
}

TEST(BuildVocab, TruncationMapsRestToUnk) {
  const Vocabulary v = Vocabulary::build("e d c b a a", TokenizerMode::kWord, 3);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.token(2), "a");
  EXPECT_EQ(v.id("b"), Vocabulary::kUnk);
}

TEST(BuildVocab, EmptyCorpusThrows) {
  EXPECT_THROW(Vocabulary::build("  \n ", TokenizerMode::kWord, 10), DataError);
}

TEST(BuildVocab, CharModeSplitsUtf8CodePoints) {
  const Vocabulary v = Vocabulary::build("héé", TokenizerMode::kChar, 10);
  EXPECT_EQ(v.token(2), "é");
  EXPECT_EQ(v.token(3), "h");
}

TEST(Encode, KnownAndUnknownWords) {
  const Vocabulary v = Vocabulary::build("a b a", TokenizerMode::kWord, 10);
  EXPECT_EQ(v.encode("a b"), (TokenBlock{2, 3}));
  EXPECT_EQ(v.encode("a zebra"), (TokenBlock{2, Vocabulary::kUnk}));
}

TEST(Decode, OutOfRangeThrows) {
  const Vocabulary v = Vocabulary::build("a b", TokenizerMode::kWord, 10);
  const TokenBlock bad{4};
  EXPECT_THROW(v.decode(bad), DataError);
}

TEST(Encode, RoundTripOnRandomInVocabularyStrings) {
  std::string text;
  for (int i = 0; i < 50; ++i) text += "w" + std::to_string(i) + " ";
  for (auto mode : {TokenizerMode::kWord, TokenizerMode::kChar}) {
    const Vocabulary v = Vocabulary::build(text, mode, 100);
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
      std::string s;
      const auto n = 1 + rng.uniform_index(10);
      for (std::uint64_t j = 0; j < n; ++j) {
        if (j && mode == TokenizerMode::kWord) s += ' ';
        const int id = 2 + static_cast<int>(rng.uniform_index(v.size() - 2));
        s += v.token(id);
      }
      ASSERT_EQ(v.decode(v.encode(s)), s);
    }
  }
}

TEST(Vocabulary, SaveLoadPreservesTableAndHash) {
  const Vocabulary v = Vocabulary::build("x y\\z y", TokenizerMode::kWord, 10);
  const auto path = temp_path("vocab.txt");
  v.save(path);
  const Vocabulary w = Vocabulary::load(path, TokenizerMode::kWord);
  EXPECT_EQ(w.size(), v.size());
  EXPECT_EQ(w.hash(), v.hash());
  EXPECT_EQ(w.id("y\\z"), v.id("y\\z"));
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "<pad>");
  std::filesystem::remove(path);
}

TEST(Vocabulary, CharModeNewlineTokenSurvivesFile) {
  const Vocabulary v = Vocabulary::build("a\nb\n", TokenizerMode::kChar, 10);
  const auto path = temp_path("vocab_nl.txt");
  v.save(path);
  const Vocabulary w = Vocabulary::load(path, TokenizerMode::kChar);
  EXPECT_EQ(w.hash(), v.hash());
  EXPECT_NE(w.id("\n"), Vocabulary::kUnk);
  std::filesystem::remove(path);
}

TEST(Vocabulary, HashDependsOnMode) {
  const Vocabulary a({"<pad>", "<unk>", "a"}, TokenizerMode::kWord);
  const Vocabulary b({"<pad>", "<unk>", "a"}, TokenizerMode::kChar);
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Vocabulary, RejectsDuplicatesAndMissingReservedIds) {
  EXPECT_THROW(Vocabulary({"<pad>", "<unk>", "a", "a"}, TokenizerMode::kWord), DataError);
  EXPECT_THROW(Vocabulary({"a", "<unk>", "b"}, TokenizerMode::kWord), DataError);
  EXPECT_THROW(Vocabulary({"<pad>", "<unk>"}, TokenizerMode::kWord), DataError);
}

TEST(Pack, DropsRemainder) {
  const TokenBlock ids{2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const PackedCorpus c = pack_sequences(ids, 3, 0.0, 1);
  ASSERT_EQ(c.sequences.size(), 3u);
  EXPECT_EQ(c.sequences[2], (TokenBlock{8, 9, 10}));
  EXPECT_EQ(c.heldout_indices().size(), 0u);
}

TEST(Pack, StreamShorterThanLengthThrows) {
  const TokenBlock ids{2, 3};
  EXPECT_THROW(pack_sequences(ids, 3, 0.0, 1), DataError);
}

TEST(Pack, HoldoutCountWithinBinomialBoundAndReproducible) {
  const TokenBlock ids(10000, 2);
  const PackedCorpus a = pack_sequences(ids, 1, 0.01, 17);
  const PackedCorpus b = pack_sequences(ids, 1, 0.01, 17);
  const auto held = a.heldout_indices().size();
  EXPECT_GE(held, 60u);
  EXPECT_LE(held, 140u);
  EXPECT_EQ(a.held_out, b.held_out);
  EXPECT_EQ(a.train_indices().size() + held, 10000u);
}

TEST(Pack, ValidateCatchesBadIds) {
  PackedCorpus c = pack_sequences(TokenBlock{2, 3, 4, 5}, 2, 0.0, 1);
  EXPECT_NO_THROW(c.validate(6));
  EXPECT_THROW(c.validate(5), DataError);
}

TEST(SampleBatch, SingletonCorpus) {
  const PackedCorpus c = pack_sequences(TokenBlock{2, 3, 4}, 3, 0.0, 1);
  Rng rng(1);
  for (const auto& s : sample_batch(c, 5, rng)) EXPECT_EQ(s, (TokenBlock{2, 3, 4}));
}

TEST(SampleBatch, SameSeedSameBatch) {
  TokenBlock ids;
  for (int i = 0; i < 100; ++i) ids.push_back(2 + i % 7);
  const PackedCorpus c = pack_sequences(ids, 4, 0.0, 1);
  Rng a(3), b(3);
  EXPECT_EQ(sample_batch(c, 8, a), sample_batch(c, 8, b));
}

TEST(SampleBatch, EmptyTrainSplitThrows) {
  const PackedCorpus c = pack_sequences(TokenBlock{2, 3}, 2, 1.0, 1);
  Rng rng(1);
  EXPECT_THROW(sample_batch(c, 1, rng), DataError);
}

TEST(SampleBatch, UniformOverTrainSplit) {
  TokenBlock ids;
  for (int i = 0; i < 10; ++i) ids.push_back(i);
  const PackedCorpus c = pack_sequences(ids, 1, 0.0, 1);
  Rng rng(11);
  std::vector<double> counts(10, 0.0);
  const int draws = 100000;
  for (const auto& s : sample_batch(c, draws, rng)) counts[static_cast<std::size_t>(s[0])] += 1;
  const double expected = draws / 10.0;
  const double sigma = std::sqrt(draws * 0.1 * 0.9);
  double chi2 = 0.0;
  for (double n : counts) {
    EXPECT_LT(std::abs(n - expected), 3.0 * sigma);
    chi2 += (n - expected) * (n - expected) / expected;
  }
  // 99.9% quantile of chi-squared with 9 degrees of freedom.
  EXPECT_LT(chi2, 27.877);
}

TEST(LabeledCorpus, ParsesTabSeparatedLinesAndReportsBadLine) {
  const auto path = temp_path("labeled.txt");
  {
    std::ofstream out(path);
    out << "pos\tgood day\n\nneg\tbad day\n";
  }
  const auto rows = read_labeled_corpus(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].label, "neg");
  EXPECT_EQ(rows[1].text, "bad day");
  {
    std::ofstream out(path);
    out << "pos\tok\nno tab here\n";
  }
  try {
    read_labeled_corpus(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace simplexlm
