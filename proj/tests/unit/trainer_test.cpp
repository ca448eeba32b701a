#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "simplexlm/checkpoint.hpp"
#include "simplexlm/trainer.hpp"

namespace simplexlm {
namespace {

ModelConfig tiny_model(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.max_length = 16;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.seq_length = 12;
  t.block_length = 4;
  t.diffusion_steps = 20;
  t.batch_size = 4;
  t.optimizer.learning_rate = 1e-3;
  t.total_steps = 10;
  return t;
}

PackedCorpus tiny_corpus(std::size_t vocab, std::size_t sequences, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> ids(12 * sequences);
  for (int& id : ids) id = static_cast<int>(rng.uniform_index(vocab));
  return pack_sequences(ids, 12, 0.0, seed);
}

TrainState fresh_state(const ModelConfig& c, std::uint64_t seed) {
  DiffusionModel model(c, seed, false);
  AdamWState opt = AdamWState::zeros_for(model.parameters());
  return TrainState{std::move(model), std::move(opt), Rng(seed + 1), 0};
}

TEST(DrawCorruption, ContextLengthStaysInRange) {
  Rng rng(1);
  std::vector<int> seen_c(13, 0), seen_t(21, 0);
  for (int i = 0; i < 20000; ++i) {
    const CorruptionDraw d = draw_corruption(12, 4, 20, rng);
    ASSERT_GE(d.context_length, 1u);
    ASSERT_LE(d.context_length, 8u);
    ASSERT_GE(d.timestep, 1);
    ASSERT_LE(d.timestep, 20);
    seen_c[d.context_length]++;
    seen_t[d.timestep]++;
  }
  for (std::size_t c = 1; c <= 8; ++c) EXPECT_GT(seen_c[c], 0);
  for (int t = 1; t <= 20; ++t) EXPECT_GT(seen_t[t], 0);
}

TEST(TrainConfig, ValidateRejectsImpossibleBlock) {
  TrainConfig t = tiny_train();
  t.block_length = 12;
  EXPECT_THROW(t.validate(), ConfigError);
  t = tiny_train();
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Trainer, ZeroLearningRateLeavesWeightsUntouched) {
  const ModelConfig c = tiny_model(9);
  TrainConfig t = tiny_train();
  t.optimizer.learning_rate = 0.0;
  t.optimizer.weight_decay = 0.0;
  TrainState state = fresh_state(c, 2);
  const ParameterSet before = state.model.parameters();
  const NoiseSchedule s = NoiseSchedule::cosine(t.diffusion_steps);
  train_loop(state, tiny_corpus(9, 6, 3), s, t);
  EXPECT_EQ(state.step, t.total_steps);
  EXPECT_EQ(state.model.parameters(), before);
}

TEST(Trainer, LossDecreasesOnOneSequence) {
  const ModelConfig c = tiny_model(9);
  TrainConfig t = tiny_train();
  t.optimizer.learning_rate = 3e-3;
  t.batch_size = 8;
  t.total_steps = 50;
  TrainState state = fresh_state(c, 4);
  const PackedCorpus corpus = tiny_corpus(9, 1, 5);
  const NoiseSchedule s = NoiseSchedule::cosine(t.diffusion_steps);
  const double before = evaluate_nll(state.model, corpus.sequences, s, 4, 64, 6);
  train_loop(state, corpus, s, t);
  const double after = evaluate_nll(state.model, corpus.sequences, s, 4, 64, 6);
  EXPECT_LT(after, before);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const ModelConfig c = tiny_model(9);
  TrainConfig t = tiny_train();
  t.total_steps = 12;
  const PackedCorpus corpus = tiny_corpus(9, 5, 7);
  const NoiseSchedule s = NoiseSchedule::cosine(t.diffusion_steps);

  TrainState straight = fresh_state(c, 8);
  train_loop(straight, corpus, s, t);

  TrainConfig half = t;
  half.total_steps = 5;
  TrainState first = fresh_state(c, 8);
  train_loop(first, corpus, s, half);
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(make_checkpoint(first, 1, 2, 8));
  TrainState resumed = restore_train_state(deserialize_checkpoint(bytes));
  EXPECT_EQ(resumed.step, 5u);
  train_loop(resumed, corpus, s, t);

  EXPECT_EQ(resumed.step, straight.step);
  EXPECT_EQ(resumed.model.parameters(), straight.model.parameters());
  EXPECT_EQ(resumed.optimizer, straight.optimizer);
  EXPECT_EQ(resumed.rng, straight.rng);
}

TEST(Trainer, HooksFireOnSchedule) {
  const ModelConfig c = tiny_model(9);
  TrainConfig t = tiny_train();
  t.total_steps = 7;
  t.checkpoint_interval = 3;
  TrainState state = fresh_state(c, 9);
  std::vector<std::uint64_t> logged, saved;
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& l) {
    logged.push_back(l.step);
    EXPECT_TRUE(std::isfinite(l.per_token_nll));
  };
  hooks.on_checkpoint = [&](const TrainState& s) { saved.push_back(s.step); };
  train_loop(state, tiny_corpus(9, 4, 10), NoiseSchedule::cosine(20), t, hooks);
  EXPECT_EQ(logged, (std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(saved, (std::vector<std::uint64_t>{3, 6, 7}));
}

TEST(Trainer, ShouldStopEndsEarly) {
  TrainState state = fresh_state(tiny_model(9), 11);
  TrainHooks hooks;
  hooks.should_stop = [](const TrainState& s) { return s.step == 2; };
  train_loop(state, tiny_corpus(9, 4, 12), NoiseSchedule::cosine(20), tiny_train(), hooks);
  EXPECT_EQ(state.step, 2u);
}

TEST(Trainer, NonFiniteLossThrowsDivergence) {
  TrainState state = fresh_state(tiny_model(9), 13);
  state.model.parameters()[state.model.output_weight_index()].data()[0] =
      std::numeric_limits<double>::quiet_NaN();
  const PackedCorpus corpus = tiny_corpus(9, 2, 14);
  try {
    train_step(state, corpus.sequences, NoiseSchedule::cosine(20), tiny_train());
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("c="), std::string::npos);
    EXPECT_EQ(state.step, 0u);
  }
}

TEST(Trainer, CheckFiniteModeReportsNumericError) {
  TrainState state = fresh_state(tiny_model(9), 15);
  state.model.parameters()[0].data()[0] = std::numeric_limits<double>::infinity();
  TrainConfig t = tiny_train();
  t.check_finite = true;
  const PackedCorpus corpus = tiny_corpus(9, 2, 16);
  EXPECT_THROW(train_step(state, corpus.sequences, NoiseSchedule::cosine(20), t), NumericError);
}

TEST(Trainer, RejectsMismatchedSequenceLength) {
  TrainState state = fresh_state(tiny_model(9), 17);
  const std::vector<TokenBlock> batch{TokenBlock(10, 1)};
  EXPECT_THROW(train_step(state, batch, NoiseSchedule::cosine(20), tiny_train()), DataError);
  TrainConfig t = tiny_train();
  t.seq_length = 10;
  EXPECT_THROW(train_loop(state, tiny_corpus(9, 2, 18), NoiseSchedule::cosine(20), t), ConfigError);
}

TEST(Trainer, EvaluateIsDeterministic) {
  const TrainState state = fresh_state(tiny_model(9), 19);
  const PackedCorpus corpus = tiny_corpus(9, 3, 20);
  const NoiseSchedule s = NoiseSchedule::cosine(20);
  EXPECT_EQ(evaluate_nll(state.model, corpus.sequences, s, 4, 5, 1),
            evaluate_nll(state.model, corpus.sequences, s, 4, 5, 1));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TrainState state = fresh_state(tiny_model(9), 21);
  train_loop(state, tiny_corpus(9, 3, 22), NoiseSchedule::cosine(20), tiny_train());
  Checkpoint ck = make_checkpoint(state, 0xabc, 0xdef, 21);
  ck.set_meta("note", std::string("x y"));
  const auto dir = std::filesystem::temp_directory_path() / "simplexlm_ckpt_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.bin", ck);
  const Checkpoint loaded = load_checkpoint(dir / "a.bin", ArtifactKind::kDiffusionModel);
  EXPECT_EQ(loaded, ck);
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(ck));
  EXPECT_FALSE(std::filesystem::exists(dir / "a.bin.tmp"));
  EXPECT_THROW(load_checkpoint(dir / "a.bin", ArtifactKind::kClassifier), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ReloadedModelPredictsIdentically) {
  const TrainState state = fresh_state(tiny_model(9), 23);
  const DiffusionModel reloaded =
      restore_model(deserialize_checkpoint(serialize_checkpoint(make_checkpoint(state, 1, 1, 1))));
  EXPECT_EQ(reloaded.config(), state.model.config());
  const NoiseSchedule s = NoiseSchedule::cosine(20);
  Rng rng(24);
  const TokenBlock block{1, 2, 3};
  const LogitBlock noisy = forward_diffuse(logits_generation(block, 5.0, 9), s, 10, rng);
  const std::vector<int> ctx{4, 5};
  EXPECT_EQ(reloaded.predict(ctx, noisy, 10, s), state.model.predict(ctx, noisy, 10, s));
}

TEST(Checkpoint, RejectsCorruption) {
  const TrainState state = fresh_state(tiny_model(5), 25);
  const std::vector<std::uint8_t> good = serialize_checkpoint(make_checkpoint(state, 1, 1, 1));

  auto expect_error = [](std::vector<std::uint8_t> bytes, const std::string& fragment) {
    try {
      deserialize_checkpoint(bytes);
      ADD_FAILURE() << "expected DataError containing '" << fragment << "'";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };

  std::vector<std::uint8_t> bad_version = good;
  bad_version[8] = 2;
  expect_error(bad_version, "version");

  std::vector<std::uint8_t> flipped = good;
  flipped[flipped.size() / 2] ^= 0x40;
  expect_error(flipped, "checksum");

  std::vector<std::uint8_t> magic = good;
  magic[0] = 'X';
  expect_error(magic, "magic");

  // A cut-short file fails the trailing checksum before parsing starts.
  expect_error(std::vector<std::uint8_t>(good.begin(), good.begin() + 20), "checksum");
  expect_error(std::vector<std::uint8_t>(good.begin(), good.begin() + 4), "magic");
}

TEST(Checkpoint, MetadataAccessors) {
  Checkpoint ck;
  ck.set_meta("a", std::size_t{42});
  ck.set_meta("b", 0.1);
  ck.set_meta("a", std::size_t{43});
  EXPECT_EQ(ck.meta_size("a"), 43u);
  EXPECT_EQ(ck.meta_double("b"), 0.1);
  EXPECT_THROW(ck.meta("missing"), DataError);
  ck.set_meta("c", std::string("nope"));
  EXPECT_THROW(ck.meta_size("c"), DataError);
}

TEST(Checkpoint, RestoreRejectsOtherKinds) {
  Checkpoint ck;
  ck.kind = ArtifactKind::kClassifier;
  EXPECT_THROW(restore_model(ck), DataError);
}

}  // namespace
}  // namespace simplexlm
