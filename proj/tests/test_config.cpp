#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "sekge/checkpoint.hpp"
#include "sekge/config.hpp"
#include "sekge/error.hpp"
#include "sekge/evaluation.hpp"
#include "test_util.hpp"

using namespace sekge;
using sekge::testing::TempDir;

namespace {

std::string message_of(const std::string& text) {
  try {
    TrainConfig::from_config(Config::from_string(text));
  } catch (const UsageError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesKeysCommentsAndDefaults) {
  const auto c = TrainConfig::from_config(Config::from_string(
      "# model\n\nn = 32\nreshape_rows=4\ncomposition=mlp\nleakage_removal=false\nlr=0.01\n"));
  EXPECT_EQ(c.n, 32u);
  EXPECT_EQ(c.reshape_rows, 4u);
  EXPECT_EQ(c.reshape_cols, 8u);
  EXPECT_EQ(c.composition, Composition::mlp);
  EXPECT_FALSE(c.leakage_removal);
  EXPECT_DOUBLE_EQ(c.lr, 0.01);
  EXPECT_EQ(c.layers, 2u);
  EXPECT_EQ(c.seed, 42u);
}

TEST(Config, MissingRequiredKeyNamesIt) {
  const auto msg = message_of("layers=2\n");
  EXPECT_NE(msg.find("'n'"), std::string::npos) << msg;
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_NE(message_of("n=200\nlearning_rate=1\n").find("learning_rate"), std::string::npos);
  EXPECT_NE(message_of("n=abc\n").find("'n'"), std::string::npos);
  EXPECT_NE(message_of("n=200\nlabel_smoothing=1.5\n").find("label_smoothing"),
            std::string::npos);
  EXPECT_NE(message_of("n=200\nedge_removal_rate=-0.1\n").find("edge_removal_rate"),
            std::string::npos);
  EXPECT_NE(message_of("n=200\nreshape_rows=7\n").find("reshape"), std::string::npos);
  EXPECT_NE(message_of("n=200\ncomposition=sub\n"), "");
  EXPECT_NE(message_of("n=200\nleakage_removal=maybe\n"), "");
  EXPECT_NE(message_of("no equals sign\n"), "");
}

TEST(Config, CanonicalTextRoundTrips) {
  const auto c = TrainConfig::from_config(Config::from_string("n=16\nreshape_rows=4\nseed=9\n"));
  const auto again = TrainConfig::from_config(Config::from_string(c.to_text()));
  EXPECT_EQ(again.to_text(), c.to_text());
  EXPECT_EQ(again.signature(), c.signature());
  auto other = c;
  other.seed = 10;
  EXPECT_NE(other.signature(), c.signature());
}

TEST(Config, HelpListsEveryKeyWithDefault) {
  const auto help = config_help();
  for (const auto& key : config_schema()) {
    EXPECT_NE(help.find(std::string(key.name)), std::string::npos) << key.name;
  }
  EXPECT_NE(help.find("0.0003"), std::string::npos);
}

TEST(Config, ReadsFilesAndReportsLine) {
  TempDir dir("cfg");
  const auto path = dir.path() / "run.cfg";
  std::ofstream(path) << "n=16\nreshape_rows=4\nbogus\n";
  try {
    Config::from_file(path);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Config::from_file(dir.path() / "missing.cfg"), UsageError);
}

TEST(Checkpoint, RoundTripReproducesScoresBitForBit) {
  TempDir dir("ckpt");
  const auto store = sekge::testing::toy_store();
  const auto config = sekge::testing::toy_config();
  SeGnnModel<float> model(config, 8, 6);
  // Move batch-norm statistics away from their initial values.
  for (auto* s : model.decoder().norm_stats()) s->running_mean.fill(0.25f);
  save_checkpoint(dir.path(), model, config, store.vocab(), 3, 0.5);

  CheckpointInfo info;
  auto loaded = load_checkpoint<float>(dir.path(), store.vocab(), &info);
  EXPECT_EQ(info.epoch, 3u);
  EXPECT_EQ(info.valid_mrr, 0.5);
  EXPECT_EQ(info.dtype, DType::f32);
  EXPECT_EQ(info.signature, config.signature());
  EXPECT_EQ(info.config.to_text(), config.to_text());

  const auto a = rank_queries(model, store, Split::valid);
  const auto b = rank_queries(loaded, store, Split::valid);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].rank, b[i].rank);

  const auto sa = model.state();
  const auto sb = loaded.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].first, sb[i].first);
    EXPECT_TRUE(std::ranges::equal(sa[i].second->values(), sb[i].second->values())) << sa[i].first;
  }
}

TEST(Checkpoint, ManifestLoadsAsConfig) {
  TempDir dir("manifest");
  const auto store = sekge::testing::toy_store();
  const auto config = sekge::testing::toy_config();
  SeGnnModel<double> model(config, 8, 6);
  save_checkpoint(dir.path(), model, config, store.vocab(), 1, 0.1);
  const auto again = TrainConfig::from_config(Config::from_file(dir.path() / "manifest.txt"));
  EXPECT_EQ(again.signature(), config.signature());
  EXPECT_EQ(read_manifest(dir.path()).dtype, DType::f64);
}

TEST(Checkpoint, VocabularyMismatchIsFatal) {
  TempDir dir("vocab");
  const auto store = sekge::testing::toy_store();
  const auto config = sekge::testing::toy_config();
  SeGnnModel<float> model(config, 8, 6);
  save_checkpoint(dir.path(), model, config, store.vocab(), 1, 0.1);
  const std::vector<Triple> train{{0, 0, 8}};
  const auto other = TripleStore::from_ids(9, 3, train, {}, {});
  EXPECT_THROW(load_checkpoint<float>(dir.path(), other.vocab()), DataError);
  EXPECT_THROW(load_checkpoint<float>(dir.path() / "nope", store.vocab()), DataError);
}

TEST(Checkpoint, CorruptTensorIsFatal) {
  TempDir dir("corrupt");
  const auto store = sekge::testing::toy_store();
  const auto config = sekge::testing::toy_config();
  SeGnnModel<float> model(config, 8, 6);
  save_checkpoint(dir.path(), model, config, store.vocab(), 1, 0.1);
  const auto info = read_manifest(dir.path());
  ASSERT_FALSE(info.tensors.empty());
  std::ofstream(dir.path() / (info.tensors[0] + ".bin"), std::ios::trunc) << "junk";
  EXPECT_THROW(load_checkpoint<float>(dir.path(), store.vocab()), DataError);
}
