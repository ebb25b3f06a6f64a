#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "sekge/checkpoint.hpp"
#include "sekge/error.hpp"
#include "sekge/evaluation.hpp"
#include "sekge/training.hpp"
#include "test_util.hpp"

using namespace sekge;
using sekge::testing::TempDir;
using sekge::testing::toy_config;
using sekge::testing::toy_store;

namespace {

double bce_oracle(const std::vector<double>& logits, const std::vector<double>& y, double eps) {
  const double n = static_cast<double>(y.size());
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double s = y[i] * (1 - eps) + eps / n;
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    total -= s * std::log(p) + (1 - s) * std::log(1 - p);
  }
  return total / n;
}

double loss_of(const std::vector<double>& logits, const std::vector<double>& y, double eps) {
  Tensor<double> l({1, logits.size()}), t({1, y.size()});
  std::copy(logits.begin(), logits.end(), l.data());
  std::copy(y.begin(), y.end(), t.data());
  Tape<double> tape(false);
  return bce_loss(tape.constant(l), t, eps).value()[0];
}

}  // namespace

TEST(Loss, UninformedLogitsGiveLogTwo) {
  EXPECT_NEAR(loss_of({0, 0, 0, 0}, {0, 1, 0, 0}, 0.0), std::log(2.0), 1e-12);
}

TEST(Loss, ConfidentCorrectLogitsApproachZero) {
  EXPECT_LT(loss_of({-40, 40, -40}, {0, 1, 0}, 0.0), 1e-12);
}

TEST(Loss, MatchesScalarOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> logits(6), y(6, 0.0);
    for (auto& v : logits) v = normal(rng);
    y[rng() % 6] = 1.0;
    y[rng() % 6] = 1.0;
    for (double eps : {0.0, 0.1}) {
      EXPECT_NEAR(loss_of(logits, y, eps), bce_oracle(logits, y, eps), 1e-6);
    }
  }
}

TEST(Loss, RowWithoutPositiveIsFatal) {
  EXPECT_THROW(loss_of({0.5, 0.1}, {0, 0}, 0.1), DataError);
}

TEST(Loss, SmoothedTargetsKeepTheirMass) {
  Tensor<double> y({1, 4}, 0.0);
  y[2] = 1.0;
  const auto s = smooth_labels(y, 0.2);
  EXPECT_DOUBLE_EQ(s[2], 0.85);
  EXPECT_DOUBLE_EQ(s[0], 0.05);
}

TEST(Targets, MultiHotRowsFromGroups) {
  const auto store = toy_store();
  const auto groups = store.train_query_groups();
  const auto t = multi_hot_targets<double>(std::span(groups).first(3), 8);
  for (std::size_t i = 0; i < 3; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 8; ++j) total += t(i, j);
    EXPECT_EQ(total, static_cast<double>(groups[i].answers.size()));
    for (EntityId a : groups[i].answers) EXPECT_EQ(t(i, a), 1.0);
  }
}

TEST(BatchGraph, LeakageRemovalDropsBatchEdgesAndTwins) {
  std::mt19937_64 rng(2);
  const auto store = sekge::testing::random_store(rng, 20, 3, 120);
  const auto groups = store.train_query_groups();
  const auto batch = std::span(groups).first(10);
  std::vector<char> kept;
  batch_graph(store, batch, 0.0, true, rng, &kept);
  const auto edges = store.aug_edges();
  std::size_t removed = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    bool in_batch = false;
    for (const auto& g : batch) {
      for (EntityId t : g.answers) {
        const Triple e{g.head, g.relation, t};
        const auto twin = edges[store.aug_twin(i)];
        in_batch |= edges[i] == e || twin == e;
      }
    }
    EXPECT_EQ(kept[i] == 0, in_batch) << "edge " << i;
    removed += kept[i] == 0;
  }
  EXPECT_GT(removed, 0u);
  const auto full = batch_graph(store, batch, 0.0, false, rng);
  EXPECT_EQ(full.size(), edges.size());
}

TEST(BatchGraph, RemovalRateIsApproximatelyHonoured) {
  std::mt19937_64 rng(3);
  const auto store = sekge::testing::random_store(rng, 200, 5, 3000);
  const auto g = batch_graph(store, {}, 0.25, false, rng);
  const double kept = static_cast<double>(g.size()) / static_cast<double>(store.aug_edges().size());
  EXPECT_NEAR(kept, 0.75, 0.02);
}

TEST(Trainer, StepOnFixedBatchDecreasesLoss) {
  const auto store = toy_store();
  auto config = toy_config();
  config.lr = 1e-4;
  config.edge_removal_rate = 0.0;
  config.leakage_removal = false;
  config.hidden_dropout = 0.0;
  config.label_smoothing = 0.0;
  SeGnnModel<double> model(config, 8, 6);
  Trainer<double> trainer(model, store, config);
  const auto batch = std::span(trainer.groups()).first(8);
  const auto graph = AggregationGraph::from_edges(store.aug_edges());
  const auto loss_now = [&] {
    IndexList heads, rels;
    for (const auto& g : batch) {
      heads.push_back(g.head);
      rels.push_back(g.relation);
    }
    Tape<double> tape(false);
    std::mt19937_64 unused(0);
    const auto logits = model.forward(tape, graph, heads, rels, true, unused);
    return bce_loss(logits, multi_hot_targets<double>(batch, 8), 0.0).value()[0];
  };
  const double before = loss_now();
  EXPECT_NEAR(trainer.train_batch(batch), before, 1e-12);
  EXPECT_LT(loss_now(), before);
}

TEST(Trainer, SameSeedGivesIdenticalLosses) {
  const auto store = toy_store();
  const auto config = toy_config();
  std::vector<double> runs[2];
  for (auto& losses : runs) {
    SeGnnModel<float> model(config, 8, 6);
    Trainer<float> trainer(model, store, config);
    for (int e = 0; e < 3; ++e) losses.push_back(trainer.train_epoch());
  }
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(Trainer, NonFiniteLossNamesBatchAndSeed) {
  const auto store = toy_store();
  const auto config = toy_config();
  SeGnnModel<double> model(config, 8, 6);
  model.decoder().entity_bias().value[0] = std::numeric_limits<double>::quiet_NaN();
  Trainer<double> trainer(model, store, config);
  try {
    trainer.train_epoch();
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("batch 0"), std::string::npos) << what;
    EXPECT_NE(what.find("seed 7"), std::string::npos) << what;
  }
}

TEST(Fit, ZeroPatienceStopsAfterFirstEvaluation) {
  const auto store = toy_store();
  auto config = toy_config();
  config.patience = 0;
  config.eval_every = 1;
  config.epochs = 5;
  SeGnnModel<float> model(config, 8, 6);
  const auto r = fit(model, store, config);
  EXPECT_EQ(r.evaluations, 1u);
  EXPECT_EQ(r.epochs_run, 1u);
}

TEST(Fit, ZeroEpochsEvaluatesOnce) {
  const auto store = toy_store();
  auto config = toy_config();
  config.epochs = 0;
  SeGnnModel<float> model(config, 8, 6);
  const auto r = fit(model, store, config);
  EXPECT_EQ(r.evaluations, 1u);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_TRUE(r.epoch_losses.empty());
}

TEST(Fit, WritesLogAndReloadableBestCheckpoint) {
  TempDir dir("fit");
  const auto store = toy_store();
  auto config = toy_config();
  config.epochs = 20;
  config.eval_every = 5;
  SeGnnModel<float> model(config, 8, 6);
  std::ostringstream log;
  FitOptions options;
  options.out_dir = dir.path();
  options.log = &log;
  const auto r = fit(model, store, config, options);
  EXPECT_EQ(r.evaluations, 4u);

  std::istringstream lines(log.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "epoch,loss,valid_mrr,elapsed_s");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 20u);

  CheckpointInfo info;
  auto reloaded = load_checkpoint<float>(dir.path(), store.vocab(), &info);
  EXPECT_EQ(info.epoch, r.best_epoch);
  EXPECT_DOUBLE_EQ(info.valid_mrr, r.best_valid_mrr);
  const double mrr = compute_metrics(rank_queries(reloaded, store, Split::valid)).mrr;
  EXPECT_DOUBLE_EQ(mrr, r.best_valid_mrr);
  // The fitted model was restored to the best state too.
  EXPECT_DOUBLE_EQ(compute_metrics(rank_queries(model, store, Split::valid)).mrr, r.best_valid_mrr);
}

TEST(Fit, EmptyValidSplitIsFatal) {
  const std::vector<Triple> train{{0, 0, 1}, {1, 0, 2}};
  const auto store = TripleStore::from_ids(4, 1, train, {}, {});
  const auto config = toy_config();
  SeGnnModel<float> model(config, 4, 2);
  EXPECT_THROW(fit(model, store, config), DataError);
}
