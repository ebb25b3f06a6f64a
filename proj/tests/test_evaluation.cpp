#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "sekge/error.hpp"
#include "sekge/evaluation.hpp"
#include "test_util.hpp"

using namespace sekge;
using sekge::testing::TempDir;

namespace {

double rank_of(const std::vector<double>& scores, EntityId target,
               const std::vector<EntityId>& filter = {}) {
  return filtered_rank<double>(scores, target, filter);
}

QueryKey key(std::size_t i) { return {i, "e" + std::to_string(i), "r0", "x", "tail"}; }

}  // namespace

TEST(FilteredRank, HandComputedCases) {
  EXPECT_EQ(rank_of({0.1, 0.9, 0.5}, 1), 1.0);
  EXPECT_EQ(rank_of({0.1, 0.9, 0.5}, 0), 3.0);
  EXPECT_EQ(rank_of({0.1, 0.9, 0.5}, 0, {1}), 2.0);
  EXPECT_EQ(rank_of({0.5, 0.5, 0.5, 0.5}, 2), 2.5);
  EXPECT_EQ(rank_of({0.9, 0.5, 0.5, 0.1}, 1), 2.5);
}

TEST(FilteredRank, AllTiedGivesMiddleRank) {
  for (std::size_t n : {1u, 2u, 7u, 100u}) {
    const std::vector<double> scores(n, 0.25);
    EXPECT_EQ(rank_of(scores, 0), (static_cast<double>(n) + 1) / 2);
  }
}

TEST(FilteredRank, MatchesSortOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> scores(n);
    for (auto& s : scores) s = static_cast<double>(rng() % 5);
    const auto target = static_cast<EntityId>(rng() % n);
    std::set<EntityId> skip;
    std::vector<EntityId> filter;
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<EntityId>(i) != target && rng() % 3 == 0) {
        skip.insert(static_cast<EntityId>(i));
        filter.push_back(static_cast<EntityId>(i));
      }
    }
    ASSERT_EQ(rank_of(scores, target, filter),
              oracle::sorted_rank<double>(scores, target, skip));
  }
}

TEST(FilteredRank, FilteringNeverWorsensRank) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> scores(30);
    for (auto& s : scores) s = normal(rng);
    const EntityId target = 3;
    std::vector<EntityId> filter{0, 7, 12};
    EXPECT_LE(rank_of(scores, target, filter), rank_of(scores, target));
  }
}

TEST(FilteredRank, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> scores(25), moved(25);
    for (std::size_t i = 0; i < 25; ++i) {
      scores[i] = static_cast<double>(rng() % 9) - 4;
      moved[i] = 3 * scores[i] + 5;
    }
    for (EntityId t = 0; t < 25; ++t) EXPECT_EQ(rank_of(scores, t), rank_of(moved, t));
  }
}

TEST(FilteredRank, EpsilonMergesNearTies) {
  const std::vector<double> scores{1.0, 1.0 + 1e-9, 0.0};
  EXPECT_EQ(filtered_rank<double>(scores, 0, {}), 2.0);
  EXPECT_EQ(filtered_rank<double>(scores, 0, {}, 1e-6), 1.5);
}

TEST(FilteredRank, TargetInFilterIsFatal) {
  EXPECT_THROW(rank_of({0.1, 0.2}, 1, {1}), DataError);
}

TEST(Metrics, HandComputed) {
  const std::vector<double> ranks{1, 4};
  const auto m = compute_metrics(ranks);
  EXPECT_DOUBLE_EQ(m.mrr, 0.625);
  EXPECT_DOUBLE_EQ(m.mr, 2.5);
  EXPECT_DOUBLE_EQ(m.hits1, 0.5);
  EXPECT_DOUBLE_EQ(m.hits3, 0.5);
  EXPECT_DOUBLE_EQ(m.hits10, 1.0);
  EXPECT_EQ(m.count, 2u);
}

TEST(Metrics, PerfectRanking) {
  const std::vector<double> ranks(10, 1.0);
  const auto m = compute_metrics(ranks);
  EXPECT_EQ(m.mrr, 1.0);
  EXPECT_EQ(m.hits1, 1.0);
  EXPECT_EQ(m.mr, 1.0);
}

TEST(Metrics, HitsCountsAveragedRanksHonestly) {
  // A tie-averaged rank of 1.5 is not a hit at 1.
  const std::vector<double> ranks{1.5};
  EXPECT_EQ(compute_metrics(ranks).hits1, 0.0);
  EXPECT_EQ(compute_metrics(ranks).hits3, 1.0);
}

TEST(RankQueries, CoversBothDirectionsAndMatchesManualScoring) {
  const auto store = sekge::testing::toy_store();
  const auto config = sekge::testing::toy_config();
  SeGnnModel<double> model(config, 8, 6);
  const auto records = rank_queries(model, store, Split::valid, {3, 0.0});
  const auto queries = build_query_set(store, Split::valid);
  ASSERT_EQ(records.size(), queries.size());
  ASSERT_EQ(records.size(), 2 * store.split(Split::valid).size());

  Tape<double> tape(false);
  std::mt19937_64 unused(0);
  const auto graph = AggregationGraph::from_edges(store.aug_edges());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    EXPECT_EQ(records[i].query_index, i);
    EXPECT_EQ(records[i].query, queries[i]);
    const auto logits =
        model.forward(tape, graph, {queries[i].head}, {queries[i].relation}, false, unused).value();
    const auto filter = store.filtered_candidates(queries[i].head, queries[i].relation);
    std::set<EntityId> skip(filter.begin(), filter.end());
    EXPECT_EQ(records[i].rank, oracle::sorted_rank<double>(logits.values(), queries[i].answer, skip));
  }
}

TEST(RankCsv, RoundTripsAndRecomputesMetrics) {
  TempDir dir("ranks");
  const auto store = sekge::testing::toy_store();
  std::vector<RankRecord> records;
  const auto queries = build_query_set(store, Split::valid);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    records.push_back({i, queries[i], 1.0 + static_cast<double>(i) / 2});
  }
  const auto path = dir.path() / "ranks.csv";
  {
    std::ofstream out(path);
    write_ranks_csv(out, records, store.vocab());
  }
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "query_index,head,relation,tail,direction,rank");
  const auto rows = read_ranks_csv(path);
  ASSERT_EQ(rows.size(), records.size());
  std::vector<double> ranks;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].key, query_key(i, queries[i], store.vocab()));
    EXPECT_EQ(rows[i].rank, records[i].rank);
    ranks.push_back(rows[i].rank);
  }
  EXPECT_EQ(compute_metrics(ranks).mrr, compute_metrics(records).mrr);
  // Inverse queries are reported as head predictions of the base triple.
  EXPECT_EQ(rows[1].key.direction, "head");
  EXPECT_EQ(rows[1].key.head, rows[0].key.head);
  EXPECT_EQ(rows[1].key.tail, rows[0].key.tail);
}

TEST(BucketReport, HandBuiltFixture) {
  std::vector<RankRow> ranks;
  std::vector<SERow> se;
  const std::int64_t srel[] = {0, 0, 0, 1, 2, 3, 5, 8, 9};
  for (std::size_t i = 0; i < 9; ++i) {
    ranks.push_back({key(i), static_cast<double>(i + 1)});
    se.push_back({key(i), {srel[i], 4, 4}});
  }
  const auto rows = bucket_report(ranks, se, BucketMode::three_even);
  std::vector<BucketRow> rel;
  for (const auto& r : rows) {
    if (r.se_name == "s_rel") rel.push_back(r);
  }
  ASSERT_EQ(rel.size(), 3u);
  EXPECT_EQ(rel[0].count, 3u);
  EXPECT_DOUBLE_EQ(rel[0].mean_rank, 2.0);
  EXPECT_EQ(rel[1].count, 3u);
  EXPECT_DOUBLE_EQ(rel[1].mean_rank, 5.0);
  EXPECT_EQ(rel[2].lo, 5);
  EXPECT_EQ(rel[2].hi, 9);
  EXPECT_DOUBLE_EQ(rel[2].mean_rank, 8.0);

  // A constant metric forms one tie group: one populated bucket.
  std::size_t populated = 0;
  for (const auto& r : rows) {
    if (r.se_name == "s_ent" && r.count > 0) {
      ++populated;
      EXPECT_DOUBLE_EQ(r.mean_rank, 5.0);
    }
  }
  EXPECT_EQ(populated, 1u);
}

TEST(BucketReport, UniformRanksGiveEqualMeans) {
  std::vector<RankRow> ranks;
  std::vector<SERow> se;
  for (std::size_t i = 0; i < 12; ++i) {
    ranks.push_back({key(i), 3.0});
    se.push_back({key(i), {static_cast<std::int64_t>(i), static_cast<std::int64_t>(i % 4), 0}});
  }
  for (const auto& r : bucket_report(ranks, se, BucketMode::three_even)) {
    if (r.count > 0) EXPECT_DOUBLE_EQ(r.mean_rank, 3.0);
  }
}

TEST(BucketReport, TwoZeroSplitSeparatesZeros) {
  std::vector<RankRow> ranks;
  std::vector<SERow> se;
  for (std::size_t i = 0; i < 6; ++i) {
    ranks.push_back({key(i), i < 2 ? 10.0 : 1.0});
    se.push_back({key(i), {i < 2 ? 0 : static_cast<std::int64_t>(i), 1, 1}});
  }
  std::vector<BucketRow> rel;
  for (const auto& r : bucket_report(ranks, se, BucketMode::two_zero_split)) {
    if (r.se_name == "s_rel") rel.push_back(r);
  }
  ASSERT_EQ(rel.size(), 2u);
  EXPECT_EQ(rel[0].count, 2u);
  EXPECT_DOUBLE_EQ(rel[0].mean_rank, 10.0);
  EXPECT_DOUBLE_EQ(rel[1].mean_rank, 1.0);
}

TEST(BucketReport, MisalignedKeysAreFatal) {
  std::vector<RankRow> ranks{{key(0), 1.0}, {key(1), 2.0}};
  std::vector<SERow> se{{key(0), {}}, {key(2), {}}};
  try {
    bucket_report(ranks, se, BucketMode::three_even);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
  se.pop_back();
  EXPECT_THROW(bucket_report(ranks, se, BucketMode::three_even), DataError);
}
