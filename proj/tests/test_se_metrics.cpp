#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sekge/error.hpp"
#include "sekge/se_metrics.hpp"
#include "test_util.hpp"

using namespace sekge;

namespace {

// a=0 b=1 t=2 u=3 x=4
TripleStore example_store(std::vector<Triple> train, std::size_t entities = 5,
                          std::size_t relations = 3) {
  return TripleStore::from_ids(entities, relations, train, {}, {});
}

std::vector<std::size_t> sizes(const BucketAssignment& a) {
  std::vector<std::size_t> out;
  for (const auto& b : a.buckets) out.push_back(b.count);
  return out;
}

}  // namespace

TEST(SERel, CountsHeadsSharingTheRelationIntoTheAnswer) {
  const auto store = example_store({{0, 0, 2}, {1, 0, 2}, {0, 0, 3}});
  const SEMetrics se(store);
  EXPECT_EQ(se.s_rel({4, 0, 2}), 2);
  EXPECT_EQ(se.s_rel({4, 0, 3}), 1);
  EXPECT_EQ(se.s_rel({4, 1, 2}), 0);
  // Inverse query (t, r^-1) -> a mirrors (a, r, x): a heads two r-triples.
  EXPECT_EQ(se.s_rel({2, 3, 0}), 2);
}

TEST(SEEnt, CountsDirectLinksAndTwoHopPaths) {
  // h=0 m=1 t=2
  EXPECT_EQ(SEMetrics(example_store({{0, 0, 1}, {1, 1, 2}})).s_ent({0, 2, 2}), 1);
  EXPECT_EQ(SEMetrics(example_store({{0, 0, 2}, {0, 1, 2}})).s_ent({0, 2, 2}), 2);
  // Reversed edges only count in augmented mode.
  const auto reversed = example_store({{1, 0, 0}, {2, 1, 1}});
  EXPECT_EQ(SEMetrics(reversed).s_ent({0, 2, 2}), 0);
  EXPECT_EQ(SEMetrics(reversed, PathMode::augmented).s_ent({0, 2, 2}), 1);
  // An inverse query scores the base triple's paths.
  EXPECT_EQ(SEMetrics(example_store({{0, 0, 1}, {1, 1, 2}})).s_ent({2, 3 + 2, 0}), 1);
}

TEST(SESim, IntersectsIncomingPairs) {
  const auto store = example_store({{0, 0, 2}, {1, 0, 2}, {0, 0, 3}, {1, 1, 3}, {4, 2, 4}});
  const SEMetrics se(store);
  EXPECT_EQ(se.sim(2, 3), 1);
  EXPECT_EQ(se.sim(2, 2), static_cast<std::int64_t>(store.in_neighbors(2).size()));
  EXPECT_EQ(se.sim(2, 4), 0);
}

TEST(SETri, SumsSimilarityToOtherKnownAnswers) {
  // (0, r0) has train answers {2, 3}; sim(2, 3) counts (0, r0) and (1, r1).
  const auto store = example_store({{0, 0, 2}, {0, 0, 3}, {1, 1, 2}, {1, 1, 3}, {4, 2, 4}});
  const SEMetrics se(store);
  EXPECT_EQ(se.s_tri({0, 0, 2}), 2);
  EXPECT_EQ(se.s_tri({4, 1, 2}), 0);
  EXPECT_EQ(se.s_tri({0, 0, 4}), se.sim(4, 2) + se.sim(4, 3));
}

TEST(SEMetrics, EmptyNeighborhoodsScoreZero) {
  const auto store = example_store({{0, 0, 1}});
  const SEMetrics se(store);
  EXPECT_EQ(se.score({3, 1, 4}), (SEScores{0, 0, 0}));
}

TEST(SEMetrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t ents = 5 + rng() % 25, rels = 1 + rng() % 5;
    const auto store = sekge::testing::random_store(rng, ents, rels, 10 + rng() % 150, 20);
    const auto train = store.train();
    for (PathMode mode : {PathMode::directed, PathMode::augmented}) {
      const SEMetrics se(store, mode);
      for (Split s : {Split::train, Split::test}) {
        for (const auto& q : build_query_set(store, s)) {
          ASSERT_EQ(se.s_rel(q), oracle::s_rel(train, rels, q));
          ASSERT_EQ(se.s_ent(q), oracle::s_ent(train, rels, q, mode == PathMode::augmented));
          ASSERT_EQ(se.s_tri(q), oracle::s_tri(train, rels, q));
        }
      }
    }
    const SEMetrics se(store);
    for (EntityId a = 0; a < static_cast<EntityId>(ents); ++a) {
      for (EntityId b = 0; b < static_cast<EntityId>(ents); ++b) {
        ASSERT_EQ(se.sim(a, b), oracle::sim(train, a, b));
      }
    }
  }
}

TEST(SEMetrics, ScoreAllKeepsQueryOrder) {
  std::mt19937_64 rng(8);
  const auto store = sekge::testing::random_store(rng, 30, 4, 200, 50);
  const SEMetrics se(store);
  const auto queries = build_query_set(store, Split::test);
  const auto all = se.score_all(queries);
  ASSERT_EQ(all.size(), queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) EXPECT_EQ(all[i], se.score(queries[i]));
}

TEST(SEMetrics, DependOnlyOnTrain) {
  std::mt19937_64 rng(9);
  const auto train = sekge::testing::random_triples(rng, 80, 15, 3);
  const auto test = sekge::testing::random_triples(rng, 20, 15, 3);
  const auto extra = sekge::testing::random_triples(rng, 30, 15, 3);
  const auto a = TripleStore::from_ids(15, 3, train, {}, test);
  const auto b = TripleStore::from_ids(15, 3, train, extra, test);
  const auto qa = build_query_set(a, Split::test);
  EXPECT_EQ(SEMetrics(a).score_all(qa), SEMetrics(b).score_all(build_query_set(b, Split::test)));
}

TEST(SEMetrics, RelAndSimAreMonotoneUnderEdgeAddition) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto train = sekge::testing::random_triples(rng, 40, 10, 3);
    const auto queries = sekge::testing::random_triples(rng, 30, 10, 3);
    const auto before = TripleStore::from_ids(10, 3, train, {}, {});
    train.push_back(sekge::testing::random_triples(rng, 1, 10, 3)[0]);
    const auto after = TripleStore::from_ids(10, 3, train, {}, {});
    for (const auto& t : queries) {
      const Query q{t.head, t.relation, t.tail};
      EXPECT_GE(SEMetrics(after).s_rel(q), SEMetrics(before).s_rel(q));
      EXPECT_GE(SEMetrics(after).sim(t.head, t.tail), SEMetrics(before).sim(t.head, t.tail));
    }
  }
}

TEST(Bucketize, ZeroTieGroupStaysWhole) {
  const std::vector<std::int64_t> v{0, 0, 0, 0, 0, 0, 1, 2, 3, 4};
  const auto a = bucketize(v, BucketMode::three_even);
  EXPECT_EQ(sizes(a), (std::vector<std::size_t>{6, 2, 2}));
  EXPECT_EQ(a.buckets[0].hi, 0);
  EXPECT_EQ(a.buckets[1].lo, 1);
  EXPECT_EQ(a.buckets[1].hi, 2);
  EXPECT_EQ(a.buckets[2].lo, 3);
}

TEST(Bucketize, DistinctValuesSplitIntoThirds) {
  std::vector<std::int64_t> v{9, 1, 5, 3, 7, 2, 8, 4, 6};
  const auto a = bucketize(v, BucketMode::three_even);
  EXPECT_EQ(sizes(a), (std::vector<std::size_t>{3, 3, 3}));
  EXPECT_EQ(a.bucket_of[0], 2u);
  EXPECT_EQ(a.bucket_of[1], 0u);
  EXPECT_EQ(a.bucket_of[2], 1u);
}

TEST(Bucketize, TwoZeroSplit) {
  const std::vector<std::int64_t> v{0, 0, 1, 5};
  const auto a = bucketize(v, BucketMode::two_zero_split);
  EXPECT_EQ(sizes(a), (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(a.buckets[1].lo, 1);
  EXPECT_EQ(a.buckets[1].hi, 5);
}

TEST(Bucketize, NeverSplitsATieGroup) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::int64_t> v(1 + rng() % 40);
    for (auto& x : v) x = static_cast<std::int64_t>(rng() % 6);
    const auto a = bucketize(v, BucketMode::three_even);
    std::size_t total = 0;
    for (std::size_t b = 0; b < a.buckets.size(); ++b) total += a.buckets[b].count;
    EXPECT_EQ(total, v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[i] == v[j]) EXPECT_EQ(a.bucket_of[i], a.bucket_of[j]);
        if (v[i] < v[j]) EXPECT_LE(a.bucket_of[i], a.bucket_of[j]);
      }
    }
  }
}

TEST(Bucketize, RejectsEmptyInput) {
  EXPECT_THROW(bucketize({}, BucketMode::three_even), DataError);
  EXPECT_THROW(parse_bucket_mode("quartiles"), UsageError);
}
