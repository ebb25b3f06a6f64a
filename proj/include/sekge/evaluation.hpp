#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sekge/kg_core.hpp"
#include "sekge/model.hpp"
#include "sekge/se_metrics.hpp"

namespace sekge {

/// Tie-averaged filtered rank of `target`: with g candidates scoring higher
/// and q others tied, rank = g + q/2 + 1. `filter_out` lists the other true
/// answers to skip; it must not contain the target. Scores are compared
/// exactly unless `tie_epsilon` > 0.
template <typename T>
double filtered_rank(std::span<const T> scores, EntityId target,
                     std::span<const EntityId> filter_out, double tie_epsilon = 0.0);

struct RankRecord {
  std::size_t query_index = 0;
  Query query;
  double rank = 1.0;
};

struct MetricReport {
  double mrr = 0;
  double mr = 0;
  double hits1 = 0;
  double hits3 = 0;
  double hits10 = 0;
  std::size_t count = 0;
};

MetricReport compute_metrics(std::span<const double> ranks);
MetricReport compute_metrics(std::span<const RankRecord> records);
void print_metrics(std::ostream& out, const MetricReport& report);

struct EvalOptions {
  std::size_t batch_size = 256;
  double tie_epsilon = 0.0;
};

/// Eval-mode ranking of every query of `split` (both directions): the graph
/// is encoded once over all augmented train edges, then queries are scored
/// in batches and ranked in the filtered setting.
template <typename T>
std::vector<RankRecord> rank_queries(SeGnnModel<T>& model, const TripleStore& store, Split split,
                                     const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Files

/// The query key shared by rank and evidence files.
struct QueryKey {
  std::size_t query_index = 0;
  std::string head;
  std::string relation;
  std::string tail;
  std::string direction;  ///< "tail" predicts the tail, "head" the head

  bool operator==(const QueryKey&) const = default;
};

QueryKey query_key(std::size_t query_index, const Query& query, const Vocab& vocab);

struct RankRow {
  QueryKey key;
  double rank = 1.0;
};

struct SERow {
  QueryKey key;
  SEScores scores;
};

void write_ranks_csv(std::ostream& out, std::span<const RankRecord> records, const Vocab& vocab);
std::vector<RankRow> read_ranks_csv(const std::filesystem::path& path);

void write_se_csv(std::ostream& out, std::span<const Query> queries,
                  std::span<const SEScores> scores, const Vocab& vocab);
std::vector<SERow> read_se_csv(const std::filesystem::path& path);

struct BucketRow {
  std::string se_name;
  std::size_t bucket = 0;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::size_t count = 0;
  double mean_rank = 0;  ///< NaN for an empty bucket
};

/// Buckets the queries by each evidence metric independently and reports
/// the mean rank per bucket. Rows must align one-to-one on the query key.
std::vector<BucketRow> bucket_report(std::span<const RankRow> ranks, std::span<const SERow> se,
                                     BucketMode mode);
void write_bucket_csv(std::ostream& out, std::span<const BucketRow> rows);

}  // namespace sekge
