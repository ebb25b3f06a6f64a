#include "sekge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "sekge/csv.hpp"
#include "sekge/error.hpp"

namespace sekge {

template <typename T>
double filtered_rank(std::span<const T> scores, EntityId target,
                     std::span<const EntityId> filter_out, double tie_epsilon) {
  if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) {
    throw DataError("rank target " + std::to_string(target) + " outside the candidate set");
  }
  const double ref = static_cast<double>(scores[target]);
  const auto higher = [&](T s) { return static_cast<double>(s) > ref + tie_epsilon; };
  const auto tied = [&](T s) { return std::abs(static_cast<double>(s) - ref) <= tie_epsilon; };

  std::int64_t greater = 0;
  std::int64_t ties = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (higher(scores[i])) {
      ++greater;
    } else if (tied(scores[i])) {
      ++ties;
    }
  }
  --ties;  // the target ties with itself

  std::vector<EntityId> skip(filter_out.begin(), filter_out.end());
  std::sort(skip.begin(), skip.end());
  skip.erase(std::unique(skip.begin(), skip.end()), skip.end());
  for (EntityId e : skip) {
    if (e == target) throw DataError("rank target " + std::to_string(target) + " is filtered out");
    if (e < 0 || static_cast<std::size_t>(e) >= scores.size()) continue;
    if (higher(scores[e])) {
      --greater;
    } else if (tied(scores[e])) {
      --ties;
    }
  }
  return static_cast<double>(greater) + static_cast<double>(ties) / 2.0 + 1.0;
}

MetricReport compute_metrics(std::span<const double> ranks) {
  MetricReport m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    m.mr += r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.mr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

MetricReport compute_metrics(std::span<const RankRecord> records) {
  std::vector<double> ranks;
  ranks.reserve(records.size());
  for (const auto& r : records) ranks.push_back(r.rank);
  return compute_metrics(ranks);
}

void print_metrics(std::ostream& out, const MetricReport& report) {
  out << "metric,value\n"
      << "queries," << report.count << '\n'
      << "mrr," << format_number(report.mrr) << '\n'
      << "mr," << format_number(report.mr) << '\n'
      << "hits@1," << format_number(report.hits1) << '\n'
      << "hits@3," << format_number(report.hits3) << '\n'
      << "hits@10," << format_number(report.hits10) << '\n';
}

template <typename T>
std::vector<RankRecord> rank_queries(SeGnnModel<T>& model, const TripleStore& store, Split split,
                                     const EvalOptions& options) {
  std::mt19937_64 unused_rng(0);
  Tensor<T> entities, relations;
  {
    Tape<T> tape(false);
    const auto graph = AggregationGraph::from_edges(store.aug_edges());
    const auto encoded = model.encoder().encode(tape, graph, false, unused_rng);
    entities = encoded.entities.value();
    relations = encoded.relations.value();
  }

  const auto queries = build_query_set(store, split);
  std::vector<RankRecord> records(queries.size());
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_ent = store.num_entities();
  for (std::size_t start = 0; start < queries.size(); start += batch) {
    const std::size_t end = std::min(queries.size(), start + batch);
    IndexList heads, rels;
    for (std::size_t i = start; i < end; ++i) {
      heads.push_back(queries[i].head);
      rels.push_back(queries[i].relation);
    }
    Tape<T> tape(false);
    const typename SeGnnEncoder<T>::Output encoded{tape.constant(entities),
                                                   tape.constant(relations)};
    const auto logits = model.score(encoded, heads, rels, false, unused_rng);
    const T* base = logits.value().data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(start);
         ii < static_cast<std::ptrdiff_t>(end); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const Query& q = queries[i];
      std::vector<EntityId> others;
      for (EntityId e : store.filtered_candidates(q.head, q.relation)) {
        if (e != q.answer) others.push_back(e);
      }
      const std::span<const T> row(base + (i - start) * n_ent, n_ent);
      records[i] = {i, q, filtered_rank<T>(row, q.answer, others, options.tie_epsilon)};
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Files

namespace {

constexpr const char* kKeyHeader = "query_index,head,relation,tail,direction";

void write_key(std::ostream& out, const QueryKey& key) {
  out << key.query_index << ',' << csv_field(key.head) << ',' << csv_field(key.relation) << ','
      << csv_field(key.tail) << ',' << key.direction;
}

QueryKey read_key(const CsvTable& table, const std::vector<std::string>& row,
                  const std::string& context) {
  QueryKey key;
  key.query_index =
      static_cast<std::size_t>(parse_integer(row[table.column("query_index")], context));
  key.head = row[table.column("head")];
  key.relation = row[table.column("relation")];
  key.tail = row[table.column("tail")];
  key.direction = row[table.column("direction")];
  if (key.direction != "tail" && key.direction != "head") {
    throw DataError(context + ": direction must be 'tail' or 'head'");
  }
  return key;
}

std::string describe(const QueryKey& k) {
  return "#" + std::to_string(k.query_index) + " (" + k.head + ", " + k.relation + ", " + k.tail +
         ", " + k.direction + ")";
}

}  // namespace

QueryKey query_key(std::size_t query_index, const Query& query, const Vocab& vocab) {
  const Triple base = query.base_triple(vocab);
  return {query_index, vocab.entity_name(base.head), vocab.base_relation_name(base.relation),
          vocab.entity_name(base.tail), query.is_inverse(vocab) ? "head" : "tail"};
}

void write_ranks_csv(std::ostream& out, std::span<const RankRecord> records, const Vocab& vocab) {
  out << kKeyHeader << ",rank\n";
  for (const auto& r : records) {
    write_key(out, query_key(r.query_index, r.query, vocab));
    out << ',' << format_number(r.rank) << '\n';
  }
}

std::vector<RankRow> read_ranks_csv(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  const auto rank_col = table.column("rank");
  std::vector<RankRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto context = path.string() + " row " + std::to_string(i + 1);
    RankRow row{read_key(table, table.rows[i], context),
                parse_number(table.rows[i][rank_col], context)};
    if (!(row.rank >= 1.0)) throw DataError(context + ": rank must be >= 1");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_se_csv(std::ostream& out, std::span<const Query> queries,
                  std::span<const SEScores> scores, const Vocab& vocab) {
  if (queries.size() != scores.size()) throw DataError("query and score counts differ");
  out << kKeyHeader << ",s_rel,s_ent,s_tri\n";
  for (std::size_t i = 0; i < queries.size(); ++i) {
    write_key(out, query_key(i, queries[i], vocab));
    out << ',' << scores[i].s_rel << ',' << scores[i].s_ent << ',' << scores[i].s_tri << '\n';
  }
}

std::vector<SERow> read_se_csv(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  const std::size_t cols[3] = {table.column("s_rel"), table.column("s_ent"), table.column("s_tri")};
  std::vector<SERow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto context = path.string() + " row " + std::to_string(i + 1);
    SERow row{read_key(table, table.rows[i], context), {}};
    row.scores.s_rel = parse_integer(table.rows[i][cols[0]], context);
    row.scores.s_ent = parse_integer(table.rows[i][cols[1]], context);
    row.scores.s_tri = parse_integer(table.rows[i][cols[2]], context);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<BucketRow> bucket_report(std::span<const RankRow> ranks, std::span<const SERow> se,
                                     BucketMode mode) {
  const std::size_t n = std::min(ranks.size(), se.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ranks[i].key == se[i].key)) {
      throw DataError("rank and evidence files diverge at row " + std::to_string(i + 1) +
                      ": ranks has " + describe(ranks[i].key) + ", evidence has " +
                      describe(se[i].key));
    }
  }
  if (ranks.size() != se.size()) {
    throw DataError("rank and evidence files diverge at row " + std::to_string(n + 1) +
                    ": ranks has " + std::to_string(ranks.size()) + " rows, evidence has " +
                    std::to_string(se.size()));
  }

  std::vector<BucketRow> out;
  const std::pair<const char*, std::int64_t SEScores::*> metrics[] = {
      {"s_rel", &SEScores::s_rel}, {"s_ent", &SEScores::s_ent}, {"s_tri", &SEScores::s_tri}};
  for (const auto& [name, field] : metrics) {
    std::vector<std::int64_t> values;
    values.reserve(se.size());
    for (const auto& row : se) values.push_back(row.scores.*field);
    const auto assignment = bucketize(values, mode);
    std::vector<double> rank_sum(assignment.buckets.size(), 0.0);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      rank_sum[assignment.bucket_of[i]] += ranks[i].rank;
    }
    for (std::size_t b = 0; b < assignment.buckets.size(); ++b) {
      const auto& bucket = assignment.buckets[b];
      out.push_back({name, b, bucket.lo, bucket.hi, bucket.count,
                     bucket.count ? rank_sum[b] / static_cast<double>(bucket.count)
                                  : std::numeric_limits<double>::quiet_NaN()});
    }
  }
  return out;
}

void write_bucket_csv(std::ostream& out, std::span<const BucketRow> rows) {
  out << "se_name,bucket,lo,hi,count,mean_rank\n";
  for (const auto& r : rows) {
    out << r.se_name << ',' << r.bucket << ',';
    if (r.count) {
      out << r.lo << ',' << r.hi << ',' << r.count << ',' << format_number(r.mean_rank);
    } else {
      out << ",,0,";
    }
    out << '\n';
  }
}

template double filtered_rank<float>(std::span<const float>, EntityId, std::span<const EntityId>,
                                     double);
template double filtered_rank<double>(std::span<const double>, EntityId,
                                      std::span<const EntityId>, double);
template std::vector<RankRecord> rank_queries<float>(SeGnnModel<float>&, const TripleStore&, Split,
                                                     const EvalOptions&);
template std::vector<RankRecord> rank_queries<double>(SeGnnModel<double>&, const TripleStore&,
                                                      Split, const EvalOptions&);

}  // namespace sekge
