#include "sekge/se_metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "sekge/error.hpp"

namespace sekge {

std::int64_t SEMetrics::s_rel(const Query& q) const {
  const auto& vocab = store_.vocab();
  const RelationId r = vocab.base(q.relation);
  // Forward queries look at (h_i, r, answer); inverse queries at (answer, r, x).
  const auto list = vocab.is_inverse(q.relation) ? store_.out_neighbors(q.answer)
                                                 : store_.in_neighbors(q.answer);
  return std::count_if(list.begin(), list.end(),
                       [r](const Neighbor& n) { return n.relation == r; });
}

std::int64_t SEMetrics::paths_le2(EntityId from, EntityId to) const {
  if (paths_ == PathMode::directed) {
    std::int64_t total = store_.direct_links(from, to);
    for (const auto& mid : store_.out_neighbors(from)) total += store_.direct_links(mid.entity, to);
    return total;
  }
  const auto links = [&](EntityId u, EntityId v) {
    return store_.direct_links(u, v) + store_.direct_links(v, u);
  };
  std::int64_t total = links(from, to);
  for (const auto& mid : store_.out_neighbors(from)) total += links(mid.entity, to);
  for (const auto& mid : store_.in_neighbors(from)) total += links(mid.entity, to);
  return total;
}

std::int64_t SEMetrics::s_ent(const Query& q) const {
  const Triple base = q.base_triple(store_.vocab());
  return paths_le2(base.head, base.tail);
}

std::int64_t SEMetrics::sim(EntityId t, EntityId t_prime) const {
  const auto a = store_.in_neighbors(t);
  const auto b = store_.in_neighbors(t_prime);
  std::int64_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return common;
}

std::int64_t SEMetrics::s_tri(const Query& q) const {
  std::int64_t total = 0;
  for (EntityId other : store_.train_answers(q.head, q.relation)) {
    if (other != q.answer) total += sim(q.answer, other);
  }
  return total;
}

SEScores SEMetrics::score(const Query& q) const { return {s_rel(q), s_ent(q), s_tri(q)}; }

std::vector<SEScores> SEMetrics::score_all(std::span<const Query> queries) const {
  std::vector<SEScores> out(queries.size());
  const auto n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) out[i] = score(queries[i]);
  return out;
}

BucketMode parse_bucket_mode(std::string_view name) {
  if (name == "three_even") return BucketMode::three_even;
  if (name == "two_zero_split") return BucketMode::two_zero_split;
  throw UsageError("unknown bucket mode '" + std::string(name) +
                   "' (expected three_even or two_zero_split)");
}

std::string_view bucket_mode_name(BucketMode mode) {
  return mode == BucketMode::three_even ? "three_even" : "two_zero_split";
}

BucketAssignment bucketize(std::span<const std::int64_t> values, BucketMode mode) {
  if (values.empty()) throw DataError("bucketize: empty input");
  const std::size_t n = values.size();
  BucketAssignment out;
  out.bucket_of.assign(n, 0);

  if (mode == BucketMode::two_zero_split) {
    out.buckets.resize(2);
    for (std::size_t i = 0; i < n; ++i) {
      if (values[i] < 0) throw DataError("bucketize: negative evidence value");
      out.bucket_of[i] = values[i] == 0 ? 0 : 1;
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const auto past_ties = [&](std::size_t cut) {
      while (cut > 0 && cut < n && values[order[cut]] == values[order[cut - 1]]) ++cut;
      return cut;
    };
    const std::size_t first = past_ties((n + 2) / 3);
    const std::size_t second = past_ties(first + (n - first + 1) / 2);
    out.buckets.resize(3);
    for (std::size_t pos = 0; pos < n; ++pos) {
      out.bucket_of[order[pos]] = pos < first ? 0 : (pos < second ? 1 : 2);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& b = out.buckets[out.bucket_of[i]];
    if (b.count == 0) {
      b.lo = b.hi = values[i];
    } else {
      b.lo = std::min(b.lo, values[i]);
      b.hi = std::max(b.hi, values[i]);
    }
    ++b.count;
  }
  return out;
}

}  // namespace sekge
