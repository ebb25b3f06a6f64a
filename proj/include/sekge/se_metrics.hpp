#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sekge/kg_core.hpp"

namespace sekge {

/// Semantic-evidence strength of one directed query, counted over train.
struct SEScores {
  std::int64_t s_rel = 0;  ///< relation level: co-occurrence of r with the answer
  std::int64_t s_ent = 0;  ///< entity level: paths of length <= 2 from head to answer
  std::int64_t s_tri = 0;  ///< triple level: similarity of the answer to known answers

  auto operator<=>(const SEScores&) const = default;
};

enum class PathMode {
  directed,   ///< original edge direction only
  augmented,  ///< paths may also traverse inverse edges
};

/// Evidence metrics over the train split of a store. Inverse queries
/// (h, r^-1) -> t are scored as the base triple (t, r, h) they mirror.
class SEMetrics {
 public:
  explicit SEMetrics(const TripleStore& store, PathMode paths = PathMode::directed)
      : store_(store), paths_(paths) {}

  std::int64_t s_rel(const Query& q) const;
  std::int64_t s_ent(const Query& q) const;
  std::int64_t s_tri(const Query& q) const;
  SEScores score(const Query& q) const;

  /// Common incoming (entity, relation) pairs of t and t'.
  std::int64_t sim(EntityId t, EntityId t_prime) const;

  /// Scores every query; output order matches input order.
  std::vector<SEScores> score_all(std::span<const Query> queries) const;

 private:
  std::int64_t paths_le2(EntityId from, EntityId to) const;

  const TripleStore& store_;
  PathMode paths_;
};

enum class BucketMode { three_even, two_zero_split };

BucketMode parse_bucket_mode(std::string_view name);
std::string_view bucket_mode_name(BucketMode mode);

struct Bucket {
  std::int64_t lo = 0;  ///< smallest member value (undefined when count == 0)
  std::int64_t hi = 0;  ///< largest member value
  std::size_t count = 0;
};

struct BucketAssignment {
  std::vector<std::size_t> bucket_of;  ///< per input value
  std::vector<Bucket> buckets;
};

/// three_even: ascending sort, cuts near thirds, each cut pushed forward past
/// its tie group so equal values never straddle buckets. two_zero_split:
/// bucket 0 holds zeros, bucket 1 everything >= 1.
BucketAssignment bucketize(std::span<const std::int64_t> values, BucketMode mode);

}  // namespace sekge
