#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sekge {

using EntityId = std::int32_t;
/// Relation ids live in [0, 2|R|); id r + |R| is the inverse of base relation r.
using RelationId = std::int32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

/// A (neighbor entity, connecting relation) pair in an adjacency list.
struct Neighbor {
  EntityId entity = 0;
  RelationId relation = 0;

  auto operator<=>(const Neighbor&) const = default;
};

enum class Split { train = 0, valid = 1, test = 2 };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

class Vocab {
 public:
  /// Returns the id of `name`, assigning the next dense id on first sight.
  EntityId add_entity(std::string_view name);
  RelationId add_relation(std::string_view name);

  std::optional<EntityId> entity_id(std::string_view name) const;
  /// Accepts base relation names only; inverse ids are derived.
  std::optional<RelationId> relation_id(std::string_view name) const;

  const std::string& entity_name(EntityId id) const;
  /// Base name for base ids; inverse ids are reported as "<name>_inv".
  std::string relation_name(RelationId id) const;
  const std::string& base_relation_name(RelationId id) const;

  std::size_t num_entities() const { return entity_names_.size(); }
  /// Number of base relations |R|.
  std::size_t num_base_relations() const { return relation_names_.size(); }
  /// Number of relation ids including inverses, 2|R|.
  std::size_t num_relations() const { return 2 * relation_names_.size(); }

  RelationId inverse(RelationId r) const;
  bool is_inverse(RelationId r) const;
  RelationId base(RelationId r) const;

  std::span<const std::string> entity_names() const { return entity_names_; }
  std::span<const std::string> relation_names() const { return relation_names_; }

  /// Stable 64-bit FNV-1a digests of the ordered name lists.
  std::uint64_t entity_hash() const;
  std::uint64_t relation_hash() const;

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::string, RelationId> relation_ids_;
};

/// How triples in valid/test that mention entities or relations never seen
/// in train are handled.
enum class UnseenPolicy {
  error,  ///< fatal, names the offending line
  keep,   ///< assign ids and keep the triple
};

struct IngestOptions {
  UnseenPolicy unseen = UnseenPolicy::error;
};

struct SplitStats {
  std::size_t triples = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t entities_seen = 0;
  std::size_t relations_seen = 0;
};

using NamedTriple = std::array<std::string, 3>;

/// Deduplicated triple splits over base relations plus the adjacency
/// indices derived from the train split. Immutable after construction.
class TripleStore {
 public:
  /// Reads train.txt, valid.txt and test.txt from `data_dir`.
  static TripleStore ingest(const std::filesystem::path& data_dir,
                            const IngestOptions& options = {});

  /// Builds a store from labelled triples. `origin` names each split in
  /// diagnostics (e.g. a file path); line numbers are 1-based indices.
  static TripleStore from_named(std::span<const NamedTriple> train,
                                std::span<const NamedTriple> valid,
                                std::span<const NamedTriple> test,
                                const IngestOptions& options = {},
                                std::array<std::string, 3> origin = {"train", "valid", "test"});

  /// Builds a store over integer ids; entity `i` is named "e<i>" and base
  /// relation `r` is named "r<r>". Vocabulary sizes are fixed up front so
  /// that entities need not appear in any triple.
  static TripleStore from_ids(std::size_t num_entities, std::size_t num_base_relations,
                              std::span<const Triple> train, std::span<const Triple> valid,
                              std::span<const Triple> test);

  const Vocab& vocab() const { return vocab_; }
  std::size_t num_entities() const { return vocab_.num_entities(); }
  std::size_t num_relations() const { return vocab_.num_relations(); }

  std::span<const Triple> split(Split s) const { return splits_[static_cast<int>(s)]; }
  std::span<const Triple> train() const { return split(Split::train); }
  const SplitStats& stats(Split s) const { return stats_[static_cast<int>(s)]; }

  /// (h_i, r_i) with (h_i, r_i, e) in train, sorted.
  std::span<const Neighbor> in_neighbors(EntityId e) const { return in_index_[e]; }
  /// (t_i, r_i) with (e, r_i, t_i) in train, sorted.
  std::span<const Neighbor> out_neighbors(EntityId e) const { return out_index_[e]; }

  /// Train edges plus inverse edges (t, r + |R|, h), deduplicated, sorted
  /// by (tail, head, relation) so that each entity's incoming edges are
  /// contiguous.
  std::span<const Triple> aug_edges() const { return aug_edges_; }
  /// Index of the inverse twin of aug_edges()[i].
  std::size_t aug_twin(std::size_t i) const { return aug_twin_[i]; }

  /// Sorted train answers t of directed query (h, r); r may be inverse.
  std::span<const EntityId> train_answers(EntityId head, RelationId relation) const;
  /// All true answers of (h, r) across train, valid and test.
  std::span<const EntityId> filtered_candidates(EntityId head, RelationId relation) const;

  /// Number of distinct base relations linking u -> v in train.
  std::int64_t direct_links(EntityId u, EntityId v) const;

  /// Every distinct directed train query (h, r) with its answers, in
  /// first-appearance order of the train directed query list.
  struct QueryGroup {
    EntityId head;
    RelationId relation;
    std::span<const EntityId> answers;
  };
  std::vector<QueryGroup> train_query_groups() const;

 private:
  TripleStore() = default;
  void build_indices();
  std::uint64_t query_key(EntityId head, RelationId relation) const {
    return static_cast<std::uint64_t>(head) * vocab_.num_relations() +
           static_cast<std::uint64_t>(relation);
  }
  void check_entity(EntityId e) const;
  void check_relation(RelationId r) const;

  Vocab vocab_;
  std::array<std::vector<Triple>, 3> splits_;
  std::array<SplitStats, 3> stats_;
  std::vector<std::vector<Neighbor>> in_index_;
  std::vector<std::vector<Neighbor>> out_index_;
  std::vector<Triple> aug_edges_;
  std::vector<std::size_t> aug_twin_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> train_answers_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> all_answers_;
  std::unordered_map<std::uint64_t, std::int64_t> direct_links_;
};

/// A directed link-prediction query: predict `answer` from (head, relation).
struct Query {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId answer = 0;

  bool is_inverse(const Vocab& vocab) const { return vocab.is_inverse(relation); }
  /// The base-direction triple this query was derived from.
  Triple base_triple(const Vocab& vocab) const;

  auto operator<=>(const Query&) const = default;
};

/// Both prediction directions of every triple in a split, emitted as
/// (h, r, t) then (t, r^-1, h) per triple.
std::vector<Query> build_query_set(const TripleStore& store, Split split);

/// Keeps the `top_k` entities with the largest train degree (ties broken by
/// id) and every triple whose endpoints both survive. Valid/test triples
/// whose entities or relations no longer occur in the induced train split
/// are dropped.
struct InducedSubgraph {
  std::vector<NamedTriple> train, valid, test;
};
InducedSubgraph top_degree_subgraph(const TripleStore& store, std::size_t top_k);

void write_triples(const std::filesystem::path& path, std::span<const NamedTriple> triples);

}  // namespace sekge
