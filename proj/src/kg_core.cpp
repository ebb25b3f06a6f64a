#include "sekge/kg_core.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "sekge/error.hpp"

namespace sekge {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::span<const std::string> names) {
  std::uint64_t h = kFnvOffset;
  for (const auto& name : names) {
    for (unsigned char c : name) {
      h ^= c;
      h *= kFnvPrime;
    }
    h ^= static_cast<unsigned char>('\n');
    h *= kFnvPrime;
  }
  return h;
}

std::vector<NamedTriple> read_triple_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open triple file: " + path.string());
  std::vector<NamedTriple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(std::move(f));
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    NamedTriple t{std::move(fields[0]), std::move(fields[1]), std::move(fields[2])};
    triples.push_back(std::move(t));
  }
  return triples;
}

SplitStats count_seen(std::span<const Triple> triples, std::size_t duplicates) {
  std::unordered_set<EntityId> entities;
  std::unordered_set<RelationId> relations;
  for (const auto& t : triples) {
    entities.insert(t.head);
    entities.insert(t.tail);
    relations.insert(t.relation);
  }
  return {triples.size(), duplicates, entities.size(), relations.size()};
}

// Drops repeated triples while keeping first-appearance order.
std::size_t dedup_in_order(std::vector<Triple>& triples) {
  std::set<Triple> seen;
  std::vector<Triple> kept;
  kept.reserve(triples.size());
  for (const auto& t : triples) {
    if (seen.insert(t).second) kept.push_back(t);
  }
  const std::size_t dropped = triples.size() - kept.size();
  triples = std::move(kept);
  return dropped;
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw UsageError("unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

// ---------------------------------------------------------------------------
// Vocab

EntityId Vocab::add_entity(std::string_view name) {
  auto [it, inserted] =
      entity_ids_.try_emplace(std::string(name), static_cast<EntityId>(entity_names_.size()));
  if (inserted) entity_names_.emplace_back(name);
  return it->second;
}

RelationId Vocab::add_relation(std::string_view name) {
  auto [it, inserted] = relation_ids_.try_emplace(std::string(name),
                                                  static_cast<RelationId>(relation_names_.size()));
  if (inserted) relation_names_.emplace_back(name);
  return it->second;
}

std::optional<EntityId> Vocab::entity_id(std::string_view name) const {
  auto it = entity_ids_.find(std::string(name));
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Vocab::relation_id(std::string_view name) const {
  auto it = relation_ids_.find(std::string(name));
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::entity_name(EntityId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entity_names_.size()) {
    throw DataError("entity id out of range: " + std::to_string(id));
  }
  return entity_names_[id];
}

const std::string& Vocab::base_relation_name(RelationId id) const {
  return relation_names_.at(static_cast<std::size_t>(base(id)));
}

std::string Vocab::relation_name(RelationId id) const {
  const auto& name = base_relation_name(id);
  return is_inverse(id) ? name + "_inv" : name;
}

RelationId Vocab::inverse(RelationId r) const {
  const auto n = static_cast<RelationId>(relation_names_.size());
  if (r < 0 || r >= 2 * n) throw DataError("relation id out of range: " + std::to_string(r));
  return r < n ? r + n : r - n;
}

bool Vocab::is_inverse(RelationId r) const {
  return r >= static_cast<RelationId>(relation_names_.size());
}

RelationId Vocab::base(RelationId r) const { return is_inverse(r) ? inverse(r) : r; }

std::uint64_t Vocab::entity_hash() const { return fnv1a(entity_names_); }
std::uint64_t Vocab::relation_hash() const { return fnv1a(relation_names_); }

// ---------------------------------------------------------------------------
// TripleStore

TripleStore TripleStore::ingest(const std::filesystem::path& data_dir,
                                const IngestOptions& options) {
  std::array<std::vector<NamedTriple>, 3> named;
  std::array<std::string, 3> origin;
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const auto path = data_dir / (std::string(split_name(s)) + ".txt");
    if (!std::filesystem::exists(path)) throw DataError("missing split file: " + path.string());
  }
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const auto path = data_dir / (std::string(split_name(s)) + ".txt");
    named[static_cast<int>(s)] = read_triple_file(path);
    origin[static_cast<int>(s)] = path.string();
  }
  return from_named(named[0], named[1], named[2], options, origin);
}

TripleStore TripleStore::from_named(std::span<const NamedTriple> train,
                                    std::span<const NamedTriple> valid,
                                    std::span<const NamedTriple> test,
                                    const IngestOptions& options,
                                    std::array<std::string, 3> origin) {
  if (train.empty()) throw DataError("empty split: " + origin[0]);
  TripleStore store;
  std::array<std::span<const NamedTriple>, 3> named{train, valid, test};

  for (const auto& t : train) {
    const EntityId h = store.vocab_.add_entity(t[0]);
    const RelationId r = store.vocab_.add_relation(t[1]);
    const EntityId tl = store.vocab_.add_entity(t[2]);
    store.splits_[0].push_back({h, r, tl});
  }
  // Relation ids must be final before inverse ids are meaningful, so unseen
  // relations in valid/test under the keep policy are collected first.
  for (int s = 1; s < 3; ++s) {
    for (std::size_t i = 0; i < named[s].size(); ++i) {
      const auto& t = named[s][i];
      const auto where = [&] { return origin[s] + ":" + std::to_string(i + 1); };
      for (int f : {0, 2}) {
        if (!store.vocab_.entity_id(t[f])) {
          if (options.unseen == UnseenPolicy::error) {
            throw DataError(where() + ": entity '" + t[f] + "' does not occur in train");
          }
          store.vocab_.add_entity(t[f]);
        }
      }
      if (!store.vocab_.relation_id(t[1])) {
        if (options.unseen == UnseenPolicy::error) {
          throw DataError(where() + ": relation '" + t[1] + "' does not occur in train");
        }
        store.vocab_.add_relation(t[1]);
      }
    }
  }
  for (int s = 1; s < 3; ++s) {
    for (const auto& t : named[s]) {
      store.splits_[s].push_back({*store.vocab_.entity_id(t[0]), *store.vocab_.relation_id(t[1]),
                                  *store.vocab_.entity_id(t[2])});
    }
  }
  store.build_indices();
  return store;
}

TripleStore TripleStore::from_ids(std::size_t num_entities, std::size_t num_base_relations,
                                  std::span<const Triple> train, std::span<const Triple> valid,
                                  std::span<const Triple> test) {
  TripleStore store;
  for (std::size_t e = 0; e < num_entities; ++e) store.vocab_.add_entity("e" + std::to_string(e));
  for (std::size_t r = 0; r < num_base_relations; ++r) {
    store.vocab_.add_relation("r" + std::to_string(r));
  }
  std::array<std::span<const Triple>, 3> in{train, valid, test};
  for (int s = 0; s < 3; ++s) {
    for (const auto& t : in[s]) {
      if (t.head < 0 || static_cast<std::size_t>(t.head) >= num_entities || t.tail < 0 ||
          static_cast<std::size_t>(t.tail) >= num_entities || t.relation < 0 ||
          static_cast<std::size_t>(t.relation) >= num_base_relations) {
        throw DataError("triple id out of range in split " +
                        std::string(split_name(static_cast<Split>(s))));
      }
    }
    store.splits_[s].assign(in[s].begin(), in[s].end());
  }
  store.build_indices();
  return store;
}

void TripleStore::build_indices() {
  for (int s = 0; s < 3; ++s) {
    const std::size_t dropped = dedup_in_order(splits_[s]);
    stats_[s] = count_seen(splits_[s], dropped);
  }

  const std::size_t n_ent = vocab_.num_entities();
  const auto n_base = static_cast<RelationId>(vocab_.num_base_relations());
  in_index_.assign(n_ent, {});
  out_index_.assign(n_ent, {});
  for (const auto& t : splits_[0]) {
    in_index_[t.tail].push_back({t.head, t.relation});
    out_index_[t.head].push_back({t.tail, t.relation});
    ++direct_links_[static_cast<std::uint64_t>(t.head) * n_ent + static_cast<std::uint64_t>(t.tail)];
  }
  for (auto& v : in_index_) std::sort(v.begin(), v.end());
  for (auto& v : out_index_) std::sort(v.begin(), v.end());

  aug_edges_.clear();
  aug_edges_.reserve(2 * splits_[0].size());
  for (const auto& t : splits_[0]) {
    aug_edges_.push_back(t);
    aug_edges_.push_back({t.tail, t.relation + n_base, t.head});
  }
  const auto by_tail = [](const Triple& a, const Triple& b) {
    return std::tie(a.tail, a.head, a.relation) < std::tie(b.tail, b.head, b.relation);
  };
  std::sort(aug_edges_.begin(), aug_edges_.end(), by_tail);
  aug_edges_.erase(std::unique(aug_edges_.begin(), aug_edges_.end()), aug_edges_.end());
  aug_twin_.resize(aug_edges_.size());
  for (std::size_t i = 0; i < aug_edges_.size(); ++i) {
    const auto& e = aug_edges_[i];
    const Triple twin{e.tail, vocab_.inverse(e.relation), e.head};
    auto it = std::lower_bound(aug_edges_.begin(), aug_edges_.end(), twin, by_tail);
    aug_twin_[i] = static_cast<std::size_t>(it - aug_edges_.begin());
  }

  const auto add_answers = [&](auto& index, std::span<const Triple> triples) {
    for (const auto& t : triples) {
      index[query_key(t.head, t.relation)].push_back(t.tail);
      index[query_key(t.tail, t.relation + n_base)].push_back(t.head);
    }
  };
  train_answers_.clear();
  all_answers_.clear();
  add_answers(train_answers_, splits_[0]);
  for (int s = 0; s < 3; ++s) add_answers(all_answers_, splits_[s]);
  for (auto* index : {&train_answers_, &all_answers_}) {
    for (auto& [key, v] : *index) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
  }
}

void TripleStore::check_entity(EntityId e) const {
  if (e < 0 || static_cast<std::size_t>(e) >= vocab_.num_entities()) {
    throw DataError("unknown entity id " + std::to_string(e));
  }
}

void TripleStore::check_relation(RelationId r) const {
  if (r < 0 || static_cast<std::size_t>(r) >= vocab_.num_relations()) {
    throw DataError("unknown relation id " + std::to_string(r));
  }
}

std::span<const EntityId> TripleStore::train_answers(EntityId head, RelationId relation) const {
  check_entity(head);
  check_relation(relation);
  auto it = train_answers_.find(query_key(head, relation));
  if (it == train_answers_.end()) return {};
  return it->second;
}

std::span<const EntityId> TripleStore::filtered_candidates(EntityId head,
                                                           RelationId relation) const {
  check_entity(head);
  check_relation(relation);
  auto it = all_answers_.find(query_key(head, relation));
  if (it == all_answers_.end()) return {};
  return it->second;
}

std::int64_t TripleStore::direct_links(EntityId u, EntityId v) const {
  auto it = direct_links_.find(static_cast<std::uint64_t>(u) * vocab_.num_entities() +
                               static_cast<std::uint64_t>(v));
  return it == direct_links_.end() ? 0 : it->second;
}

std::vector<TripleStore::QueryGroup> TripleStore::train_query_groups() const {
  std::vector<QueryGroup> groups;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& q : build_query_set(*this, Split::train)) {
    const auto key = query_key(q.head, q.relation);
    if (!seen.insert(key).second) continue;
    groups.push_back({q.head, q.relation, train_answers_.at(key)});
  }
  return groups;
}

Triple Query::base_triple(const Vocab& vocab) const {
  if (vocab.is_inverse(relation)) return {answer, vocab.inverse(relation), head};
  return {head, relation, answer};
}

std::vector<Query> build_query_set(const TripleStore& store, Split split) {
  const auto triples = store.split(split);
  const auto n_base = static_cast<RelationId>(store.vocab().num_base_relations());
  std::vector<Query> queries;
  queries.reserve(2 * triples.size());
  for (const auto& t : triples) {
    queries.push_back({t.head, t.relation, t.tail});
    queries.push_back({t.tail, t.relation + n_base, t.head});
  }
  return queries;
}

InducedSubgraph top_degree_subgraph(const TripleStore& store, std::size_t top_k) {
  const std::size_t n = store.num_entities();
  std::vector<std::size_t> degree(n, 0);
  for (const auto& t : store.train()) {
    ++degree[t.head];
    ++degree[t.tail];
  }
  std::vector<EntityId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](EntityId a, EntityId b) { return degree[a] > degree[b]; });
  std::vector<bool> keep(n, false);
  for (std::size_t i = 0; i < std::min(top_k, n); ++i) keep[order[i]] = true;

  const auto& vocab = store.vocab();
  const auto named = [&](const Triple& t) {
    return NamedTriple{vocab.entity_name(t.head), vocab.base_relation_name(t.relation),
                       vocab.entity_name(t.tail)};
  };
  InducedSubgraph out;
  std::vector<bool> ent_in_train(n, false);
  std::vector<bool> rel_in_train(vocab.num_base_relations(), false);
  for (const auto& t : store.train()) {
    if (!keep[t.head] || !keep[t.tail]) continue;
    out.train.push_back(named(t));
    ent_in_train[t.head] = ent_in_train[t.tail] = true;
    rel_in_train[t.relation] = true;
  }
  for (Split s : {Split::valid, Split::test}) {
    auto& dst = s == Split::valid ? out.valid : out.test;
    for (const auto& t : store.split(s)) {
      if (!keep[t.head] || !keep[t.tail]) continue;
      if (!ent_in_train[t.head] || !ent_in_train[t.tail] || !rel_in_train[t.relation]) continue;
      dst.push_back(named(t));
    }
  }
  return out;
}

void write_triples(const std::filesystem::path& path, std::span<const NamedTriple> triples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : triples) out << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
}

}  // namespace sekge
