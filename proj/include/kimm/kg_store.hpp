#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kimm/rng.hpp"

namespace kimm {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t x = (std::uint64_t{t.head} << 32) ^ t.tail;
    x ^= splitmix64(t.relation);
    return static_cast<std::size_t>(splitmix64(x));
  }
};

/// Label <-> dense id map. Ids are handed out in first-seen order.
class Vocab {
 public:
  std::uint32_t intern(std::string_view label);
  std::uint32_t id(std::string_view label) const;  // throws if unknown
  bool contains(std::string_view label) const;
  const std::string& label(std::uint32_t id) const;
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.labels_ == b.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

enum class TripleFormat { Tsv, ConceptNetCsv };

TripleFormat parse_triple_format(std::string_view name);

/// An immutable set of (head, relation, tail) facts plus vocabularies and a
/// membership index over exactly the stored triples.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Builds a graph from labelled rows. Duplicate rows are dropped; the
  /// number dropped is available through duplicates_dropped().
  static KnowledgeGraph from_labels(
      const std::vector<std::array<std::string, 3>>& rows);

  /// Same vocabularies, different triple list (e.g. a training split).
  /// Every id must already be in range.
  KnowledgeGraph with_triples(std::span<const Triple> triples) const;

  const std::vector<Triple>& triples() const { return triples_; }
  const Vocab& entities() const { return entities_; }
  const Vocab& relations() const { return relations_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t duplicates_dropped() const { return duplicates_dropped_; }

  bool contains(const Triple& t) const { return known_.contains(t); }

  /// Resolves a labelled triple; throws ValidationError for unknown labels.
  Triple resolve(std::string_view head, std::string_view relation,
                 std::string_view tail) const;

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.triples_ == b.triples_ && a.entities_ == b.entities_ &&
           a.relations_ == b.relations_;
  }

 private:
  std::vector<Triple> triples_;
  Vocab entities_;
  Vocab relations_;
  std::unordered_set<Triple, TripleHash> known_;
  std::size_t duplicates_dropped_ = 0;
};

KnowledgeGraph load_triples(const std::filesystem::path& path, TripleFormat format);

/// Parses triples from an in-memory buffer; `origin` names the source in errors.
KnowledgeGraph parse_triples(std::string_view text, TripleFormat format,
                             std::string_view origin = "<memory>");

/// Writes the graph as TSV in triple order; load_triples reads it back to an
/// identical graph.
void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path);

enum class CorruptSide { Head, Tail };

/// Filtered negative sampling: replaces one side of `t` with a uniformly drawn
/// entity such that the result is not a known triple. Gives up after 100
/// draws.
Triple corrupt(const Triple& t, CorruptSide side, Rng& rng, const KnowledgeGraph& kg);

}  // namespace kimm
