#include "kimm/kg_store.hpp"

#include <fstream>
#include <sstream>

#include "kimm/error.hpp"

namespace kimm {

std::uint32_t Vocab::intern(std::string_view label) {
  auto it = ids_.find(std::string(label));
  if (it != ids_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(labels_.size());
  labels_.emplace_back(label);
  ids_.emplace(labels_.back(), id);
  return id;
}

std::uint32_t Vocab::id(std::string_view label) const {
  auto it = ids_.find(std::string(label));
  if (it == ids_.end()) throw ValidationError("unknown label '" + std::string(label) + "'");
  return it->second;
}

bool Vocab::contains(std::string_view label) const {
  return ids_.contains(std::string(label));
}

const std::string& Vocab::label(std::uint32_t id) const {
  if (id >= labels_.size()) throw ValidationError("id " + std::to_string(id) + " out of range");
  return labels_[id];
}

TripleFormat parse_triple_format(std::string_view name) {
  if (name == "tsv") return TripleFormat::Tsv;
  if (name == "conceptnet-csv" || name == "conceptnet") return TripleFormat::ConceptNetCsv;
  throw ValidationError("unknown triple format '" + std::string(name) + "'");
}

KnowledgeGraph KnowledgeGraph::from_labels(
    const std::vector<std::array<std::string, 3>>& rows) {
  KnowledgeGraph kg;
  kg.triples_.reserve(rows.size());
  for (const auto& [h, r, t] : rows) {
    Triple triple{kg.entities_.intern(h), kg.relations_.intern(r), kg.entities_.intern(t)};
    if (kg.known_.insert(triple).second) {
      kg.triples_.push_back(triple);
    } else {
      ++kg.duplicates_dropped_;
    }
  }
  return kg;
}

KnowledgeGraph KnowledgeGraph::with_triples(std::span<const Triple> triples) const {
  KnowledgeGraph kg;
  kg.entities_ = entities_;
  kg.relations_ = relations_;
  for (const auto& t : triples) {
    if (t.head >= num_entities() || t.tail >= num_entities() || t.relation >= num_relations())
      throw ValidationError("triple id out of vocabulary range");
    if (kg.known_.insert(t).second) {
      kg.triples_.push_back(t);
    } else {
      ++kg.duplicates_dropped_;
    }
  }
  return kg;
}

Triple KnowledgeGraph::resolve(std::string_view head, std::string_view relation,
                               std::string_view tail) const {
  return {entities_.id(head), relations_.id(relation), entities_.id(tail)};
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// "/c/en/cat/n/..." -> "cat"; "/r/IsA" -> "IsA"; plain labels pass through.
std::string_view strip_uri(std::string_view uri) {
  if (uri.empty() || uri.front() != '/') return uri;
  std::vector<std::string_view> parts;
  for (auto p : split(uri.substr(1), '/'))
    if (!p.empty()) parts.push_back(p);
  if (parts.empty()) return uri;
  if (parts[0] == "c" && parts.size() >= 3) return parts[2];
  return parts.back();
}

}  // namespace

KnowledgeGraph parse_triples(std::string_view text, TripleFormat format,
                             std::string_view origin) {
  std::vector<std::array<std::string, 3>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos || line.front() == '#') continue;

    auto error = [&](const std::string& what) {
      return ValidationError(std::string(origin) + ":" + std::to_string(line_no) + ": " + what);
    };

    if (format == TripleFormat::Tsv) {
      auto cols = split(line, '\t');
      if (cols.size() < 3) throw error("expected 3 tab-separated columns, got " + std::to_string(cols.size()));
      if (cols[0].empty() || cols[1].empty() || cols[2].empty()) throw error("empty field");
      rows.push_back({std::string(cols[0]), std::string(cols[1]), std::string(cols[2])});
    } else {
      auto cols = split(line, line.find('\t') != std::string_view::npos ? '\t' : ',');
      // The public dump prefixes each row with an assertion URI.
      std::size_t off = (!cols.empty() && cols[0].starts_with("/a/")) ? 1 : 0;
      if (cols.size() < off + 3) throw error("expected relation, head, tail columns");
      auto rel = strip_uri(cols[off]);
      auto head = strip_uri(cols[off + 1]);
      auto tail = strip_uri(cols[off + 2]);
      if (rel.empty() || head.empty() || tail.empty()) throw error("empty field");
      rows.push_back({std::string(head), std::string(rel), std::string(tail)});
    }
  }
  if (rows.empty()) throw ValidationError(std::string(origin) + ": no triples");
  return KnowledgeGraph::from_labels(rows);
}

KnowledgeGraph load_triples(const std::filesystem::path& path, TripleFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_triples(buf.str(), format, path.string());
}

void save_triples(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : kg.triples()) {
    out << kg.entities().label(t.head) << '\t' << kg.relations().label(t.relation) << '\t'
        << kg.entities().label(t.tail) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Triple corrupt(const Triple& t, CorruptSide side, Rng& rng, const KnowledgeGraph& kg) {
  const auto n = kg.num_entities();
  if (n < 2) throw ValidationError("corrupt needs at least 2 entities");
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 2));
  const EntityId original = side == CorruptSide::Head ? t.head : t.tail;
  for (int attempt = 0; attempt < 100; ++attempt) {
    EntityId e = pick(rng);
    if (e >= original) ++e;  // skip the original entity
    Triple c = t;
    (side == CorruptSide::Head ? c.head : c.tail) = e;
    if (!kg.contains(c)) return c;
  }
  throw ValidationError("corrupt: 100 draws all hit known triples (graph too dense to corrupt)");
}

}  // namespace kimm
