#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kimm/linalg.hpp"

namespace kimm {

/// A named collection of dense float vectors produced by some encoder
/// (text, image, caption, multimodal) or by KGE training ("concept").
///
/// Invariants: names unique, every row has `dim` entries, all entries finite.
/// The constructor enforces them.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t dim, std::vector<std::string> names, RowMatrixXf vectors,
                 std::string kind_tag);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const RowMatrixXf& vectors() const { return vectors_; }
  const std::string& kind_tag() const { return kind_tag_; }

  const std::string& name(std::size_t row) const { return names_.at(row); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t row_of(std::string_view name) const;  // throws ValidationError if absent
  VectorXd row_as_double(std::size_t row) const;

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> names_;
  RowMatrixXf vectors_;
  std::string kind_tag_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Encodes to the EMBSTOR1 layout:
///   "EMBSTOR1" | dim u32 | n u64 | kind u16+UTF-8 | n x (u16+UTF-8 name) |
///   n*dim float32, row-major. All integers and floats little-endian.
std::string encode_store(const EmbeddingStore& store);

/// Decodes EMBSTOR1 bytes. Throws MagicMismatch, DimMismatch,
/// TruncatedPayload, DuplicateName or NonFiniteValue; any other malformation
/// is a FormatError. `expected_dim`, when given, must match the header.
EmbeddingStore decode_store(std::string_view bytes,
                            std::optional<std::size_t> expected_dim = std::nullopt);

EmbeddingStore read_store(const std::filesystem::path& path,
                          std::optional<std::size_t> expected_dim = std::nullopt);
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);

/// One campaign d_i after encoding: its multimodal vector, the concept rows
/// retrieved for it, and whether it was funded.
struct CampaignRecord {
  std::string id;
  VectorXd multimodal_vec;
  std::vector<std::uint32_t> concept_ids;  // rows of the concept store
  int label = 0;                           // 1 = successful
};

/// A record line as it appears in the JSON-lines container: vectors are named
/// references into stores rather than inline values.
struct RecordEntry {
  std::string id;
  std::string vec_name;
  std::vector<std::string> concept_names;
  int label = 0;

  friend bool operator==(const RecordEntry&, const RecordEntry&) = default;
};

std::vector<RecordEntry> read_record_entries(const std::filesystem::path& path);
void write_record_entries(const std::vector<RecordEntry>& entries,
                          const std::filesystem::path& path);

/// Resolves entries against a multimodal store and a concept store.
/// Unknown vector or concept names are ValidationErrors.
std::vector<CampaignRecord> resolve_records(const std::vector<RecordEntry>& entries,
                                            const EmbeddingStore& multimodal,
                                            const EmbeddingStore& concepts);

/// Same, but the multimodal vector is the concatenation of a text vector and
/// an image vector that share the entry's vec_name.
std::vector<CampaignRecord> resolve_records(const std::vector<RecordEntry>& entries,
                                            const EmbeddingStore& text,
                                            const EmbeddingStore& image,
                                            const EmbeddingStore& concepts);

struct SynthConfig {
  std::size_t n = 2000;
  std::size_t dim = 768;             // multimodal dimension
  std::size_t knowledge_dim = 256;   // concept vector dimension
  std::size_t num_concepts = 300;
  std::size_t concepts_per_record = 10;
  double class_ratio = 0.6063;       // fraction unsuccessful (label 0)
  double concept_signal_strength = 1.0;
  double modality_separation = 1.2;  // distance between class means, in noise std units
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  std::vector<CampaignRecord> records;
  std::vector<RecordEntry> entries;  // file form of the same records
  EmbeddingStore multimodal;         // kind "multimodal", one row per record
  EmbeddingStore concepts;           // kind "concept"
};

/// Two Gaussian class clusters in multimodal space plus a concept vocabulary
/// split into success-linked, failure-linked and neutral pools. Each concept
/// slot is drawn from the label's pool with probability
/// concept_signal_strength, otherwise uniformly from all concepts.
SynthDataset synth_dataset(const SynthConfig& cfg);

}  // namespace kimm
