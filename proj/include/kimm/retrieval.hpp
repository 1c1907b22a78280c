#pragma once

#include <string>
#include <vector>

#include "kimm/embedding_io.hpp"
#include "kimm/linalg.hpp"

namespace kimm {

struct ScoredConcept {
  std::string name;
  double score = 0.0;  // cosine similarity

  friend bool operator==(const ScoredConcept&, const ScoredConcept&) = default;
};

/// Exact cosine search over a concept store. Zero-norm rows are never
/// returned.
class ConceptIndex {
 public:
  explicit ConceptIndex(EmbeddingStore store);

  const EmbeddingStore& store() const { return store_; }
  std::size_t dim() const { return store_.dim(); }
  const std::vector<double>& norms() const { return norms_; }
  std::size_t usable_rows() const { return usable_; }

  /// Best `k` concepts by cosine, descending; equal scores keep store order.
  std::vector<ScoredConcept> top_k(const VectorXd& query, std::size_t k) const;

 private:
  EmbeddingStore store_;
  RowMatrixXd vectors_;
  std::vector<double> norms_;
  std::size_t usable_ = 0;
};

/// Normalised mean of the normalised text and caption vectors.
VectorXd combine_queries(const VectorXd& text_vec, const VectorXd& caption_vec);

/// Queries with the normalised mean of the normalised text and caption
/// vectors and returns the concept names.
std::vector<std::string> retrieve_for_record(const ConceptIndex& index, const VectorXd& text_vec,
                                             const VectorXd& caption_vec, std::size_t k);

}  // namespace kimm
