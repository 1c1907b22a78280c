#include "kimm/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "kimm/error.hpp"

namespace kimm {

ConceptIndex::ConceptIndex(EmbeddingStore store) : store_(std::move(store)) {
  vectors_ = store_.vectors().cast<double>();
  norms_.resize(store_.size());
  for (std::size_t i = 0; i < store_.size(); ++i) {
    norms_[i] = vectors_.row(static_cast<Eigen::Index>(i)).norm();
    if (norms_[i] > 0.0) ++usable_;
  }
}

std::vector<ScoredConcept> ConceptIndex::top_k(const VectorXd& query, std::size_t k) const {
  if (static_cast<std::size_t>(query.size()) != dim())
    throw DimMismatch("query dim " + std::to_string(query.size()) + " != index dim " + std::to_string(dim()));
  const double qn = query.norm();
  if (!(qn > 0.0)) throw ValidationError("query vector has zero norm");
  if (k == 0) throw ValidationError("k must be positive");

  const VectorXd dots = vectors_ * query;
  std::vector<std::size_t> rows;
  std::vector<double> cos(store_.size(), 0.0);
  rows.reserve(usable_);
  for (std::size_t i = 0; i < store_.size(); ++i) {
    if (norms_[i] <= 0.0) continue;
    cos[i] = std::clamp(dots[static_cast<Eigen::Index>(i)] / (norms_[i] * qn), -1.0, 1.0);
    rows.push_back(i);
  }
  const std::size_t take = std::min(k, rows.size());
  auto better = [&](std::size_t a, std::size_t b) { return cos[a] > cos[b] || (cos[a] == cos[b] && a < b); };
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end(), better);

  std::vector<ScoredConcept> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({store_.name(rows[i]), cos[rows[i]]});
  return out;
}

VectorXd combine_queries(const VectorXd& text_vec, const VectorXd& caption_vec) {
  if (text_vec.size() != caption_vec.size()) throw DimMismatch("text and caption dims differ");
  const double tn = text_vec.norm();
  const double cn = caption_vec.norm();
  if (!(tn > 0.0)) throw ValidationError("text vector has zero norm");
  if (!(cn > 0.0)) throw ValidationError("caption vector has zero norm");
  VectorXd query = 0.5 * (text_vec / tn + caption_vec / cn);
  const double qn = query.norm();
  if (!(qn > 0.0)) throw ValidationError("text and caption vectors cancel (zero-norm query)");
  return query / qn;
}

std::vector<std::string> retrieve_for_record(const ConceptIndex& index, const VectorXd& text_vec,
                                             const VectorXd& caption_vec, std::size_t k) {
  if (static_cast<std::size_t>(text_vec.size()) != index.dim())
    throw DimMismatch("text vector dim " + std::to_string(text_vec.size()) + " != index dim " + std::to_string(index.dim()));
  const VectorXd query = combine_queries(text_vec, caption_vec);
  std::vector<std::string> names;
  for (auto& hit : index.top_k(query, k)) names.push_back(std::move(hit.name));
  return names;
}

}  // namespace kimm
