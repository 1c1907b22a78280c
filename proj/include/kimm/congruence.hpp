#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "kimm/linalg.hpp"

namespace kimm {

/// Paired text and image-caption vectors (row i of each belongs to pair i),
/// optionally with the knowledge vectors retrieved for each pair.
struct ModalityPairSet {
  RowMatrixXd text;
  RowMatrixXd image;
  std::optional<std::vector<RowMatrixXd>> knowledge;  // one [k x d] block per pair

  std::size_t size() const { return static_cast<std::size_t>(text.rows()); }
  void validate() const;
};

struct Histogram {
  std::vector<double> edges;         // bins + 1 edges over [-1, 1]
  std::vector<std::size_t> counts;   // bins
};

struct CongruenceStats {
  double centroid_distance = 0.0;
  double mean_pairwise_cosine = 0.0;
  Histogram cosine_histogram;
  std::vector<double> pair_cosines;
};

struct CongruenceReport {
  std::size_t n = 0;
  CongruenceStats without_knowledge;
  std::optional<CongruenceStats> with_knowledge;
  // (mean_cos_with - mean_cos_without) / |mean_cos_without|; absent without
  // knowledge or when the baseline mean cosine is exactly zero.
  std::optional<double> relative_similarity_change;
};

/// Replaces every text and image vector by the normalised mean of itself and
/// its pair's mean knowledge vector.
ModalityPairSet augment_with_knowledge(const ModalityPairSet& pairs);

CongruenceStats congruence_stats(const RowMatrixXd& text, const RowMatrixXd& image, std::size_t bins = 20);

CongruenceReport report(const ModalityPairSet& pairs, std::size_t bins = 20);

nlohmann::ordered_json to_json(const CongruenceReport& r);

/// CSV with header `pair_id,cos_without,cos_with`; cos_with is empty when the
/// report has no knowledge variant. `ids` defaults to 0..n-1.
std::string pair_cosines_csv(const CongruenceReport& r, const std::vector<std::string>& ids = {});

/// Unit-norm text/image pairs sharing a per-pair topic direction, with k
/// knowledge rows per pair whose mean is exactly the pair midpoint.
ModalityPairSet synth_midpoint_pairs(std::size_t n, std::size_t dim, std::size_t k, std::uint64_t seed);

}  // namespace kimm
