#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kimm/kg_store.hpp"
#include "kimm/linalg.hpp"

namespace kimm {

enum class KgeKind { TransE, RotatE, DistMult };
enum class DistanceNorm { L1, L2 };

KgeKind parse_kge_kind(std::string_view name);
std::string to_string(KgeKind kind);
DistanceNorm parse_norm(std::string_view name);
std::string to_string(DistanceNorm norm);

/// Entity and relation parameters for one of the three score functions.
///
/// RotatE entities are complex vectors stored as interleaved (re, im) pairs,
/// so `dim` must be even; its relations are dim/2 phase angles. The other
/// kinds use real vectors of length `dim` for both.
struct KgeModel {
  KgeKind kind = KgeKind::TransE;
  DistanceNorm norm = DistanceNorm::L2;
  std::size_t dim = 0;
  RowMatrixXd entity;    // [num_entities x dim]
  RowMatrixXd relation;  // [num_relations x dim]  (RotatE: dim/2)

  /// Zero-initialised model with the right shapes.
  static KgeModel zeros(KgeKind kind, DistanceNorm norm, std::size_t dim,
                        std::size_t num_entities, std::size_t num_relations);

  std::size_t relation_width() const { return kind == KgeKind::RotatE ? dim / 2 : dim; }
  bool all_finite() const { return entity.allFinite() && relation.allFinite(); }

  friend bool operator==(const KgeModel& a, const KgeModel& b) {
    return a.kind == b.kind && a.norm == b.norm && a.dim == b.dim &&
           a.entity.rows() == b.entity.rows() && a.relation.rows() == b.relation.rows() &&
           a.entity == b.entity && a.relation == b.relation;
  }
};

struct KgeTrainConfig {
  KgeKind kind = KgeKind::TransE;
  double learning_rate = 0.001;
  std::size_t dim = 256;
  double margin = 1.0;
  std::size_t epochs = 100;
  std::size_t negatives_per_positive = 1;
  std::uint64_t seed = 0;
  DistanceNorm norm = DistanceNorm::L2;
  // Weight decay applied to the touched rows on each DistMult step.
  double l2_penalty = 0.0;

  void validate() const;
};

/// Plausibility of a triple; higher is more plausible for every kind.
double score(const KgeModel& model, const Triple& t);

/// max(0, margin - score(positive) + score(negative))
double loss_margin(const KgeModel& model, const Triple& positive, const Triple& negative,
                   double margin);

/// Sparse gradient: only the rows a pair of triples touches. Rows shared by
/// both triples are accumulated.
struct KgeGradient {
  std::map<EntityId, VectorXd> entity;
  std::map<RelationId, VectorXd> relation;

  bool all_finite() const;
  bool all_zero() const;
};

/// Gradient of loss_margin w.r.t. the model parameters. Empty when the hinge
/// is inactive.
KgeGradient grad(const KgeModel& model, const Triple& positive, const Triple& negative,
                 double margin);

/// Draws the initial parameters: uniform in [-6/sqrt(k), 6/sqrt(k)], RotatE
/// phases uniform in [0, 2*pi). TransE rows are then scaled to unit L2 norm.
KgeModel init_model(const KgeTrainConfig& cfg, std::size_t num_entities,
                    std::size_t num_relations, Rng& rng);

struct KgeTrainResult {
  KgeModel model;
  std::vector<double> loss_trace;      // end-of-epoch mean hinge over fixed negatives
  std::vector<double> sgd_loss_trace;  // mean hinge over the pairs drawn during the epoch
};

/// Margin-ranking SGD with filtered negative sampling. Deterministic for a
/// fixed seed.
KgeTrainResult train(const KnowledgeGraph& kg, const KgeTrainConfig& cfg);

struct LinkPredictionMetrics {
  double mean_rank = 0.0;
  std::map<int, double> hits_at;  // k -> fraction of ranks <= k
  std::size_t num_ranks = 0;
};

/// Filtered head and tail ranking. `known` supplies the true triples to
/// filter; heldout triples are filtered from each other's candidate lists as
/// well. Tied candidates count half.
LinkPredictionMetrics link_predict_eval(const KgeModel& model, const KnowledgeGraph& known,
                                        std::span<const Triple> heldout,
                                        std::span<const int> hits_ks = std::span<const int>());

}  // namespace kimm
