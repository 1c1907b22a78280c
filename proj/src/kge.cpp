#include "kimm/kge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "kimm/error.hpp"
#include "kimm/rng.hpp"

namespace kimm {

KgeKind parse_kge_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "transe") return KgeKind::TransE;
  if (s == "rotate") return KgeKind::RotatE;
  if (s == "distmult") return KgeKind::DistMult;
  throw ValidationError("unknown KGE kind '" + std::string(name) + "'");
}

std::string to_string(KgeKind kind) {
  switch (kind) {
    case KgeKind::TransE: return "transe";
    case KgeKind::RotatE: return "rotate";
    case KgeKind::DistMult: return "distmult";
  }
  return "?";
}

DistanceNorm parse_norm(std::string_view name) {
  if (name == "L1" || name == "l1") return DistanceNorm::L1;
  if (name == "L2" || name == "l2") return DistanceNorm::L2;
  throw ValidationError("unknown norm '" + std::string(name) + "'");
}

std::string to_string(DistanceNorm norm) { return norm == DistanceNorm::L1 ? "L1" : "L2"; }

KgeModel KgeModel::zeros(KgeKind kind, DistanceNorm norm, std::size_t dim,
                         std::size_t num_entities, std::size_t num_relations) {
  if (dim == 0) throw ValidationError("embedding dim must be positive");
  if (kind == KgeKind::RotatE && dim % 2 != 0)
    throw ValidationError("RotatE needs an even dim (complex pairs)");
  KgeModel m;
  m.kind = kind;
  m.norm = norm;
  m.dim = dim;
  m.entity = RowMatrixXd::Zero(static_cast<Eigen::Index>(num_entities), static_cast<Eigen::Index>(dim));
  m.relation = RowMatrixXd::Zero(static_cast<Eigen::Index>(num_relations),
                                 static_cast<Eigen::Index>(m.relation_width()));
  return m;
}

void KgeTrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be finite and non-negative");
  if (dim == 0) throw ValidationError("dim must be positive");
  if (kind == KgeKind::RotatE && dim % 2 != 0) throw ValidationError("RotatE needs an even dim");
  if (!(margin > 0.0)) throw ValidationError("margin must be positive");
  if (epochs == 0) throw ValidationError("epochs must be positive");
  if (negatives_per_positive == 0) throw ValidationError("negatives_per_positive must be positive");
  if (!(l2_penalty >= 0.0)) throw ValidationError("l2_penalty must be non-negative");
}

namespace {

void check_ids(const KgeModel& m, const Triple& t) {
  if (t.head >= m.entity.rows() || t.tail >= m.entity.rows())
    throw ValidationError("entity id out of model range");
  if (t.relation >= m.relation.rows()) throw ValidationError("relation id out of model range");
}

// Score and its partial derivatives w.r.t. the head, relation and tail rows.
struct ScoreGrad {
  double value = 0.0;
  VectorXd d_head, d_rel, d_tail;
};

ScoreGrad score_with_grad(const KgeModel& m, const Triple& t, bool want_grad) {
  check_ids(m, t);
  const auto h = m.entity.row(t.head);
  const auto r = m.relation.row(t.relation);
  const auto e = m.entity.row(t.tail);
  ScoreGrad out;

  switch (m.kind) {
    case KgeKind::TransE: {
      RowVectorXd d = h + r - e;
      RowVectorXd g;  // d(score)/d(d)
      if (m.norm == DistanceNorm::L2) {
        const double n = d.norm();
        out.value = -n;
        if (want_grad) g = n > 0.0 ? RowVectorXd(-d / n) : RowVectorXd::Zero(d.size());
      } else {
        out.value = -d.lpNorm<1>();
        if (want_grad) g = -d.unaryExpr([](double x) { return double((x > 0) - (x < 0)); });
      }
      if (want_grad) {
        out.d_head = g.transpose();
        out.d_rel = g.transpose();
        out.d_tail = -g.transpose();
      }
      break;
    }
    case KgeKind::RotatE: {
      const Eigen::Index half = r.size();
      VectorXd u(half), v(half), hr_re(half), hr_im(half), cs(half), sn(half);
      for (Eigen::Index j = 0; j < half; ++j) {
        const double a = h[2 * j], b = h[2 * j + 1];
        cs[j] = std::cos(r[j]);
        sn[j] = std::sin(r[j]);
        hr_re[j] = a * cs[j] - b * sn[j];
        hr_im[j] = a * sn[j] + b * cs[j];
        u[j] = hr_re[j] - e[2 * j];
        v[j] = hr_im[j] - e[2 * j + 1];
      }
      VectorXd gu(half), gv(half);
      if (m.norm == DistanceNorm::L2) {
        const double n = std::sqrt(u.squaredNorm() + v.squaredNorm());
        out.value = -n;
        if (want_grad) {
          gu = n > 0.0 ? VectorXd(-u / n) : VectorXd::Zero(half);
          gv = n > 0.0 ? VectorXd(-v / n) : VectorXd::Zero(half);
        }
      } else {
        double total = 0.0;
        gu.setZero(half);
        gv.setZero(half);
        for (Eigen::Index j = 0; j < half; ++j) {
          const double mod = std::hypot(u[j], v[j]);
          total += mod;
          if (want_grad && mod > 0.0) {
            gu[j] = -u[j] / mod;
            gv[j] = -v[j] / mod;
          }
        }
        out.value = -total;
      }
      if (want_grad) {
        out.d_head.resize(2 * half);
        out.d_tail.resize(2 * half);
        out.d_rel.resize(half);
        for (Eigen::Index j = 0; j < half; ++j) {
          out.d_head[2 * j] = gu[j] * cs[j] + gv[j] * sn[j];
          out.d_head[2 * j + 1] = -gu[j] * sn[j] + gv[j] * cs[j];
          out.d_tail[2 * j] = -gu[j];
          out.d_tail[2 * j + 1] = -gv[j];
          out.d_rel[j] = -gu[j] * hr_im[j] + gv[j] * hr_re[j];
        }
      }
      break;
    }
    case KgeKind::DistMult: {
      // r * (h * t): h*t commutes exactly, so score(h,r,t) == score(t,r,h) bitwise
      out.value = (r.array() * (h.array() * e.array())).sum();
      if (want_grad) {
        out.d_head = (r.array() * e.array()).transpose();
        out.d_rel = (h.array() * e.array()).transpose();
        out.d_tail = (h.array() * r.array()).transpose();
      }
      break;
    }
  }
  return out;
}

void accumulate(std::map<std::uint32_t, VectorXd>& rows, std::uint32_t id, const VectorXd& g,
                double sign) {
  auto [it, inserted] = rows.try_emplace(id, VectorXd::Zero(g.size()));
  it->second += sign * g;
}

}  // namespace

double score(const KgeModel& model, const Triple& t) {
  return score_with_grad(model, t, false).value;
}

double loss_margin(const KgeModel& model, const Triple& positive, const Triple& negative,
                   double margin) {
  return std::max(0.0, margin - score(model, positive) + score(model, negative));
}

bool KgeGradient::all_finite() const {
  for (const auto& [id, g] : entity)
    if (!g.allFinite()) return false;
  for (const auto& [id, g] : relation)
    if (!g.allFinite()) return false;
  return true;
}

bool KgeGradient::all_zero() const {
  for (const auto& [id, g] : entity)
    if (!g.isZero(0.0)) return false;
  for (const auto& [id, g] : relation)
    if (!g.isZero(0.0)) return false;
  return true;
}

KgeGradient grad(const KgeModel& model, const Triple& positive, const Triple& negative,
                 double margin) {
  KgeGradient out;
  auto pos = score_with_grad(model, positive, true);
  auto neg = score_with_grad(model, negative, true);
  if (margin - pos.value + neg.value <= 0.0) return out;

  // loss = margin - s(pos) + s(neg)
  accumulate(out.entity, positive.head, pos.d_head, -1.0);
  accumulate(out.relation, positive.relation, pos.d_rel, -1.0);
  accumulate(out.entity, positive.tail, pos.d_tail, -1.0);
  accumulate(out.entity, negative.head, neg.d_head, 1.0);
  accumulate(out.relation, negative.relation, neg.d_rel, 1.0);
  accumulate(out.entity, negative.tail, neg.d_tail, 1.0);
  return out;
}

namespace {

void renormalize_rows(RowMatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
}

}  // namespace

KgeModel init_model(const KgeTrainConfig& cfg, std::size_t num_entities,
                    std::size_t num_relations, Rng& rng) {
  auto m = KgeModel::zeros(cfg.kind, cfg.norm, cfg.dim, num_entities, num_relations);
  const double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dim));
  std::uniform_real_distribution<double> uni(-bound, bound);
  for (Eigen::Index i = 0; i < m.entity.size(); ++i) m.entity.data()[i] = uni(rng);
  if (cfg.kind == KgeKind::RotatE) {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < m.relation.size(); ++i) m.relation.data()[i] = phase(rng);
  } else {
    for (Eigen::Index i = 0; i < m.relation.size(); ++i) m.relation.data()[i] = uni(rng);
  }
  if (cfg.kind == KgeKind::TransE) {
    // TransE convention: relations normalised once, entities every epoch.
    renormalize_rows(m.relation);
    renormalize_rows(m.entity);
  }
  return m;
}

KgeTrainResult train(const KnowledgeGraph& kg, const KgeTrainConfig& cfg) {
  cfg.validate();
  if (kg.triples().empty()) throw ValidationError("cannot train on an empty graph");

  Rng rng(cfg.seed);
  KgeTrainResult result{init_model(cfg, kg.num_entities(), kg.num_relations(), rng), {}, {}};
  KgeModel& model = result.model;

  std::vector<std::size_t> order(kg.triples().size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::bernoulli_distribution coin(0.5);

  // Fixed negatives for the per-epoch loss trace, drawn from their own stream
  // so the training sequence does not depend on them.
  std::vector<std::pair<Triple, Triple>> monitor;
  {
    Rng mrng(stage_seed(cfg.seed, "kge-monitor"));
    for (const Triple& pos : kg.triples())
      for (std::size_t n = 0; n < cfg.negatives_per_positive; ++n)
        monitor.emplace_back(pos, corrupt(pos, coin(mrng) ? CorruptSide::Head : CorruptSide::Tail, mrng, kg));
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t idx : order) {
      const Triple& pos = kg.triples()[idx];
      for (std::size_t n = 0; n < cfg.negatives_per_positive; ++n) {
        const Triple neg = corrupt(pos, coin(rng) ? CorruptSide::Head : CorruptSide::Tail, rng, kg);
        total += loss_margin(model, pos, neg, cfg.margin);
        ++pairs;
        if (cfg.learning_rate == 0.0) continue;
        auto g = grad(model, pos, neg, cfg.margin);
        for (auto& [id, row] : g.entity) {
          if (cfg.kind == KgeKind::DistMult && cfg.l2_penalty > 0.0)
            row += cfg.l2_penalty * model.entity.row(id).transpose();
          model.entity.row(id) -= cfg.learning_rate * row.transpose();
        }
        for (auto& [id, row] : g.relation) {
          if (cfg.kind == KgeKind::DistMult && cfg.l2_penalty > 0.0)
            row += cfg.l2_penalty * model.relation.row(id).transpose();
          model.relation.row(id) -= cfg.learning_rate * row.transpose();
        }
      }
    }
    if (cfg.kind == KgeKind::TransE && cfg.learning_rate != 0.0) renormalize_rows(model.entity);
    result.sgd_loss_trace.push_back(total / static_cast<double>(pairs));
    double monitored = 0.0;
    for (const auto& [pos, neg] : monitor) monitored += loss_margin(model, pos, neg, cfg.margin);
    result.loss_trace.push_back(monitored / static_cast<double>(monitor.size()));
    if (!model.all_finite()) throw Error("KGE training diverged (non-finite parameters)");
  }
  return result;
}

LinkPredictionMetrics link_predict_eval(const KgeModel& model, const KnowledgeGraph& known,
                                        std::span<const Triple> heldout,
                                        std::span<const int> hits_ks) {
  if (heldout.empty()) throw ValidationError("link prediction needs at least one held-out triple");
  static constexpr int kDefaultKs[] = {1, 3, 10};
  if (hits_ks.empty()) hits_ks = kDefaultKs;

  std::unordered_set<Triple, TripleHash> truth(heldout.begin(), heldout.end());
  auto is_true = [&](const Triple& t) { return known.contains(t) || truth.contains(t); };

  const auto num_entities = static_cast<EntityId>(model.entity.rows());
  std::vector<double> ranks;
  ranks.reserve(2 * heldout.size());
  for (const Triple& target : heldout) {
    const double target_score = score(model, target);
    for (CorruptSide side : {CorruptSide::Tail, CorruptSide::Head}) {
      double greater = 0.0, ties = 0.0;
      for (EntityId e = 0; e < num_entities; ++e) {
        Triple cand = target;
        (side == CorruptSide::Head ? cand.head : cand.tail) = e;
        if (cand == target || is_true(cand)) continue;
        const double s = score(model, cand);
        if (s > target_score) greater += 1.0;
        else if (s == target_score) ties += 1.0;
      }
      ranks.push_back(1.0 + greater + 0.5 * ties);
    }
  }

  LinkPredictionMetrics out;
  out.num_ranks = ranks.size();
  double sum = 0.0;
  for (double r : ranks) sum += r;
  out.mean_rank = sum / static_cast<double>(ranks.size());
  for (int k : hits_ks) {
    std::size_t hits = 0;
    for (double r : ranks)
      if (r <= k) ++hits;
    out.hits_at[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return out;
}

}  // namespace kimm
