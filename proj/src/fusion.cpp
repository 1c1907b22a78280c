#include "kimm/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "kimm/binio.hpp"
#include "kimm/error.hpp"
#include "kimm/optimizer.hpp"

namespace kimm {

void FusionConfig::validate() const {
  if (d_model == 0 || num_heads == 0 || multimodal_dim == 0 || knowledge_dim == 0)
    throw ValidationError("fusion dims must be positive");
  if (d_model % num_heads != 0)
    throw ValidationError("num_heads (" + std::to_string(num_heads) + ") must divide d_model (" +
                          std::to_string(d_model) + ")");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be finite and non-negative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ValidationError("warmup_fraction must lie in [0, 1)");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (epochs == 0) throw ValidationError("epochs must be positive");
}

nlohmann::ordered_json to_json(const FusionConfig& c) {
  nlohmann::ordered_json j;
  j["d_model"] = c.d_model;
  j["num_heads"] = c.num_heads;
  j["multimodal_dim"] = c.multimodal_dim;
  j["knowledge_dim"] = c.knowledge_dim;
  j["learning_rate"] = c.learning_rate;
  j["warmup_fraction"] = c.warmup_fraction;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["early_stop_patience"] = c.early_stop_patience;
  j["use_knowledge"] = c.use_knowledge;
  j["finetune_knowledge"] = c.finetune_knowledge;
  return j;
}

FusionConfig fusion_config_from_json(const nlohmann::json& j, FusionConfig c) {
  try {
    if (j.contains("d_model")) c.d_model = j["d_model"].get<std::size_t>();
    if (j.contains("num_heads")) c.num_heads = j["num_heads"].get<std::size_t>();
    if (j.contains("multimodal_dim")) c.multimodal_dim = j["multimodal_dim"].get<std::size_t>();
    if (j.contains("knowledge_dim")) c.knowledge_dim = j["knowledge_dim"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("warmup_fraction")) c.warmup_fraction = j["warmup_fraction"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("early_stop_patience")) c.early_stop_patience = j["early_stop_patience"].get<std::size_t>();
    if (j.contains("use_knowledge")) c.use_knowledge = j["use_knowledge"].get<bool>();
    if (j.contains("finetune_knowledge")) c.finetune_knowledge = j["finetune_knowledge"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fusion config: ") + e.what());
  }
  return c;
}

FusionNet FusionNet::zeros(const FusionConfig& cfg) {
  cfg.validate();
  FusionNet n;
  n.multimodal_dim = cfg.multimodal_dim;
  n.knowledge_dim = cfg.knowledge_dim;
  n.d_model = cfg.d_model;
  n.num_heads = cfg.num_heads;
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto dh = static_cast<Eigen::Index>(cfg.head_dim());
  n.proj_mm_w = RowMatrixXd::Zero(static_cast<Eigen::Index>(cfg.multimodal_dim), d);
  n.proj_mm_b = RowMatrixXd::Zero(1, d);
  n.proj_kg_w = RowMatrixXd::Zero(static_cast<Eigen::Index>(cfg.knowledge_dim), d);
  n.proj_kg_b = RowMatrixXd::Zero(1, d);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    n.w_q.push_back(RowMatrixXd::Zero(d, dh));
    n.w_k.push_back(RowMatrixXd::Zero(d, dh));
    n.w_v.push_back(RowMatrixXd::Zero(d, dh));
  }
  n.w_o = RowMatrixXd::Zero(d, d);
  n.cls_w = RowMatrixXd::Zero(d, 2);
  n.cls_b = RowMatrixXd::Zero(1, 2);
  return n;
}

FusionNet FusionNet::init(const FusionConfig& cfg, Rng& rng) {
  FusionNet n = zeros(cfg);
  n.visit([&](const char*, RowMatrixXd& p) {
    if (p.rows() == 1) return;  // biases stay zero
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.rows()));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uni(rng);
  });
  return n;
}

std::size_t FusionNet::num_parameters() const {
  std::size_t total = 0;
  visit([&](const char*, const RowMatrixXd& p) { total += static_cast<std::size_t>(p.size()); });
  return total;
}

bool FusionNet::all_finite() const {
  bool ok = true;
  visit([&](const char*, const RowMatrixXd& p) { ok = ok && p.allFinite(); });
  return ok;
}

bool operator==(const FusionNet& a, const FusionNet& b) {
  if (a.multimodal_dim != b.multimodal_dim || a.knowledge_dim != b.knowledge_dim ||
      a.d_model != b.d_model || a.num_heads != b.num_heads)
    return false;
  std::vector<const RowMatrixXd*> pa, pb;
  a.visit([&](const char*, const RowMatrixXd& p) { pa.push_back(&p); });
  b.visit([&](const char*, const RowMatrixXd& p) { pb.push_back(&p); });
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->rows() != pb[i]->rows() || pa[i]->cols() != pb[i]->cols() || *pa[i] != *pb[i]) return false;
  }
  return true;
}

RowVectorXd softmax(const RowVectorXd& logits) {
  RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

RowMatrixXd attention_weights(const RowMatrixXd& q, const RowMatrixXd& k) {
  if (q.cols() != k.cols()) throw DimMismatch("attention: query and key widths differ");
  if (k.rows() < 1) throw ValidationError("attention needs at least one key");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  RowMatrixXd w = (q * k.transpose()) * scale;
  for (Eigen::Index i = 0; i < w.rows(); ++i) w.row(i) = softmax(w.row(i));
  return w;
}

RowMatrixXd attention(const RowMatrixXd& q, const RowMatrixXd& k, const RowMatrixXd& v) {
  if (k.rows() != v.rows()) throw DimMismatch("attention: key and value counts differ");
  return attention_weights(q, k) * v;
}

ForwardResult forward(const FusionNet& net, const RowVectorXd& multimodal, const RowMatrixXd& knowledge,
                      bool use_knowledge) {
  if (static_cast<std::size_t>(multimodal.size()) != net.multimodal_dim)
    throw DimMismatch("multimodal vector has " + std::to_string(multimodal.size()) + " entries, net expects " +
                      std::to_string(net.multimodal_dim));
  ForwardResult out;
  ForwardTrace& tr = out.trace;
  tr.use_knowledge = use_knowledge;
  tr.multimodal = multimodal;
  tr.query = multimodal * net.proj_mm_w + net.proj_mm_b;

  if (use_knowledge) {
    if (knowledge.rows() < 1) throw ValidationError("forward needs at least one knowledge row");
    if (static_cast<std::size_t>(knowledge.cols()) != net.knowledge_dim)
      throw DimMismatch("knowledge rows have " + std::to_string(knowledge.cols()) + " entries, net expects " +
                        std::to_string(net.knowledge_dim));
    tr.knowledge = knowledge;
    tr.concepts = (knowledge * net.proj_kg_w).rowwise() + net.proj_kg_b.row(0);
    const auto dh = static_cast<Eigen::Index>(net.head_dim());
    tr.heads_concat.resize(static_cast<Eigen::Index>(net.d_model));
    for (std::size_t h = 0; h < net.num_heads; ++h) {
      RowVectorXd q = tr.query * net.w_q[h];
      RowMatrixXd k = tr.concepts * net.w_k[h];
      RowMatrixXd v = tr.concepts * net.w_v[h];
      RowVectorXd a = attention_weights(q, k).row(0);
      tr.heads_concat.segment(static_cast<Eigen::Index>(h) * dh, dh) = a * v;
      tr.head_q.push_back(std::move(q));
      tr.head_k.push_back(std::move(k));
      tr.head_v.push_back(std::move(v));
      tr.head_attn.push_back(std::move(a));
    }
    tr.fused = tr.heads_concat * net.w_o + tr.query;
  } else {
    tr.fused = tr.query;
  }
  tr.logits = tr.fused * net.cls_w + net.cls_b;
  out.logits = tr.logits;
  return out;
}

double cross_entropy(const RowVectorXd& logits, int label) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits[label];
}

void backward_accumulate(const FusionNet& net, const ForwardTrace& tr, int label, FusionNet& d,
                         RowVectorXd* d_multimodal, RowMatrixXd* d_knowledge) {
  if (label != 0 && label != 1) throw ValidationError("label must be 0 or 1");

  RowVectorXd dlogits = softmax(tr.logits);
  dlogits[label] -= 1.0;
  d.cls_w.noalias() += tr.fused.transpose() * dlogits;
  d.cls_b += dlogits;
  const RowVectorXd dfused = dlogits * net.cls_w.transpose();
  RowVectorXd dquery = dfused;  // residual path

  if (tr.use_knowledge) {
    d.w_o.noalias() += tr.heads_concat.transpose() * dfused;
    const RowVectorXd dconcat = dfused * net.w_o.transpose();
    RowMatrixXd dconcepts = RowMatrixXd::Zero(tr.concepts.rows(), tr.concepts.cols());
    const auto dh = static_cast<Eigen::Index>(net.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < net.num_heads; ++h) {
      const RowVectorXd dout = dconcat.segment(static_cast<Eigen::Index>(h) * dh, dh);
      const RowVectorXd& a = tr.head_attn[h];
      const RowMatrixXd dv = a.transpose() * dout;                   // [k x dh]
      const RowVectorXd da = dout * tr.head_v[h].transpose();        // [1 x k]
      const RowVectorXd ds = a.array() * (da.array() - da.dot(a));  // softmax Jacobian
      const RowVectorXd dq = (ds * tr.head_k[h]) * scale;
      const RowMatrixXd dk = (ds.transpose() * tr.head_q[h]) * scale;

      d.w_q[h].noalias() += tr.query.transpose() * dq;
      d.w_k[h].noalias() += tr.concepts.transpose() * dk;
      d.w_v[h].noalias() += tr.concepts.transpose() * dv;
      dquery.noalias() += dq * net.w_q[h].transpose();
      dconcepts.noalias() += dk * net.w_k[h].transpose() + dv * net.w_v[h].transpose();
    }
    d.proj_kg_w.noalias() += tr.knowledge.transpose() * dconcepts;
    d.proj_kg_b += dconcepts.colwise().sum();
    if (d_knowledge) *d_knowledge = dconcepts * net.proj_kg_w.transpose();
  } else if (d_knowledge) {
    *d_knowledge = RowMatrixXd::Zero(tr.knowledge.rows(), static_cast<Eigen::Index>(net.knowledge_dim));
  }

  d.proj_mm_w.noalias() += tr.multimodal.transpose() * dquery;
  d.proj_mm_b += dquery;
  if (d_multimodal) *d_multimodal = dquery * net.proj_mm_w.transpose();
}

FusionGradient backward(const FusionNet& net, const ForwardTrace& tr, int label) {
  FusionGradient g;
  FusionConfig shape;
  shape.multimodal_dim = net.multimodal_dim;
  shape.knowledge_dim = net.knowledge_dim;
  shape.d_model = net.d_model;
  shape.num_heads = net.num_heads;
  g.params = FusionNet::zeros(shape);
  backward_accumulate(net, tr, label, g.params, &g.d_multimodal, &g.d_knowledge);
  return g;
}

RowMatrixXd knowledge_matrix(const CampaignRecord& record, const RowMatrixXd& concepts) {
  if (record.concept_ids.empty()) throw ValidationError("record '" + record.id + "' has no concepts");
  RowMatrixXd k(static_cast<Eigen::Index>(record.concept_ids.size()), concepts.cols());
  for (std::size_t i = 0; i < record.concept_ids.size(); ++i) {
    if (record.concept_ids[i] >= concepts.rows())
      throw ValidationError("record '" + record.id + "': concept id " + std::to_string(record.concept_ids[i]) +
                            " out of range");
    k.row(static_cast<Eigen::Index>(i)) = concepts.row(record.concept_ids[i]);
  }
  return k;
}

Prediction predict(const FusionNet& net, const CampaignRecord& record, const RowMatrixXd& concepts,
                   bool use_knowledge) {
  const RowMatrixXd k = use_knowledge ? knowledge_matrix(record, concepts) : RowMatrixXd();
  const auto res = forward(net, record.multimodal_vec.transpose(), k, use_knowledge);
  const RowVectorXd p = softmax(res.logits);
  Prediction out;
  out.probabilities = {p[0], p[1]};
  out.label = res.logits[1] > res.logits[0] ? 1 : 0;  // ties go to 0
  return out;
}

Prediction predict(const FusionNet& net, const CampaignRecord& record, const EmbeddingStore& concepts,
                   bool use_knowledge) {
  return predict(net, record, RowMatrixXd(concepts.vectors().cast<double>()), use_knowledge);
}

namespace {

struct SplitScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

SplitScore evaluate(const FusionNet& net, std::span<const CampaignRecord> records, const RowMatrixXd& concepts,
                    bool use_knowledge) {
  SplitScore s;
  if (records.empty()) return s;
  std::size_t correct = 0;
  for (const auto& r : records) {
    const RowMatrixXd k = use_knowledge ? knowledge_matrix(r, concepts) : RowMatrixXd();
    const auto res = forward(net, r.multimodal_vec.transpose(), k, use_knowledge);
    s.loss += cross_entropy(res.logits, r.label);
    const int label = res.logits[1] > res.logits[0] ? 1 : 0;
    if (label == r.label) ++correct;
  }
  s.loss /= static_cast<double>(records.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  return s;
}

}  // namespace

FusionTrainResult train_classifier(std::span<const CampaignRecord> train,
                                   std::span<const CampaignRecord> validation,
                                   const EmbeddingStore& concept_store, const FusionConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ValidationError("train_classifier: no training records");
  if (concept_store.dim() != cfg.knowledge_dim)
    throw DimMismatch("concept store dim " + std::to_string(concept_store.dim()) + " != knowledge_dim " +
                      std::to_string(cfg.knowledge_dim));
  RowMatrixXd concepts = concept_store.vectors().cast<double>();
  for (auto split : {train, validation}) {
    for (const auto& r : split) {
      if (static_cast<std::size_t>(r.multimodal_vec.size()) != cfg.multimodal_dim)
        throw DimMismatch("record '" + r.id + "' multimodal dim " + std::to_string(r.multimodal_vec.size()) +
                          " != " + std::to_string(cfg.multimodal_dim));
      if (r.label != 0 && r.label != 1) throw ValidationError("record '" + r.id + "' has a non-binary label");
      knowledge_matrix(r, concepts);  // throws on unresolvable ids
    }
  }

  Rng init_rng(stage_seed(cfg.seed, "fusion-init"));
  Rng shuffle_rng(stage_seed(cfg.seed, "fusion-shuffle"));
  FusionNet net = FusionNet::init(cfg, init_rng);

  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const WarmupLinearSchedule schedule(cfg.learning_rate, steps_per_epoch * cfg.epochs, cfg.warmup_fraction);
  Adam adam;

  FusionTrainResult result;
  result.net = net;
  double best_accuracy = -1.0;
  std::size_t stale = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      FusionConfig shape = cfg;
      FusionNet grad_sum = FusionNet::zeros(shape);
      RowMatrixXd concept_grad;
      if (cfg.finetune_knowledge) concept_grad = RowMatrixXd::Zero(concepts.rows(), concepts.cols());

      for (std::size_t i = start; i < end; ++i) {
        const CampaignRecord& r = train[order[i]];
        const RowMatrixXd k = cfg.use_knowledge ? knowledge_matrix(r, concepts) : RowMatrixXd();
        const auto res = forward(net, r.multimodal_vec.transpose(), k, cfg.use_knowledge);
        epoch_loss += cross_entropy(res.logits, r.label);
        if (cfg.finetune_knowledge && cfg.use_knowledge) {
          RowMatrixXd d_knowledge;
          backward_accumulate(net, res.trace, r.label, grad_sum, nullptr, &d_knowledge);
          for (std::size_t c = 0; c < r.concept_ids.size(); ++c)
            concept_grad.row(r.concept_ids[c]) += d_knowledge.row(static_cast<Eigen::Index>(c));
        } else {
          backward_accumulate(net, res.trace, r.label, grad_sum, nullptr, nullptr);
        }
      }

      const double inv = 1.0 / static_cast<double>(end - start);
      lr = schedule(++step);
      adam.begin_step();
      std::vector<RowMatrixXd*> grads;
      grad_sum.visit([&](const char*, RowMatrixXd& p) { grads.push_back(&p); });
      std::size_t slot = 0;
      net.visit([&](const char*, RowMatrixXd& p) {
        *grads[slot] *= inv;
        adam.update(slot, p, *grads[slot], lr);
        ++slot;
      });
      if (cfg.finetune_knowledge) adam.update(slot, concepts, concept_grad * inv, lr);
    }

    if (!net.all_finite()) throw Error("fusion training diverged (non-finite parameters)");
    const auto val = evaluate(net, validation, concepts, cfg.use_knowledge);
    result.epochs.push_back({epoch, epoch_loss / static_cast<double>(train.size()), val.loss, val.accuracy, lr});

    if (val.accuracy > best_accuracy) {
      best_accuracy = val.accuracy;
      result.net = net;
      result.best_epoch = epoch;
      if (cfg.finetune_knowledge) result.tuned_concepts = concepts;
      stale = 0;
    } else if (step > schedule.warmup_steps()) {
      // Patience only counts once warmup is over; accuracy tends to sit on the
      // majority class while the rate is still ramping up.
      if (++stale >= cfg.early_stop_patience && cfg.early_stop_patience > 0 && !validation.empty()) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (validation.empty()) {
    result.net = net;
    result.best_epoch = result.epochs.size();
    if (cfg.finetune_knowledge) result.tuned_concepts = concepts;
  }
  return result;
}

namespace {
constexpr std::string_view kCheckpointMagic = "FUSNET01";
}

std::string encode_checkpoint(const FusionNet& net) {
  binio::Writer w;
  w.put_bytes(kCheckpointMagic);
  w.put(static_cast<std::uint32_t>(net.multimodal_dim));
  w.put(static_cast<std::uint32_t>(net.knowledge_dim));
  w.put(static_cast<std::uint32_t>(net.d_model));
  w.put(static_cast<std::uint32_t>(net.num_heads));
  net.visit([&](const char*, const RowMatrixXd& p) {
    for (Eigen::Index i = 0; i < p.size(); ++i) w.put_f32(static_cast<float>(p.data()[i]));
  });
  return w.take();
}

FusionNet decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw MagicMismatch("not a FUSNET01 checkpoint (bad magic)");
  binio::Reader r(bytes.substr(kCheckpointMagic.size()));
  FusionConfig shape;
  shape.multimodal_dim = r.get<std::uint32_t>("multimodal_dim");
  shape.knowledge_dim = r.get<std::uint32_t>("knowledge_dim");
  shape.d_model = r.get<std::uint32_t>("d_model");
  shape.num_heads = r.get<std::uint32_t>("num_heads");
  if (shape.multimodal_dim == 0 || shape.knowledge_dim == 0 || shape.d_model == 0 || shape.num_heads == 0 ||
      shape.d_model % shape.num_heads != 0)
    throw DimMismatch("FUSNET01 header has inconsistent dims");

  // Size check before allocating anything: all dims are < 2^32, so these
  // products fit in 128 bits.
  using u128 = unsigned __int128;
  const u128 d = shape.d_model;
  const u128 expected = (u128(shape.multimodal_dim) + shape.knowledge_dim + 2) * d + 3 * d * d /* heads */ +
                        d * d + d * 2 + 2;
  if (expected * 4 != u128(r.remaining())) {
    if (expected * 4 > u128(r.remaining())) throw TruncatedPayload("FUSNET01 parameter payload truncated");
    throw FormatError("FUSNET01 has trailing bytes");
  }
  FusionNet net = FusionNet::zeros(shape);
  net.visit([&](const char*, RowMatrixXd& p) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const float v = r.get_f32("parameters");
      if (!std::isfinite(v)) throw NonFiniteValue("FUSNET01 contains a non-finite parameter");
      p.data()[i] = v;
    }
  });
  return net;
}

void write_checkpoint(const FusionNet& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

FusionNet read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

FusionNet round_to_f32(FusionNet net) {
  net.visit([](const char*, RowMatrixXd& p) { p = p.cast<float>().cast<double>(); });
  return net;
}

}  // namespace kimm
