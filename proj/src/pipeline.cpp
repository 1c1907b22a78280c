#include "kimm/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kimm/congruence.hpp"
#include "kimm/error.hpp"
#include "kimm/metrics.hpp"
#include "kimm/retrieval.hpp"

namespace kimm {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key) && !j[key].is_null()) field = j[key].get<T>();
}

void take_path(const json& j, const char* key, fs::path& field) {
  if (j.contains(key) && !j[key].is_null()) field = j[key].get<std::string>();
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j, PipelineConfig c) {
  try {
    take(j, "seed", c.seed);
    take(j, "lr_sweep", c.lr_sweep);
    take(j, "retrieval_k", c.retrieval_k);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      take_path(p, "triples", c.paths.triples);
      take(p, "triples_format", c.paths.triples_format);
      take_path(p, "heldout", c.paths.heldout);
      take_path(p, "records", c.paths.records);
      take_path(p, "multimodal_store", c.paths.multimodal_store);
      take_path(p, "text_store", c.paths.text_store);
      take_path(p, "image_store", c.paths.image_store);
      take_path(p, "concept_store", c.paths.concept_store);
      take_path(p, "queries", c.paths.queries);
      take_path(p, "captions", c.paths.captions);
      take_path(p, "pairs", c.paths.pairs);
      take_path(p, "checkpoint", c.paths.checkpoint);
      take_path(p, "out", c.paths.out);
    }
    if (j.contains("kge")) {
      const auto& k = j["kge"];
      if (k.contains("kind")) c.kge.kind = parse_kge_kind(k["kind"].get<std::string>());
      if (k.contains("norm")) c.kge.norm = parse_norm(k["norm"].get<std::string>());
      take(k, "learning_rate", c.kge.learning_rate);
      take(k, "dim", c.kge.dim);
      take(k, "margin", c.kge.margin);
      take(k, "epochs", c.kge.epochs);
      take(k, "negatives_per_positive", c.kge.negatives_per_positive);
      take(k, "l2_penalty", c.kge.l2_penalty);
      take(k, "heldout_fraction", c.kge_heldout_fraction);
    }
    if (j.contains("fusion")) c.fusion = fusion_config_from_json(j["fusion"], c.fusion);
    if (j.contains("splits")) {
      take(j["splits"], "train", c.splits.train);
      take(j["splits"], "val", c.splits.val);
      take(j["splits"], "test", c.splits.test);
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      take(s, "n", c.synth.n);
      take(s, "dim", c.synth.dim);
      take(s, "knowledge_dim", c.synth.knowledge_dim);
      take(s, "num_concepts", c.synth.num_concepts);
      take(s, "concepts_per_record", c.synth.concepts_per_record);
      take(s, "class_ratio", c.synth.class_ratio);
      take(s, "concept_signal_strength", c.synth.concept_signal_strength);
      take(s, "modality_separation", c.synth.modality_separation);
      take(s, "pairs", c.synth_pairs);
      take(s, "pair_dim", c.synth_pair_dim);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return pipeline_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

SplitSizes scaled_splits(const SplitSizes& configured, std::size_t n) {
  const std::size_t total = configured.train + configured.val + configured.test;
  if (total == 0) throw ValidationError("split sizes are all zero");
  if (total <= n) return configured;
  SplitSizes s;
  s.val = n * configured.val / total;
  s.test = n * configured.test / total;
  s.train = n - s.val - s.test;
  return s;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 2;
  return 1;
}

namespace {

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

const fs::path& require(const fs::path& p, const char* what) {
  if (p.empty()) throw ValidationError(std::string("missing required path: ") + what);
  return p;
}

EmbeddingStore store_from_double(const std::vector<std::string>& names, const RowMatrixXd& m, std::string kind) {
  return EmbeddingStore(static_cast<std::size_t>(m.cols()), names, m.cast<float>(), std::move(kind));
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- train-kge

void cmd_train_kge(const PipelineConfig& cfg, std::ostream& log) {
  const auto kg = load_triples(require(cfg.paths.triples, "triples"), parse_triple_format(cfg.paths.triples_format));
  log << "loaded " << kg.triples().size() << " triples (" << kg.num_entities() << " entities, "
      << kg.num_relations() << " relations, " << kg.duplicates_dropped() << " duplicates dropped)\n";

  std::vector<Triple> heldout;
  std::vector<Triple> training;
  if (!cfg.paths.heldout.empty()) {
    const auto held = load_triples(cfg.paths.heldout, TripleFormat::Tsv);
    for (const auto& t : held.triples()) {
      heldout.push_back(kg.resolve(held.entities().label(t.head), held.relations().label(t.relation),
                                   held.entities().label(t.tail)));
    }
    for (const auto& t : kg.triples())
      if (std::find(heldout.begin(), heldout.end(), t) == heldout.end()) training.push_back(t);
  } else {
    std::vector<std::size_t> order(kg.triples().size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(stage_seed(cfg.seed, "kge-split"));
    std::shuffle(order.begin(), order.end(), split_rng);
    std::size_t n_held = 0;
    if (kg.triples().size() >= 2 && cfg.kge_heldout_fraction > 0.0) {
      n_held = static_cast<std::size_t>(std::llround(cfg.kge_heldout_fraction * static_cast<double>(kg.triples().size())));
      n_held = std::clamp<std::size_t>(n_held, 1, kg.triples().size() - 1);
    }
    std::vector<bool> is_held(kg.triples().size(), false);
    for (std::size_t i = 0; i < n_held; ++i) is_held[order[i]] = true;
    for (std::size_t i = 0; i < kg.triples().size(); ++i)
      (is_held[i] ? heldout : training).push_back(kg.triples()[i]);
  }

  KgeTrainConfig kcfg = cfg.kge;
  kcfg.seed = cfg.seed;  // recorded as-is in kge_meta.txt, so the library call reproduces the run
  const auto train_kg = kg.with_triples(training);
  const auto result = train(train_kg, kcfg);

  const fs::path out = cfg.paths.out;
  ensure_out_dir(out);
  write_store(store_from_double(kg.entities().labels(), result.model.entity, "concept"), out / "entities.embstor");
  write_store(store_from_double(kg.relations().labels(), result.model.relation, "relation"), out / "relations.embstor");

  std::ostringstream meta;
  meta << "kind=" << to_string(kcfg.kind) << "\n"
       << "dim=" << kcfg.dim << "\n"
       << "norm=" << to_string(kcfg.norm) << "\n"
       << "seed=" << cfg.seed << "\n"
       << "epochs=" << kcfg.epochs << "\n"
       << "learning_rate=" << kcfg.learning_rate << "\n"
       << "margin=" << kcfg.margin << "\n"
       << "negatives_per_positive=" << kcfg.negatives_per_positive << "\n"
       << "entities=" << kg.num_entities() << "\n"
       << "relations=" << kg.num_relations() << "\n";
  write_text(out / "kge_meta.txt", meta.str());

  std::ostringstream trace;
  trace << std::setprecision(17) << "epoch,loss,sgd_loss\n";
  for (std::size_t e = 0; e < result.loss_trace.size(); ++e)
    trace << (e + 1) << ',' << result.loss_trace[e] << ',' << result.sgd_loss_trace[e] << '\n';
  write_text(out / "kge_loss.csv", trace.str());

  ojson metrics;
  metrics["train_triples"] = training.size();
  metrics["heldout_triples"] = heldout.size();
  if (!heldout.empty()) {
    const auto lp = link_predict_eval(result.model, kg, heldout);
    metrics["mean_rank"] = lp.mean_rank;
    for (const auto& [k, v] : lp.hits_at) metrics["hits@" + std::to_string(k)] = v;
    log << "link prediction on " << heldout.size() << " held-out triples: mean_rank=" << fmt(lp.mean_rank);
    for (const auto& [k, v] : lp.hits_at) log << " hits@" << k << "=" << fmt(v);
    log << "\n";
  } else {
    log << "no held-out triples; skipping link prediction\n";
  }
  write_json(out / "kge_metrics.json", metrics);
}

// ----------------------------------------------------------------- retrieve

void cmd_retrieve(const PipelineConfig& cfg, std::ostream& log) {
  const ConceptIndex index(read_store(require(cfg.paths.concept_store, "concept_store")));
  const auto queries = read_store(require(cfg.paths.queries, "queries"));
  std::optional<EmbeddingStore> captions;
  if (!cfg.paths.captions.empty()) captions = read_store(cfg.paths.captions, queries.dim());
  if (queries.dim() != index.dim())
    throw DimMismatch("query store dim " + std::to_string(queries.dim()) + " != concept store dim " +
                      std::to_string(index.dim()));

  std::ostringstream lines;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    VectorXd q = queries.row_as_double(i);
    if (captions) q = combine_queries(q, captions->row_as_double(captions->row_of(queries.name(i))));
    ojson j;
    j["id"] = queries.name(i);
    j["concepts"] = ojson::array();
    for (const auto& hit : index.top_k(q, cfg.retrieval_k)) j["concepts"].push_back({{"name", hit.name}, {"score", hit.score}});
    lines << j.dump() << '\n';
  }
  ensure_out_dir(cfg.paths.out);
  write_text(cfg.paths.out / "retrieval.jsonl", lines.str());
  log << "retrieved top-" << cfg.retrieval_k << " concepts for " << queries.size() << " queries\n";
}

// ------------------------------------------------------------- train-fusion

namespace {

struct LoadedRecords {
  std::vector<CampaignRecord> records;
  EmbeddingStore concepts;
};

LoadedRecords load_records(const PipelineConfig& cfg) {
  const auto entries = read_record_entries(require(cfg.paths.records, "records"));
  if (entries.empty()) throw ValidationError(cfg.paths.records.string() + ": no records");
  LoadedRecords out;
  out.concepts = read_store(require(cfg.paths.concept_store, "concept_store"));
  if (!cfg.paths.multimodal_store.empty()) {
    out.records = resolve_records(entries, read_store(cfg.paths.multimodal_store), out.concepts);
  } else if (!cfg.paths.text_store.empty() && !cfg.paths.image_store.empty()) {
    out.records = resolve_records(entries, read_store(cfg.paths.text_store), read_store(cfg.paths.image_store), out.concepts);
  } else {
    throw ValidationError("need multimodal_store, or text_store and image_store");
  }
  return out;
}

ojson split_metrics(const FusionNet& net, std::span<const CampaignRecord> records, const RowMatrixXd& concepts,
                    bool use_knowledge) {
  if (records.empty()) return nullptr;
  std::vector<int> labels, preds;
  std::vector<double> scores;
  for (const auto& r : records) {
    const auto p = predict(net, r, concepts, use_knowledge);
    labels.push_back(r.label);
    preds.push_back(p.label);
    scores.push_back(p.probabilities[1]);
  }
  auto res = classify_metrics(labels, preds);
  ojson j;
  try {
    res.auc = auc(labels, scores);
    j = to_json(res);
  } catch (const ValidationError&) {
    j = to_json(res);
    j["auc"] = nullptr;  // single-class split
  }
  j["n"] = records.size();
  return j;
}

}  // namespace

void cmd_train_fusion(const PipelineConfig& cfg, std::ostream& log) {
  auto data = load_records(cfg);
  auto& records = data.records;

  FusionConfig fcfg = cfg.fusion;
  fcfg.multimodal_dim = static_cast<std::size_t>(records.front().multimodal_vec.size());
  fcfg.knowledge_dim = data.concepts.dim();
  fcfg.seed = stage_seed(cfg.seed, "fusion");

  const auto sizes = scaled_splits(cfg.splits, records.size());
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(stage_seed(cfg.seed, "fusion-split"));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<CampaignRecord> train_set, val_set, test_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < sizes.train ? train_set : (i < sizes.train + sizes.val ? val_set : test_set);
    if (i < sizes.train + sizes.val + sizes.test) dst.push_back(records[order[i]]);
  }
  if (train_set.empty()) throw ValidationError("training split is empty");

  std::vector<double> rates{fcfg.learning_rate};
  if (cfg.lr_sweep) rates = {1e-4, 5e-5};
  std::optional<FusionTrainResult> best;
  double best_lr = rates.front();
  double best_acc = -1.0;
  for (double lr : rates) {
    FusionConfig run = fcfg;
    run.learning_rate = lr;
    auto result = train_classifier(train_set, val_set, data.concepts, run);
    const double acc = result.epochs.empty() ? 0.0 : result.epochs[result.best_epoch - 1].val_accuracy;
    log << "lr=" << lr << ": best epoch " << result.best_epoch << " of " << result.epochs.size()
        << ", val accuracy " << fmt(acc) << (result.stopped_early ? " (early stop)" : "") << "\n";
    if (acc > best_acc) {
      best_acc = acc;
      best_lr = lr;
      best = std::move(result);
    }
  }
  fcfg.learning_rate = best_lr;

  const RowMatrixXd concepts = best->tuned_concepts ? *best->tuned_concepts : RowMatrixXd(data.concepts.vectors().cast<double>());
  const FusionNet net = round_to_f32(best->net);

  const fs::path out = cfg.paths.out;
  ensure_out_dir(out);
  write_checkpoint(net, out / "fusion.fusnet");
  write_json(out / "fusion.fusnet.json", to_json(fcfg));
  if (best->tuned_concepts)
    write_store(store_from_double(data.concepts.names(), *best->tuned_concepts, "concept"), out / "tuned_concepts.embstor");

  ojson metrics;
  metrics["learning_rate"] = best_lr;
  metrics["use_knowledge"] = fcfg.use_knowledge;
  metrics["best_epoch"] = best->best_epoch;
  metrics["epochs_run"] = best->epochs.size();
  metrics["stopped_early"] = best->stopped_early;
  metrics["train"] = split_metrics(net, train_set, concepts, fcfg.use_knowledge);
  metrics["val"] = split_metrics(net, val_set, concepts, fcfg.use_knowledge);
  metrics["test"] = split_metrics(net, test_set, concepts, fcfg.use_knowledge);
  write_json(out / "fusion_metrics.json", metrics);

  std::ostringstream csv;
  csv << std::setprecision(17) << "epoch,train_loss,val_loss,val_accuracy,learning_rate\n";
  for (const auto& e : best->epochs)
    csv << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy << ',' << e.learning_rate << '\n';
  write_text(out / "fusion_epochs.csv", csv.str());

  const auto& test = metrics["test"];
  if (!test.is_null()) {
    log << "test (" << test["n"].get<std::size_t>() << "): precision=" << fmt(test["precision"].get<double>())
        << " recall=" << fmt(test["recall"].get<double>()) << " f1=" << fmt(test["f1"].get<double>())
        << " auc=" << (test["auc"].is_null() ? std::string("n/a") : fmt(test["auc"].get<double>()))
        << " accuracy=" << fmt(test["accuracy"].get<double>()) << "\n";
  }
}

// ------------------------------------------------------------------ predict

void cmd_predict(const PipelineConfig& cfg, std::ostream& log) {
  const auto& ckpt = require(cfg.paths.checkpoint, "checkpoint");
  const FusionNet net = read_checkpoint(ckpt);
  FusionConfig fcfg = cfg.fusion;
  const fs::path sidecar = ckpt.string() + ".json";
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    try {
      fcfg = fusion_config_from_json(json::parse(in), fcfg);
    } catch (const json::parse_error& e) {
      throw ValidationError(sidecar.string() + ": " + e.what());
    }
  }
  auto data = load_records(cfg);
  const RowMatrixXd concepts = data.concepts.vectors().cast<double>();

  std::ostringstream lines;
  std::vector<int> labels, preds;
  std::vector<double> scores;
  for (const auto& r : data.records) {
    const auto p = predict(net, r, concepts, fcfg.use_knowledge);
    ojson j;
    j["id"] = r.id;
    j["label"] = p.label;
    j["probabilities"] = {p.probabilities[0], p.probabilities[1]};
    lines << j.dump() << '\n';
    labels.push_back(r.label);
    preds.push_back(p.label);
    scores.push_back(p.probabilities[1]);
  }
  ensure_out_dir(cfg.paths.out);
  write_text(cfg.paths.out / "predictions.jsonl", lines.str());
  write_json(cfg.paths.out / "predict_metrics.json", split_metrics(net, data.records, concepts, fcfg.use_knowledge));
  const auto m = classify_metrics(labels, preds);
  log << "predicted " << data.records.size() << " records: f1=" << fmt(m.f1) << " accuracy=" << fmt(m.accuracy) << "\n";
}

// --------------------------------------------------------------- congruence

void cmd_congruence(const PipelineConfig& cfg, std::ostream& log) {
  const auto& pairs_path = require(cfg.paths.pairs, "pairs");
  const auto text = read_store(require(cfg.paths.text_store, "text_store"));
  const auto image = read_store(require(cfg.paths.image_store, "image_store"), text.dim());
  std::optional<EmbeddingStore> concepts;
  if (!cfg.paths.concept_store.empty()) concepts = read_store(cfg.paths.concept_store, text.dim());

  std::ifstream in(pairs_path);
  if (!in) throw IoError("cannot open " + pairs_path.string());
  std::vector<std::string> ids;
  std::vector<RowVectorXd> t_rows, i_rows;
  std::vector<RowMatrixXd> k_blocks;
  std::string line;
  std::size_t line_no = 0, with_knowledge = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      ids.push_back(j.at("id").get<std::string>());
      t_rows.push_back(text.row_as_double(text.row_of(j.at("text").get<std::string>())).transpose());
      i_rows.push_back(image.row_as_double(image.row_of(j.at("image").get<std::string>())).transpose());
      std::vector<std::string> names;
      if (j.contains("knowledge")) names = j["knowledge"].get<std::vector<std::string>>();
      if (!names.empty()) {
        if (!concepts) throw ValidationError("pair lists knowledge but no concept_store was given");
        RowMatrixXd block(static_cast<Eigen::Index>(names.size()), static_cast<Eigen::Index>(text.dim()));
        for (std::size_t r = 0; r < names.size(); ++r)
          block.row(static_cast<Eigen::Index>(r)) = concepts->row_as_double(concepts->row_of(names[r])).transpose();
        k_blocks.push_back(std::move(block));
        ++with_knowledge;
      } else {
        k_blocks.emplace_back();
      }
    } catch (const json::exception& e) {
      throw ValidationError(pairs_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (with_knowledge != 0 && with_knowledge != ids.size())
    throw ValidationError("either every pair or no pair must list knowledge");

  ModalityPairSet set;
  set.text.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(text.dim()));
  set.image.resize(set.text.rows(), set.text.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    set.text.row(static_cast<Eigen::Index>(i)) = t_rows[i];
    set.image.row(static_cast<Eigen::Index>(i)) = i_rows[i];
  }
  if (with_knowledge) set.knowledge = std::move(k_blocks);

  const auto rep = report(set);
  ensure_out_dir(cfg.paths.out);
  write_json(cfg.paths.out / "congruence.json", to_json(rep));
  write_text(cfg.paths.out / "congruence_cosines.csv", pair_cosines_csv(rep, ids));
  log << "pairs=" << rep.n << " centroid_distance=" << fmt(rep.without_knowledge.centroid_distance)
      << " mean_cosine=" << fmt(rep.without_knowledge.mean_pairwise_cosine);
  if (rep.with_knowledge) {
    log << " | with knowledge: centroid_distance=" << fmt(rep.with_knowledge->centroid_distance)
        << " mean_cosine=" << fmt(rep.with_knowledge->mean_pairwise_cosine);
  }
  if (rep.relative_similarity_change)
    log << " | relative similarity change " << fmt(100.0 * *rep.relative_similarity_change) << "%";
  log << "\n";
}

// -------------------------------------------------------------------- synth

void cmd_synth(const PipelineConfig& cfg, std::ostream& log) {
  SynthConfig scfg = cfg.synth;
  scfg.seed = stage_seed(cfg.seed, "synth");
  const auto data = synth_dataset(scfg);
  const fs::path out = cfg.paths.out;
  ensure_out_dir(out);
  write_record_entries(data.entries, out / "records.jsonl");
  write_store(data.multimodal, out / "multimodal.embstor");
  write_store(data.concepts, out / "concepts.embstor");
  const auto negatives = std::count_if(data.records.begin(), data.records.end(), [](const auto& r) { return r.label == 0; });
  log << "wrote " << data.records.size() << " records (" << negatives << " unsuccessful), " << data.concepts.size()
      << " concepts\n";

  if (cfg.synth_pairs > 0) {
    const std::size_t k = 5;
    const auto pairs = synth_midpoint_pairs(cfg.synth_pairs, cfg.synth_pair_dim, k, stage_seed(cfg.seed, "synth-pairs"));
    std::vector<std::string> ids, concept_names;
    RowMatrixXd concept_rows(static_cast<Eigen::Index>(cfg.synth_pairs * k), static_cast<Eigen::Index>(cfg.synth_pair_dim));
    std::ostringstream lines;
    for (std::size_t i = 0; i < cfg.synth_pairs; ++i) {
      std::ostringstream id;
      id << "pair_" << std::setw(6) << std::setfill('0') << i;
      ids.push_back(id.str());
      ojson j;
      j["id"] = ids.back();
      j["text"] = ids.back();
      j["image"] = ids.back();
      j["knowledge"] = ojson::array();
      for (std::size_t r = 0; r < k; ++r) {
        concept_names.push_back(ids.back() + "_k" + std::to_string(r));
        concept_rows.row(static_cast<Eigen::Index>(i * k + r)) = (*pairs.knowledge)[i].row(static_cast<Eigen::Index>(r));
        j["knowledge"].push_back(concept_names.back());
      }
      lines << j.dump() << '\n';
    }
    write_text(out / "pairs.jsonl", lines.str());
    write_store(store_from_double(ids, pairs.text, "text"), out / "text.embstor");
    write_store(store_from_double(ids, pairs.image, "image"), out / "image.embstor");
    write_store(store_from_double(concept_names, concept_rows, "concept"), out / "pair_concepts.embstor");
    log << "wrote " << cfg.synth_pairs << " congruence pairs\n";
  }
}

}  // namespace kimm
