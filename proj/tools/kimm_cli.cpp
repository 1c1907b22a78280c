// kimm: command-line driver for the knowledge-infused multimodal pipeline.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kimm/error.hpp"
#include "kimm/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kind;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> k;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> n;
  std::optional<std::size_t> pairs_n;
  std::optional<double> signal;
  bool lr_sweep = false;
  bool no_knowledge = false;
  std::optional<std::string> out;
  std::optional<std::string> triples, format, heldout, records, mm_store, text_store, image_store, concept_store,
      queries, captions, pairs, checkpoint;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file (flags override it)");
  cmd->add_option("--seed", f.seed, "top-level seed");
  cmd->add_option("--out", f.out, "output directory");
}

kimm::PipelineConfig resolve(const Flags& f, const std::string& command) {
  kimm::PipelineConfig c = f.config.empty() ? kimm::PipelineConfig{} : kimm::load_pipeline_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.paths.out = *f.out;
  if (f.kind) c.kge.kind = kimm::parse_kge_kind(*f.kind);
  if (f.dim) (command == "synth" ? c.synth.dim : c.kge.dim) = *f.dim;
  if (f.k) c.retrieval_k = *f.k;
  if (f.epochs) (command == "train-kge" ? c.kge.epochs : c.fusion.epochs) = *f.epochs;
  if (f.lr) (command == "train-kge" ? c.kge.learning_rate : c.fusion.learning_rate) = *f.lr;
  if (f.n) c.synth.n = *f.n;
  if (f.pairs_n) c.synth_pairs = *f.pairs_n;
  if (f.signal) c.synth.concept_signal_strength = *f.signal;
  if (f.lr_sweep) c.lr_sweep = true;
  if (f.no_knowledge) c.fusion.use_knowledge = false;
  if (f.triples) c.paths.triples = *f.triples;
  if (f.format) c.paths.triples_format = *f.format;
  if (f.heldout) c.paths.heldout = *f.heldout;
  if (f.records) c.paths.records = *f.records;
  if (f.mm_store) c.paths.multimodal_store = *f.mm_store;
  if (f.text_store) c.paths.text_store = *f.text_store;
  if (f.image_store) c.paths.image_store = *f.image_store;
  if (f.concept_store) c.paths.concept_store = *f.concept_store;
  if (f.queries) c.paths.queries = *f.queries;
  if (f.captions) c.paths.captions = *f.captions;
  if (f.pairs) c.paths.pairs = *f.pairs;
  if (f.checkpoint) c.paths.checkpoint = *f.checkpoint;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-infused multimodal campaign pipeline"};
  app.require_subcommand(1);
  Flags f;

  auto* kge = app.add_subcommand("train-kge", "train knowledge-graph embeddings and report link prediction");
  add_common(kge, f);
  kge->add_option("--triples", f.triples, "triple file");
  kge->add_option("--format", f.format, "tsv | conceptnet-csv");
  kge->add_option("--heldout", f.heldout, "TSV of held-out triples for evaluation");
  kge->add_option("--kind", f.kind, "transe | rotate | distmult");
  kge->add_option("--dim", f.dim, "embedding dimension");
  kge->add_option("--epochs", f.epochs, "training epochs");
  kge->add_option("--lr", f.lr, "SGD learning rate");

  auto* retrieve = app.add_subcommand("retrieve", "top-k concept retrieval for each query vector");
  add_common(retrieve, f);
  retrieve->add_option("--concept-store", f.concept_store, "EMBSTOR1 concept vectors");
  retrieve->add_option("--queries", f.queries, "EMBSTOR1 query vectors");
  retrieve->add_option("--captions", f.captions, "EMBSTOR1 caption vectors, matched to queries by name");
  retrieve->add_option("--k", f.k, "results per query (default 10)");

  auto add_record_inputs = [&](CLI::App* cmd) {
    cmd->add_option("--records", f.records, "JSON-lines campaign records");
    cmd->add_option("--mm-store", f.mm_store, "EMBSTOR1 multimodal vectors");
    cmd->add_option("--text-store", f.text_store, "EMBSTOR1 text vectors (with --image-store)");
    cmd->add_option("--image-store", f.image_store, "EMBSTOR1 image vectors (with --text-store)");
    cmd->add_option("--concept-store", f.concept_store, "EMBSTOR1 concept (KGE) vectors");
  };

  auto* fusion = app.add_subcommand("train-fusion", "train the knowledge fusion classifier");
  add_common(fusion, f);
  add_record_inputs(fusion);
  fusion->add_option("--epochs", f.epochs, "maximum epochs");
  fusion->add_option("--lr", f.lr, "peak learning rate");
  fusion->add_flag("--lr-sweep", f.lr_sweep, "try learning rates 1e-4 and 5e-5, keep the better");
  fusion->add_flag("--no-knowledge", f.no_knowledge, "ablation: classify the multimodal vector alone");

  auto* predict = app.add_subcommand("predict", "score records with a trained checkpoint");
  add_common(predict, f);
  add_record_inputs(predict);
  predict->add_option("--checkpoint", f.checkpoint, "FUSNET01 checkpoint");

  auto* congruence = app.add_subcommand("congruence", "text/image congruence with and without knowledge");
  add_common(congruence, f);
  congruence->add_option("--pairs", f.pairs, "JSON-lines pair file");
  congruence->add_option("--text-store", f.text_store, "EMBSTOR1 text vectors");
  congruence->add_option("--image-store", f.image_store, "EMBSTOR1 image-caption vectors");
  congruence->add_option("--concept-store", f.concept_store, "EMBSTOR1 knowledge vectors");

  auto* synth = app.add_subcommand("synth", "generate a synthetic campaign dataset");
  add_common(synth, f);
  synth->add_option("--n", f.n, "number of records");
  synth->add_option("--dim", f.dim, "multimodal dimension");
  synth->add_option("--signal", f.signal, "concept signal strength in [0, 1]");
  synth->add_option("--pairs", f.pairs_n, "also write this many congruence pairs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  try {
    const auto cfg = resolve(f, command);
    if (command == "train-kge") kimm::cmd_train_kge(cfg, std::cout);
    else if (command == "retrieve") kimm::cmd_retrieve(cfg, std::cout);
    else if (command == "train-fusion") kimm::cmd_train_fusion(cfg, std::cout);
    else if (command == "predict") kimm::cmd_predict(cfg, std::cout);
    else if (command == "congruence") kimm::cmd_congruence(cfg, std::cout);
    else if (command == "synth") kimm::cmd_synth(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "kimm " << command << ": " << e.what() << "\n";
    return kimm::exit_code_for(e);
  }
  return 0;
}
