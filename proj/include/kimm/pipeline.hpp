#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "kimm/embedding_io.hpp"
#include "kimm/fusion.hpp"
#include "kimm/kg_store.hpp"
#include "kimm/kge.hpp"

namespace kimm {

struct PipelinePaths {
  std::filesystem::path triples;
  std::string triples_format = "tsv";
  std::filesystem::path heldout;           // optional TSV of held-out triples
  std::filesystem::path records;           // JSON-lines campaign records
  std::filesystem::path multimodal_store;
  std::filesystem::path text_store;        // with image_store: concatenated multimodal input
  std::filesystem::path image_store;
  std::filesystem::path concept_store;
  std::filesystem::path queries;           // retrieval query store
  std::filesystem::path captions;          // optional caption store paired with queries by name
  std::filesystem::path pairs;             // congruence pair file
  std::filesystem::path checkpoint;        // FUSNET01 file for predict
  std::filesystem::path out = "out";
};

struct SplitSizes {
  std::size_t train = 45810;
  std::size_t val = 15000;
  std::size_t test = 15000;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  PipelinePaths paths;
  KgeTrainConfig kge;
  double kge_heldout_fraction = 0.1;  // used when no heldout file is given
  FusionConfig fusion;
  bool lr_sweep = false;
  std::size_t retrieval_k = 10;
  SplitSizes splits;
  SynthConfig synth;
  std::size_t synth_pairs = 0;        // > 0: synth also writes a congruence fixture
  std::size_t synth_pair_dim = 64;
};

/// Overlays the keys present in `j` onto `base`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Proportional split sizes for `n` records: the configured sizes when they
/// fit, otherwise val and test scaled by n / total and train taking the rest.
SplitSizes scaled_splits(const SplitSizes& configured, std::size_t n);

// Commands. Each reads its inputs from the config, writes its files under
// paths.out and prints a short summary to `log`. Errors are thrown
// (IoError, ValidationError, ...).
void cmd_train_kge(const PipelineConfig& cfg, std::ostream& log);
void cmd_retrieve(const PipelineConfig& cfg, std::ostream& log);
void cmd_train_fusion(const PipelineConfig& cfg, std::ostream& log);
void cmd_predict(const PipelineConfig& cfg, std::ostream& log);
void cmd_congruence(const PipelineConfig& cfg, std::ostream& log);
void cmd_synth(const PipelineConfig& cfg, std::ostream& log);

/// Exit status contract: 0 success, 1 validation/contract failure, 2 I/O.
int exit_code_for(const std::exception& e);

}  // namespace kimm
