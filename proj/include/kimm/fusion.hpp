#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kimm/embedding_io.hpp"
#include "kimm/linalg.hpp"
#include "kimm/rng.hpp"

namespace kimm {

struct FusionConfig {
  std::size_t d_model = 256;
  std::size_t num_heads = 4;
  std::size_t multimodal_dim = 768;
  std::size_t knowledge_dim = 256;
  double learning_rate = 5e-5;
  double warmup_fraction = 0.1;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 5;
  // false: skip attention and classify the projected multimodal vector alone.
  bool use_knowledge = true;
  // true: concept vectors are trained along with the network.
  bool finetune_knowledge = false;

  std::size_t head_dim() const { return d_model / num_heads; }
  void validate() const;
};

nlohmann::ordered_json to_json(const FusionConfig& cfg);
FusionConfig fusion_config_from_json(const nlohmann::json& j, FusionConfig base = {});

/// Parameters of the fusion layer and classifier. Every parameter is a
/// row-major matrix (biases are 1 x n) and is multiplied from the right:
/// y = x * W + b for row vector x.
struct FusionNet {
  std::size_t multimodal_dim = 0, knowledge_dim = 0, d_model = 0, num_heads = 0;

  RowMatrixXd proj_mm_w, proj_mm_b;  // [multimodal_dim x d_model], [1 x d_model]
  RowMatrixXd proj_kg_w, proj_kg_b;  // [knowledge_dim x d_model], [1 x d_model]
  std::vector<RowMatrixXd> w_q, w_k, w_v;  // per head [d_model x head_dim]
  RowMatrixXd w_o;                   // [d_model x d_model]
  RowMatrixXd cls_w, cls_b;          // [d_model x 2], [1 x 2]

  std::size_t head_dim() const { return d_model / num_heads; }

  static FusionNet zeros(const FusionConfig& cfg);
  /// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.
  static FusionNet init(const FusionConfig& cfg, Rng& rng);

  /// Visits every parameter matrix in declaration order (the checkpoint order):
  /// proj_mm_w, proj_mm_b, proj_kg_w, proj_kg_b, then per head w_q, w_k, w_v,
  /// then w_o, cls_w, cls_b.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t num_parameters() const;
  bool all_finite() const;

  friend bool operator==(const FusionNet& a, const FusionNet& b);

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f("proj_mm_w", self.proj_mm_w);
    f("proj_mm_b", self.proj_mm_b);
    f("proj_kg_w", self.proj_kg_w);
    f("proj_kg_b", self.proj_kg_b);
    for (std::size_t h = 0; h < self.w_q.size(); ++h) {
      f("w_q", self.w_q[h]);
      f("w_k", self.w_k[h]);
      f("w_v", self.w_v[h]);
    }
    f("w_o", self.w_o);
    f("cls_w", self.cls_w);
    f("cls_b", self.cls_b);
  }
};

/// softmax(Q K^T / sqrt(d_h)) V with a max-subtracted row softmax.
RowMatrixXd attention(const RowMatrixXd& q, const RowMatrixXd& k, const RowMatrixXd& v);
/// The softmax weights used by attention(), one row per query.
RowMatrixXd attention_weights(const RowMatrixXd& q, const RowMatrixXd& k);

/// Numerically stable softmax of a row vector.
RowVectorXd softmax(const RowVectorXd& logits);

/// Everything backward() needs from a forward pass.
struct ForwardTrace {
  bool use_knowledge = true;
  RowVectorXd multimodal;     // input row
  RowMatrixXd knowledge;      // input rows [k x knowledge_dim]
  RowVectorXd query;          // projected multimodal [1 x d_model]
  RowMatrixXd concepts;       // projected knowledge [k x d_model]
  std::vector<RowVectorXd> head_q;
  std::vector<RowMatrixXd> head_k, head_v;
  std::vector<RowVectorXd> head_attn;  // [1 x k] per head
  RowVectorXd heads_concat;   // [1 x d_model]
  RowVectorXd fused;          // W^O output + residual
  RowVectorXd logits;         // [1 x 2]
};

struct ForwardResult {
  RowVectorXd logits;
  ForwardTrace trace;
};

/// Projects both inputs, lets the multimodal row attend over the concept rows
/// with every head, concatenates, applies W^O, adds the projected multimodal
/// row back and classifies.
ForwardResult forward(const FusionNet& net, const RowVectorXd& multimodal,
                      const RowMatrixXd& knowledge, bool use_knowledge = true);

/// -log softmax(logits)[label]
double cross_entropy(const RowVectorXd& logits, int label);

struct FusionGradient {
  FusionNet params;            // same shapes as the net
  RowVectorXd d_multimodal;
  RowMatrixXd d_knowledge;
};

/// Exact gradient of cross_entropy(forward(...).logits, label).
FusionGradient backward(const FusionNet& net, const ForwardTrace& trace, int label);

/// Adds the parameter gradients into `acc` (same shapes as `net`). Input
/// gradients are written only where the pointers are non-null.
void backward_accumulate(const FusionNet& net, const ForwardTrace& trace, int label, FusionNet& acc,
                         RowVectorXd* d_multimodal, RowMatrixXd* d_knowledge);

struct Prediction {
  int label = 0;
  std::array<double, 2> probabilities{0.5, 0.5};
};

/// Gathers the concept rows of a record into a [k x knowledge_dim] matrix.
RowMatrixXd knowledge_matrix(const CampaignRecord& record, const RowMatrixXd& concepts);

Prediction predict(const FusionNet& net, const CampaignRecord& record, const RowMatrixXd& concepts,
                   bool use_knowledge = true);
Prediction predict(const FusionNet& net, const CampaignRecord& record, const EmbeddingStore& concepts,
                   bool use_knowledge = true);

struct FusionEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;  // rate used on the last step of the epoch
};

struct FusionTrainResult {
  FusionNet net;                     // parameters of the best validation epoch
  std::vector<FusionEpoch> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::optional<RowMatrixXd> tuned_concepts;  // set when finetune_knowledge
};

/// Mini-batch cross-entropy training with Adam and a warmup/linear-decay
/// schedule. Stops once validation accuracy has not improved for
/// `early_stop_patience` epochs after warmup; returns the best net seen.
FusionTrainResult train_classifier(std::span<const CampaignRecord> train,
                                   std::span<const CampaignRecord> validation,
                                   const EmbeddingStore& concepts, const FusionConfig& cfg);

/// FUSNET01 checkpoint:
///   "FUSNET01" | multimodal_dim u32 | knowledge_dim u32 | d_model u32 |
///   num_heads u32 | parameters in visit() order as float32, row-major, LE.
std::string encode_checkpoint(const FusionNet& net);
FusionNet decode_checkpoint(std::string_view bytes);
void write_checkpoint(const FusionNet& net, const std::filesystem::path& path);
FusionNet read_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to the nearest float32, which is what a checkpoint
/// round trip does.
FusionNet round_to_f32(FusionNet net);

}  // namespace kimm
