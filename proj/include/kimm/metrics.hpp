#pragma once

#include <cstddef>
#include <span>

#include <nlohmann/json.hpp>

namespace kimm {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Precision, recall and F1 for the positive class (label 1, "successful").
///
/// A ratio whose denominator is zero is 1.0 when it is vacuously satisfied
/// (nothing predicted positive and nothing actually positive) and 0.0
/// otherwise. F1 follows the same rule through P and R.
struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  double accuracy = 0.0;
  Confusion confusion;
};

EvalResult classify_metrics(std::span<const int> labels, std::span<const int> predictions);

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney). Needs both classes present.
double auc(std::span<const int> labels, std::span<const double> scores);

/// classify_metrics plus auc.
EvalResult evaluate_binary(std::span<const int> labels, std::span<const int> predictions,
                           std::span<const double> scores);

nlohmann::ordered_json to_json(const EvalResult& r);

}  // namespace kimm
