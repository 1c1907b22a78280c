#include "kimm/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "kimm/error.hpp"

namespace kimm {

namespace {

void check_binary(std::span<const int> xs, const char* what) {
  for (int x : xs)
    if (x != 0 && x != 1) throw ValidationError(std::string(what) + " must be 0 or 1");
}

}  // namespace

EvalResult classify_metrics(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size())
    throw ValidationError("labels and predictions differ in length (" + std::to_string(labels.size()) + " vs " +
                          std::to_string(predictions.size()) + ")");
  if (labels.empty()) throw ValidationError("metrics need at least one example");
  check_binary(labels, "labels");
  check_binary(predictions, "predictions");

  EvalResult r;
  Confusion& c = r.confusion;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == 1) {
      (labels[i] == 1 ? c.tp : c.fp)++;
    } else {
      (labels[i] == 1 ? c.fn : c.tn)++;
    }
  }
  const bool vacuous = (c.tp + c.fp == 0) && (c.tp + c.fn == 0);
  auto ratio = [&](std::size_t num, std::size_t den) {
    if (den == 0) return vacuous ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return r;
}

double auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ValidationError("labels and scores differ in length");
  check_binary(labels, "labels");
  const auto n = labels.size();
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = n - pos;
  if (pos == 0 || neg == 0) throw ValidationError("AUC needs at least one positive and one negative label");

  // Sort by score; within a block of tied scores every positive beats the
  // negatives ranked before the block and ties with half of those inside it.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double wins = 0.0;
  std::size_t negatives_below = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t block_pos = 0, block_neg = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? block_pos : block_neg)++;
      ++j;
    }
    wins += static_cast<double>(block_pos) * (static_cast<double>(negatives_below) + 0.5 * static_cast<double>(block_neg));
    negatives_below += block_neg;
    i = j;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

EvalResult evaluate_binary(std::span<const int> labels, std::span<const int> predictions,
                           std::span<const double> scores) {
  EvalResult r = classify_metrics(labels, predictions);
  r.auc = auc(labels, scores);
  return r;
}

nlohmann::ordered_json to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["auc"] = r.auc;
  j["accuracy"] = r.accuracy;
  j["tp"] = r.confusion.tp;
  j["fp"] = r.confusion.fp;
  j["tn"] = r.confusion.tn;
  j["fn"] = r.confusion.fn;
  return j;
}

}  // namespace kimm
