#include "kimm/congruence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kimm/error.hpp"
#include "kimm/rng.hpp"

namespace kimm {

void ModalityPairSet::validate() const {
  if (text.rows() != image.rows())
    throw ValidationError("text and image sets differ in size (" + std::to_string(text.rows()) + " vs " +
                          std::to_string(image.rows()) + ")");
  if (text.cols() != image.cols()) throw DimMismatch("text and image vectors differ in dimension");
  if (knowledge) {
    if (knowledge->size() != size()) throw ValidationError("knowledge blocks do not match the number of pairs");
    for (const auto& block : *knowledge)
      if (block.rows() > 0 && block.cols() != text.cols()) throw DimMismatch("knowledge vectors differ in dimension");
  }
}

ModalityPairSet augment_with_knowledge(const ModalityPairSet& pairs) {
  pairs.validate();
  if (!pairs.knowledge) throw ValidationError("augment_with_knowledge: pairs carry no knowledge vectors");
  ModalityPairSet out;
  out.text.resize(pairs.text.rows(), pairs.text.cols());
  out.image.resize(pairs.image.rows(), pairs.image.cols());
  out.knowledge = pairs.knowledge;
  auto blend = [](const RowVectorXd& v, const RowVectorXd& k, std::size_t i) {
    RowVectorXd m = 0.5 * (v + k);
    const double n = m.norm();
    if (!(n > 0.0)) throw ValidationError("pair " + std::to_string(i) + ": vector and knowledge mean cancel");
    return RowVectorXd(m / n);
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& block = (*pairs.knowledge)[i];
    if (block.rows() == 0) throw ValidationError("pair " + std::to_string(i) + " has no knowledge vectors");
    const RowVectorXd mean = block.colwise().mean();
    if (!(mean.norm() > 0.0)) throw ValidationError("pair " + std::to_string(i) + ": knowledge mean has zero norm");
    const auto r = static_cast<Eigen::Index>(i);
    out.text.row(r) = blend(pairs.text.row(r), mean, i);
    out.image.row(r) = blend(pairs.image.row(r), mean, i);
  }
  return out;
}

CongruenceStats congruence_stats(const RowMatrixXd& text, const RowMatrixXd& image, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  CongruenceStats s;
  const auto n = text.rows();
  s.centroid_distance = (text.colwise().mean() - image.colwise().mean()).norm();
  s.pair_cosines.reserve(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double denom = text.row(i).norm() * image.row(i).norm();
    if (!(denom > 0.0)) throw ValidationError("pair " + std::to_string(i) + " has a zero-norm vector");
    const double c = std::clamp(text.row(i).dot(image.row(i)) / denom, -1.0, 1.0);
    s.pair_cosines.push_back(c);
    sum += c;
  }
  s.mean_pairwise_cosine = sum / static_cast<double>(n);

  auto& h = s.cosine_histogram;
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(-1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins));
  for (double c : s.pair_cosines) {
    auto b = static_cast<std::size_t>(std::floor((c + 1.0) / 2.0 * static_cast<double>(bins)));
    h.counts[std::min(b, bins - 1)]++;  // cos == 1 lands in the last bin
  }
  return s;
}

CongruenceReport report(const ModalityPairSet& pairs, std::size_t bins) {
  pairs.validate();
  if (pairs.size() < 2) throw ValidationError("congruence report needs at least 2 pairs");
  CongruenceReport r;
  r.n = pairs.size();
  r.without_knowledge = congruence_stats(pairs.text, pairs.image, bins);
  if (pairs.knowledge) {
    const auto augmented = augment_with_knowledge(pairs);
    r.with_knowledge = congruence_stats(augmented.text, augmented.image, bins);
    const double base = r.without_knowledge.mean_pairwise_cosine;
    if (base != 0.0)
      r.relative_similarity_change = (r.with_knowledge->mean_pairwise_cosine - base) / std::abs(base);
  }
  return r;
}

namespace {

nlohmann::ordered_json stats_json(const CongruenceStats& s) {
  nlohmann::ordered_json j;
  j["centroid_distance"] = s.centroid_distance;
  j["mean_pairwise_cosine"] = s.mean_pairwise_cosine;
  j["cosine_histogram"] = {{"edges", s.cosine_histogram.edges}, {"counts", s.cosine_histogram.counts}};
  return j;
}

}  // namespace

nlohmann::ordered_json to_json(const CongruenceReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["without_knowledge"] = stats_json(r.without_knowledge);
  j["with_knowledge"] = r.with_knowledge ? stats_json(*r.with_knowledge) : nlohmann::ordered_json(nullptr);
  j["relative_similarity_change"] =
      r.relative_similarity_change ? nlohmann::ordered_json(*r.relative_similarity_change) : nlohmann::ordered_json(nullptr);
  return j;
}

std::string pair_cosines_csv(const CongruenceReport& r, const std::vector<std::string>& ids) {
  if (!ids.empty() && ids.size() != r.n) throw ValidationError("pair id list does not match the report size");
  std::ostringstream os;
  os.precision(17);
  os << "pair_id,cos_without,cos_with\n";
  for (std::size_t i = 0; i < r.n; ++i) {
    os << (ids.empty() ? std::to_string(i) : ids[i]) << ',' << r.without_knowledge.pair_cosines[i] << ',';
    if (r.with_knowledge) os << r.with_knowledge->pair_cosines[i];
    os << '\n';
  }
  return os.str();
}

ModalityPairSet synth_midpoint_pairs(std::size_t n, std::size_t dim, std::size_t k, std::uint64_t seed) {
  if (n < 2 || dim < 2 || k == 0) throw ValidationError("synth_midpoint_pairs: need n >= 2, dim >= 2, k >= 1");
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  auto gaussian_row = [&](std::size_t d) {
    RowVectorXd v(static_cast<Eigen::Index>(d));
    for (auto& x : v) x = g(rng);
    return v;
  };
  auto unit = [](RowVectorXd v) { return RowVectorXd(v / v.norm()); };

  ModalityPairSet p;
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(dim);
  p.text.resize(rows, cols);
  p.image.resize(rows, cols);
  p.knowledge.emplace();
  // Text vectors lean towards one shared direction, image vectors towards
  // another, so the two modalities form separate clusters.
  const RowVectorXd text_axis = unit(gaussian_row(dim));
  const RowVectorXd image_axis = unit(gaussian_row(dim));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const RowVectorXd topic = unit(gaussian_row(dim));
    p.text.row(i) = unit(topic + text_axis + 0.8 * unit(gaussian_row(dim)));
    p.image.row(i) = unit(topic + image_axis + 0.8 * unit(gaussian_row(dim)));
    const RowVectorXd mid = 0.5 * (p.text.row(i) + p.image.row(i));
    RowMatrixXd block(static_cast<Eigen::Index>(k), cols);
    for (Eigen::Index j = 0; j < block.rows(); ++j) block.row(j) = 0.3 * gaussian_row(dim);
    const RowVectorXd noise_mean = block.colwise().mean();
    block.rowwise() -= noise_mean;
    block.rowwise() += mid;
    p.knowledge->push_back(std::move(block));
  }
  return p;
}

}  // namespace kimm
