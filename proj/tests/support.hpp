#pragma once

// Shared fixtures and helpers for the unit, integration and acceptance tests.

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kimm/kg_store.hpp"
#include "kimm/linalg.hpp"

namespace kimm::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "kimm") {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Toy graph with translation structure realisable by unit-norm entities.
/// Four groups A, B, C, D of sizes 2, 5, 5, 8 (entities e0..e19 in order).
/// "east" links every A to every B and every C to every D; "north" links every
/// A to every C. Group centres form a rectangle: b = a + east, d = c + east,
/// c = a + north. 10 + 40 + 10 = 60 triples.
inline std::vector<std::array<std::string, 3>> toy_chain_rows() {
  const std::array<int, 4> sizes{2, 5, 5, 8};
  std::array<std::vector<std::string>, 4> group;
  int next_id = 0;
  for (int g = 0; g < 4; ++g)
    for (int k = 0; k < sizes[g]; ++k) group[g].push_back("e" + std::to_string(next_id++));
  std::vector<std::array<std::string, 3>> rows;
  auto block = [&](int from, int to, const std::string& rel) {
    for (const auto& h : group[from])
      for (const auto& t : group[to]) rows.push_back({h, rel, t});
  };
  block(0, 1, "east");
  block(2, 3, "east");
  block(0, 2, "north");
  return rows;
}

/// Splits the toy graph into (training rows, held-out rows) with a seeded
/// shuffle; `heldout` rows are removed from training.
inline std::pair<std::vector<std::array<std::string, 3>>, std::vector<std::array<std::string, 3>>>
toy_chain_split(std::size_t heldout, std::uint64_t seed) {
  auto rows = toy_chain_rows();
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::vector<std::array<std::string, 3>> held(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(heldout));
  std::vector<std::array<std::string, 3>> train(rows.begin() + static_cast<std::ptrdiff_t>(heldout), rows.end());
  return {train, held};
}

inline std::string rows_to_tsv(const std::vector<std::array<std::string, 3>>& rows) {
  std::string out;
  for (const auto& [h, r, t] : rows) out += h + "\t" + r + "\t" + t + "\n";
  return out;
}

inline RowMatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  RowMatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace kimm::testing
