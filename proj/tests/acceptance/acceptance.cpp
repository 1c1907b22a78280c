// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "kimm/congruence.hpp"
#include "kimm/embedding_io.hpp"
#include "kimm/error.hpp"
#include "kimm/metrics.hpp"
#include "kimm/pipeline.hpp"
#include "kimm/retrieval.hpp"
#include "support.hpp"

using namespace kimm;
using kimm::testing::random_matrix;
using kimm::testing::slurp;
using kimm::testing::spit;
using kimm::testing::TempDir;

namespace {

// Tolerances and budgets, one block per criterion.
constexpr int kC1Points = 100;
constexpr std::size_t kC1Dim = 8;
constexpr double kC1Eps = 1e-5;
constexpr double kC1RelTol = 1e-4;
constexpr double kC1Seconds = 10.0;

constexpr double kC2MinHits1 = 0.9;
constexpr double kC2Seconds = 30.0;

constexpr int kC3Cases = 1000;
constexpr double kC3RotatETol = 1e-12;

constexpr std::size_t kC4Concepts = 1000, kC4Dim = 32, kC4Queries = 100, kC4K = 10;
constexpr double kC4ScoreTol = 1e-6;
constexpr double kC4Seconds = 5.0;

constexpr int kC5Configs = 50;
constexpr double kC5Eps = 1e-4;
constexpr double kC5RelTol = 1e-3;
constexpr double kC5RowSumTol = 1e-6;
constexpr double kC5PermTol = 1e-6;

constexpr std::size_t kC6N = 2000;
constexpr std::uint64_t kC6Seed = 3;
constexpr std::size_t kC6MaxEpochs = 200;
constexpr double kC6MinAccuracy = 0.95;
constexpr double kC6MinF1Gain = 0.05;
constexpr double kC6Seconds = 180.0;

constexpr std::size_t kC7Pairs = 500, kC7Dim = 64, kC7K = 5;
constexpr double kC7Seconds = 5.0;

constexpr int kC8AucPoints = 200;

constexpr int kC9FuzzFiles = 50;

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------- 1

Outcome c1_kge_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int points = 0;
  for (KgeKind kind : {KgeKind::TransE, KgeKind::RotatE, KgeKind::DistMult}) {
    int done = 0;
    while (done < kC1Points) {
      const auto m = kimm::testing::random_model(kind, DistanceNorm::L2, kC1Dim, 6, 2, rng);
      std::uniform_int_distribution<std::uint32_t> e(0, 5), r(0, 1);
      const Triple pos{e(rng), r(rng), e(rng)}, neg{e(rng), r(rng), e(rng)};
      const double margin = kind == KgeKind::DistMult ? 50.0 : 5.0;
      if (loss_margin(m, pos, neg, margin) < 1e-3) continue;  // hinge kink, not differentiable
      worst = std::max(worst, kimm::testing::kge_max_fd_error(m, pos, neg, margin, kC1Eps));
      ++done;
      ++points;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kC1RelTol && secs < kC1Seconds,
          std::to_string(points) + " points, max rel err " + num(worst) + " (< " + num(kC1RelTol) + "), " +
              num(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome c2_kge_learning() {
  const auto t0 = Clock::now();
  const auto kg = KnowledgeGraph::from_labels(kimm::testing::toy_chain_rows());
  const auto held_rows = kimm::testing::toy_chain_split(10, 7).second;
  std::vector<Triple> heldout, training;
  for (const auto& [h, r, t] : held_rows) heldout.push_back(kg.resolve(h, r, t));
  for (const auto& t : kg.triples())
    if (std::find(heldout.begin(), heldout.end(), t) == heldout.end()) training.push_back(t);

  KgeTrainConfig cfg;
  cfg.kind = KgeKind::TransE;
  cfg.learning_rate = 0.001;
  cfg.dim = 32;
  cfg.margin = 1.0;
  cfg.epochs = 500;
  cfg.seed = 7;
  const auto result = train(kg.with_triples(training), cfg);
  const auto lp = link_predict_eval(result.model, kg, heldout);
  const double hits1 = lp.hits_at.at(1);
  const double secs = seconds_since(t0);
  return {kg.num_entities() == 20 && kg.num_relations() == 2 && kg.triples().size() == 60 && heldout.size() == 10 &&
              result.model.all_finite() && hits1 >= kC2MinHits1 && secs < kC2Seconds,
          "filtered Hits@1 " + num(hits1) + " (>= " + num(kC2MinHits1) + "), mean rank " + num(lp.mean_rank) + ", " +
              num(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 3

Outcome c3_score_identities() {
  std::mt19937_64 rng(303);
  // Dyadic values keep h + r exact in binary floating point.
  std::uniform_int_distribution<int> dy(-4096, 4096);
  auto dyadic = [&](Eigen::Index cols) {
    RowMatrixXd m(1, cols);
    for (auto& x : m.reshaped()) x = dy(rng) / 1024.0;
    return m;
  };
  int distmult_bad = 0, rotate_bad = 0, transe_bad = 0;
  double rotate_worst = 0.0;
  for (int i = 0; i < kC3Cases; ++i) {
    const auto dm = kimm::testing::random_model(KgeKind::DistMult, DistanceNorm::L2, 8, 2, 1, rng);
    if (score(dm, {0, 0, 1}) != score(dm, {1, 0, 0})) ++distmult_bad;

    auto rot = kimm::testing::random_model(KgeKind::RotatE, DistanceNorm::L2, 8, 2, 1, rng);
    rot.relation.setZero();
    const double gap = std::abs(score(rot, {0, 0, 1}) + (rot.entity.row(0) - rot.entity.row(1)).norm());
    rotate_worst = std::max(rotate_worst, gap);
    if (gap >= kC3RotatETol) ++rotate_bad;

    auto te = KgeModel::zeros(KgeKind::TransE, DistanceNorm::L2, 8, 3, 1);
    te.entity.row(0) = dyadic(8);
    te.relation.row(0) = dyadic(8);
    te.entity.row(1) = te.entity.row(0) + te.relation.row(0);
    // row 2 differs from h + r in one coordinate by one step
    te.entity.row(2) = te.entity.row(1);
    te.entity(2, static_cast<Eigen::Index>(rng() % 8)) += 1.0 / 1024.0;
    if (score(te, {0, 0, 1}) != 0.0) ++transe_bad;
    if (!(score(te, {0, 0, 2}) < 0.0)) ++transe_bad;
  }
  return {distmult_bad == 0 && rotate_bad == 0 && transe_bad == 0,
          std::to_string(kC3Cases) + " cases: DistMult asymmetries " + std::to_string(distmult_bad) +
              ", RotatE max gap " + num(rotate_worst) + ", TransE violations " + std::to_string(transe_bad)};
}

// ---------------------------------------------------------------- 4

Outcome c4_retrieval() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  std::normal_distribution<float> g;
  RowMatrixXf m(static_cast<Eigen::Index>(kC4Concepts), static_cast<Eigen::Index>(kC4Dim));
  for (auto& x : m.reshaped()) x = g(rng);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < kC4Concepts; ++i) names.push_back("concept_" + std::to_string(i));
  const EmbeddingStore store(kC4Dim, names, m, "concept");
  const ConceptIndex index(store);

  int mismatches = 0;
  for (std::size_t qi = 0; qi < kC4Queries; ++qi) {
    const VectorXd q = random_matrix(static_cast<Eigen::Index>(kC4Dim), 1, rng);
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < store.size(); ++i) {
      const VectorXd v = store.row_as_double(i);
      all.emplace_back(v.dot(q) / (v.norm() * q.norm()), i);
    }
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    const auto got = index.top_k(q, kC4K);
    bool same = got.size() == kC4K;
    for (std::size_t j = 0; same && j < kC4K; ++j) same = got[j].name == store.name(all[j].second);
    for (double alpha : {0.5, 3.0}) {
      const auto scaled = index.top_k(alpha * q, kC4K);
      for (std::size_t j = 0; same && j < kC4K; ++j)
        same = scaled[j].name == got[j].name && std::abs(scaled[j].score - got[j].score) < kC4ScoreTol;
    }
    if (!same) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kC4Seconds,
          std::to_string(kC4Queries) + " queries, " + std::to_string(mismatches) + " mismatching lists, " +
              num(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 5

Outcome c5_fusion_gradients() {
  std::mt19937_64 rng(505);
  const std::array<std::pair<std::size_t, std::size_t>, 5> shapes{{{4, 1}, {4, 2}, {6, 3}, {8, 2}, {8, 4}}};
  double worst_fd = 0.0, worst_row = 0.0, worst_perm = 0.0;
  for (int i = 0; i < kC5Configs; ++i) {
    const auto [d, heads] = shapes[static_cast<std::size_t>(i) % shapes.size()];
    const std::size_t mm = 2 + rng() % 5, kd = 2 + rng() % 4, k = 2 + rng() % 4;
    const auto cfg = kimm::testing::small_fusion_config(mm, kd, d, heads);
    const auto net = kimm::testing::random_net(cfg, rng, 0.3 + 0.2 * static_cast<double>(i % 4));
    const RowVectorXd x = random_matrix(1, static_cast<Eigen::Index>(mm), rng);
    const RowMatrixXd kg = random_matrix(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kd), rng);
    const int label = static_cast<int>(rng() % 2);
    worst_fd = std::max(worst_fd, kimm::testing::fusion_max_fd_error(net, x, kg, label, true, kC5Eps));

    const auto fwd = forward(net, x, kg);
    for (const auto& a : fwd.trace.head_attn) worst_row = std::max(worst_row, std::abs(a.sum() - 1.0));

    std::vector<Eigen::Index> perm(k);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const RowMatrixXd shuffled = kg(perm, Eigen::all);
    worst_perm = std::max(worst_perm, (forward(net, x, shuffled).logits - fwd.logits).cwiseAbs().maxCoeff());
  }
  return {worst_fd < kC5RelTol && worst_row < kC5RowSumTol && worst_perm < kC5PermTol,
          std::to_string(kC5Configs) + " configs: max FD rel err " + num(worst_fd) + ", max |row sum - 1| " +
              num(worst_row) + ", max permutation drift " + num(worst_perm)};
}

// ---------------------------------------------------------------- 6

Outcome c6_knowledge_benefit() {
  const auto t0 = Clock::now();
  TempDir dir("kimm-c6");
  std::ostringstream log;
  PipelineConfig cfg;
  cfg.seed = kC6Seed;
  cfg.synth.n = kC6N;
  cfg.synth.class_ratio = 0.6063;
  cfg.synth.concept_signal_strength = 1.0;
  cfg.fusion.epochs = kC6MaxEpochs;
  cfg.paths.out = dir / "data";
  cmd_synth(cfg, log);
  cfg.paths.records = dir / "data" / "records.jsonl";
  cfg.paths.multimodal_store = dir / "data" / "multimodal.embstor";
  cfg.paths.concept_store = dir / "data" / "concepts.embstor";

  cfg.paths.out = dir / "with";
  cmd_train_fusion(cfg, log);
  cfg.fusion.use_knowledge = false;
  cfg.paths.out = dir / "without";
  cmd_train_fusion(cfg, log);

  const auto with = nlohmann::json::parse(slurp(dir / "with" / "fusion_metrics.json"));
  const auto without = nlohmann::json::parse(slurp(dir / "without" / "fusion_metrics.json"));
  const double acc = with["test"]["accuracy"].get<double>();
  const double f1 = with["test"]["f1"].get<double>(), f1_ablate = without["test"]["f1"].get<double>();
  const std::size_t epochs = with["epochs_run"].get<std::size_t>();
  const double secs = seconds_since(t0);
  return {acc >= kC6MinAccuracy && f1 - f1_ablate >= kC6MinF1Gain && epochs <= kC6MaxEpochs && secs < kC6Seconds,
          "test accuracy " + num(acc) + " after " + std::to_string(epochs) + " epochs, F1 " + num(f1) +
              " vs no-knowledge " + num(f1_ablate) + " (gain " + num(f1 - f1_ablate) + "), " + num(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 7

Outcome c7_congruence_direction() {
  const auto t0 = Clock::now();
  int failures = 0;
  double min_change = 1e300;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = report(synth_midpoint_pairs(kC7Pairs, kC7Dim, kC7K, seed));
    const double change = r.relative_similarity_change.value_or(-1.0);
    min_change = std::min(min_change, change);
    if (!(change > 0.0) || !(r.with_knowledge->centroid_distance < r.without_knowledge.centroid_distance)) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < kC7Seconds,
          "10 seeds, " + std::to_string(failures) + " failures, smallest change " + num(100.0 * min_change) + "%, " +
              num(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 8

Outcome c8_metrics() {
  bool ok = true;
  std::vector<std::string> notes;
  {
    const std::vector<int> y{1, 1, 1, 1, 1, 0, 0, 0, 0, 0}, p{1, 1, 1, 0, 0, 1, 0, 0, 0, 0};
    const auto r = classify_metrics(y, p);
    const bool hand = r.confusion == Confusion{3, 1, 4, 2} && r.precision == 3.0 / 4.0 && r.recall == 3.0 / 5.0 &&
                      r.f1 == 2.0 * 0.75 * 0.6 / (0.75 + 0.6);
    const std::vector<int> zeros{0, 0, 0, 0};
    const auto v = classify_metrics(zeros, zeros);
    const bool vacuous = v.precision == 1.0 && v.recall == 1.0 && v.f1 == 1.0;
    const auto perfect = classify_metrics(y, y);
    const bool identity = perfect.precision == 1.0 && perfect.recall == 1.0 && perfect.f1 == 1.0;
    if (!(hand && vacuous && identity)) notes.push_back("hand P/R/F1 cases");
    ok = ok && hand && vacuous && identity;
  }
  {
    const bool hand = auc(std::vector<int>{1, 0, 1}, std::vector<double>{0.9, 0.8, 0.4}) == 0.5;
    if (!hand) notes.push_back("AUC hand case");
    ok = ok && hand;
  }
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int brute_bad = 0, transform_bad = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> y(kC8AucPoints);
    std::vector<double> s(kC8AucPoints), t(kC8AucPoints);
    for (int i = 0; i < kC8AucPoints; ++i) {
      y[static_cast<std::size_t>(i)] = u(rng) < 0.4 ? 1 : 0;
      // even trials draw coarse scores so ties occur
      const double v = trial % 2 ? u(rng) : std::floor(u(rng) * 10.0) / 10.0;
      s[static_cast<std::size_t>(i)] = v;
      t[static_cast<std::size_t>(i)] = std::exp(4.0 * v) - 2.0;
    }
    double wins = 0.0, pairs = 0.0;
    for (int i = 0; i < kC8AucPoints; ++i)
      for (int j = 0; j < kC8AucPoints; ++j)
        if (y[static_cast<std::size_t>(i)] == 1 && y[static_cast<std::size_t>(j)] == 0) {
          const double a = s[static_cast<std::size_t>(i)], b = s[static_cast<std::size_t>(j)];
          pairs += 1.0;
          wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
        }
    const double a = auc(y, s);
    if (a != wins / pairs) ++brute_bad;
    if (auc(y, t) != a) ++transform_bad;
  }
  ok = ok && brute_bad == 0 && transform_bad == 0;
  std::string detail = "hand cases, 10 x " + std::to_string(kC8AucPoints) + "-point brute-force AUC (" +
                       std::to_string(brute_bad) + " mismatches), monotone transform (" +
                       std::to_string(transform_bad) + " mismatches)";
  for (const auto& n : notes) detail += "; failed: " + n;
  return {ok, detail};
}

// ---------------------------------------------------------------- 9

Outcome c9_formats() {
  TempDir dir("kimm-c9");
  std::mt19937_64 rng(909);

  // EMBSTOR1
  std::normal_distribution<float> g;
  RowMatrixXf m(40, 12);
  for (auto& x : m.reshaped()) x = g(rng);
  std::vector<std::string> names;
  for (int i = 0; i < 40; ++i) names.push_back("vec_" + std::to_string(i) + (i % 3 ? "" : "_\xc3\xa9"));
  const EmbeddingStore store(12, names, m, "text");
  write_store(store, dir / "a.embstor");
  const auto back = read_store(dir / "a.embstor");
  const bool store_ok = back == store &&
                        std::memcmp(back.vectors().data(), m.data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0 &&
                        encode_store(back) == slurp(dir / "a.embstor");

  // FUSNET01
  const auto cfg = kimm::testing::small_fusion_config(7, 5, 8, 2);
  const FusionNet net = round_to_f32(kimm::testing::random_net(cfg, rng));
  write_checkpoint(net, dir / "a.fusnet");
  const auto net_back = read_checkpoint(dir / "a.fusnet");
  const bool net_ok = net_back == net && encode_checkpoint(net_back) == slurp(dir / "a.fusnet");

  // Corrupted corpus: half stores, half checkpoints, each with a defect the
  // reader must detect.
  const std::string good_store = slurp(dir / "a.embstor"), good_net = slurp(dir / "a.fusnet");
  int typed = 0, untyped = 0, accepted = 0;
  for (int i = 0; i < kC9FuzzFiles; ++i) {
    const bool is_store = i % 2 == 0;
    std::string b = is_store ? good_store : good_net;
    switch ((i / 2) % 5) {
      case 0:  // truncation
        b.resize(std::uniform_int_distribution<std::size_t>(0, b.size() - 1)(rng));
        break;
      case 1:  // wrong magic
        b[std::uniform_int_distribution<std::size_t>(0, 7)(rng)] ^= static_cast<char>(0x20);
        break;
      case 2:  // trailing bytes
        b.append(1 + rng() % 7, '\x01');
        break;
      case 3: {  // non-finite payload value
        const float bad = (i / 2) % 2 ? std::numeric_limits<float>::quiet_NaN() : std::numeric_limits<float>::infinity();
        const std::size_t at = b.size() - 4 * (1 + rng() % 10);
        std::memcpy(b.data() + at, &bad, 4);
        break;
      }
      case 4: {  // absurd header size
        const std::uint32_t huge = 0x7fffffffu;
        std::memcpy(b.data() + 8, &huge, 4);
        break;
      }
    }
    const auto path = dir / ("fuzz_" + std::to_string(i) + (is_store ? ".embstor" : ".fusnet"));
    spit(path, b);
    try {
      if (is_store) {
        (void)read_store(path);
      } else {
        (void)read_checkpoint(path);
      }
      ++accepted;
    } catch (const FormatError&) {
      ++typed;
    } catch (const std::exception&) {
      ++untyped;
    }
  }
  return {store_ok && net_ok && typed == kC9FuzzFiles,
          std::string("EMBSTOR1 round-trip ") + (store_ok ? "exact" : "MISMATCH") + ", FUSNET01 round-trip " +
              (net_ok ? "exact" : "MISMATCH") + ", fuzz " + std::to_string(typed) + "/" + std::to_string(kC9FuzzFiles) +
              " typed errors (" + std::to_string(untyped) + " untyped, " + std::to_string(accepted) + " accepted)"};
}

// ---------------------------------------------------------------- 10

#ifdef KIMM_CLI_PATH
Outcome c10_determinism() {
  TempDir dir("kimm-c10");
  spit(dir / "small.json", R"({
    "synth": {"n": 300, "dim": 32, "knowledge_dim": 16, "num_concepts": 40, "concepts_per_record": 5},
    "fusion": {"d_model": 16, "num_heads": 4, "learning_rate": 0.001, "epochs": 8},
    "kge": {"dim": 16, "epochs": 30}
  })");
  spit(dir / "toy.tsv", kimm::testing::rows_to_tsv(kimm::testing::toy_chain_rows()));
  const std::string cfg = " --config " + (dir / "small.json").string() + " --seed 10";
  auto sh = [&](const std::string& args) {
    const std::string cmd = std::string(KIMM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) throw std::runtime_error("command failed: " + args);
  };
  for (const char* tag : {"a", "b"}) {
    const auto out = dir / tag;
    const auto d = out / "data";
    const std::string rec = " --records " + (d / "records.jsonl").string() + " --mm-store " +
                            (d / "multimodal.embstor").string() + " --concept-store " + (d / "concepts.embstor").string();
    sh("synth" + cfg + " --pairs 40 --out " + d.string());
    sh("train-kge" + cfg + " --triples " + (dir / "toy.tsv").string() + " --out " + (out / "kge").string());
    sh("retrieve" + cfg + " --concept-store " + (d / "pair_concepts.embstor").string() + " --queries " +
       (d / "text.embstor").string() + " --captions " + (d / "image.embstor").string() + " --out " + (out / "ret").string());
    sh("train-fusion" + cfg + rec + " --out " + (out / "fusion").string());
    sh("predict" + cfg + rec + " --checkpoint " + (out / "fusion" / "fusion.fusnet").string() + " --out " +
       (out / "pred").string());
    sh("congruence" + cfg + " --pairs " + (d / "pairs.jsonl").string() + " --text-store " + (d / "text.embstor").string() +
       " --image-store " + (d / "image.embstor").string() + " --concept-store " +
       (d / "pair_concepts.embstor").string() + " --out " + (out / "cong").string());
  }
  std::size_t files = 0, different = 0;
  std::string first_diff;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir / "a");
    ++files;
    if (slurp(e.path()) != slurp(dir / "b" / rel)) {
      ++different;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  return {files >= 20 && different == 0,
          "6 commands x 2 runs, " + std::to_string(files) + " output files, " + std::to_string(different) + " differ" +
              (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}
#else
Outcome c10_determinism() { return {false, "CLI not built"}; }
#endif

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"KGE gradient correctness", c1_kge_gradients},
      {"KGE learning on the toy graph", c2_kge_learning},
      {"score-function identities", c3_score_identities},
      {"retrieval exactness", c4_retrieval},
      {"attention/fusion gradients", c5_fusion_gradients},
      {"end-to-end knowledge benefit", c6_knowledge_benefit},
      {"congruence direction", c7_congruence_direction},
      {"metrics oracles", c8_metrics},
      {"format round-trips and fuzz", c9_formats},
      {"CLI determinism", c10_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << (i + 1) << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
