#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <regex>

#include "kimm/embedding_io.hpp"
#include "support.hpp"

using namespace kimm;
using kimm::testing::slurp;
using kimm::testing::spit;
using kimm::testing::TempDir;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(KIMM_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

double field(const std::string& text, const std::string& key) {
  std::smatch m;
  const std::regex re(key + "=([0-9.]+)");
  REQUIRE(std::regex_search(text, m, re));
  return std::stod(m[1]);
}

const char* kSmallConfig = R"({
  "synth": {"n": 600, "dim": 64, "knowledge_dim": 32, "num_concepts": 60, "concepts_per_record": 5},
  "fusion": {"d_model": 32, "num_heads": 4, "learning_rate": 0.001, "epochs": 40}
})";

std::string record_flags(const TempDir& dir) {
  const auto d = dir / "data";
  return " --records " + (d / "records.jsonl").string() + " --mm-store " + (d / "multimodal.embstor").string() +
         " --concept-store " + (d / "concepts.embstor").string();
}

}  // namespace

TEST_CASE("train-kge on the toy graph") {
  TempDir dir;
  spit(dir / "toy.tsv", kimm::testing::rows_to_tsv(kimm::testing::toy_chain_rows()));
  spit(dir / "held.tsv", kimm::testing::rows_to_tsv(kimm::testing::toy_chain_split(10, 7).second));
  const auto r = run(dir, "train-kge --triples " + (dir / "toy.tsv").string() + " --heldout " +
                              (dir / "held.tsv").string() + " --seed 7 --dim 32 --epochs 500 --lr 0.001 --out " +
                              (dir / "kge").string());
  REQUIRE(r.code == 0);
  CHECK(field(r.out, "hits@1") >= 0.9);
  const auto metrics = nlohmann::json::parse(slurp(dir / "kge" / "kge_metrics.json"));
  CHECK(metrics["heldout_triples"] == 10);
  CHECK(metrics["train_triples"] == 50);
  const auto ent = read_store(dir / "kge" / "entities.embstor");
  CHECK(ent.size() == 20);
  CHECK(ent.dim() == 32);
  CHECK(slurp(dir / "kge" / "kge_loss.csv").rfind("epoch,loss,sgd_loss\n", 0) == 0);
}

TEST_CASE("train-kge records kind and dim") {
  TempDir dir;
  spit(dir / "toy.tsv", kimm::testing::rows_to_tsv(kimm::testing::toy_chain_rows()));
  const auto r = run(dir, "train-kge --triples " + (dir / "toy.tsv").string() +
                              " --kind distmult --dim 8 --epochs 5 --out " + (dir / "o").string());
  REQUIRE(r.code == 0);
  const auto meta = slurp(dir / "o" / "kge_meta.txt");
  CHECK(meta.find("kind=distmult\n") != std::string::npos);
  CHECK(meta.find("dim=8\n") != std::string::npos);
  CHECK(read_store(dir / "o" / "relations.embstor").dim() == 8);
  // default hold-out of 10% of 60 triples
  CHECK(nlohmann::json::parse(slurp(dir / "o" / "kge_metrics.json"))["heldout_triples"] == 6);
}

TEST_CASE("exit codes") {
  TempDir dir;
  auto r = run(dir, "train-kge --triples /nonexistent/kimm/x.tsv --out " + (dir / "o").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/kimm/x.tsv") != std::string::npos);

  spit(dir / "toy.tsv", kimm::testing::rows_to_tsv(kimm::testing::toy_chain_rows()));
  r = run(dir, "train-kge --triples " + (dir / "toy.tsv").string() + " --kind complex");
  CHECK(r.code == 1);
  r = run(dir, "train-kge --no-such-flag");
  CHECK(r.code == 1);
  r = run(dir, "");
  CHECK(r.code == 1);
  r = run(dir, "train-kge");  // no triples given
  CHECK(r.code == 1);
}

TEST_CASE("retrieve") {
  TempDir dir;
  RowMatrixXf m(30, 6);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g;
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  std::vector<std::string> names;
  for (int i = 0; i < 30; ++i) names.push_back("c" + std::to_string(i));
  write_store(EmbeddingStore(6, names, m, "concept"), dir / "concepts.embstor");
  write_store(EmbeddingStore(6, {"c3", "c17"}, RowMatrixXf(m({3, 17}, Eigen::all)), "text"), dir / "q.embstor");

  const auto r = run(dir, "retrieve --concept-store " + (dir / "concepts.embstor").string() + " --queries " +
                              (dir / "q.embstor").string() + " --out " + (dir / "o").string());
  REQUIRE(r.code == 0);
  std::istringstream lines(slurp(dir / "o" / "retrieval.jsonl"));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["concepts"].size() == 10);
    CHECK(j["concepts"][0]["name"] == j["id"]);
    CHECK(j["concepts"][0]["score"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    ++count;
  }
  CHECK(count == 2);

  // dimension mismatch between stores is a validation failure
  write_store(EmbeddingStore(4, {"q"}, RowMatrixXf::Ones(1, 4), "text"), dir / "q4.embstor");
  CHECK(run(dir, "retrieve --concept-store " + (dir / "concepts.embstor").string() + " --queries " +
                     (dir / "q4.embstor").string() + " --out " + (dir / "o").string())
            .code == 1);
}

TEST_CASE("synth, train-fusion, predict") {
  TempDir dir;
  spit(dir / "small.json", kSmallConfig);
  const std::string cfg = " --config " + (dir / "small.json").string() + " --seed 3";
  REQUIRE(run(dir, "synth" + cfg + " --out " + (dir / "data").string()).code == 0);

  auto r = run(dir, "train-fusion" + cfg + record_flags(dir) + " --out " + (dir / "with").string());
  REQUIRE(r.code == 0);
  const auto with = nlohmann::json::parse(slurp(dir / "with" / "fusion_metrics.json"));
  CHECK(with["test"]["accuracy"].get<double>() >= 0.95);
  CHECK(with["test"]["n"].get<std::size_t>() + with["val"]["n"].get<std::size_t>() +
            with["train"]["n"].get<std::size_t>() ==
        600);

  r = run(dir, "train-fusion" + cfg + record_flags(dir) + " --no-knowledge --out " + (dir / "without").string());
  REQUIRE(r.code == 0);
  const auto without = nlohmann::json::parse(slurp(dir / "without" / "fusion_metrics.json"));
  CHECK(with["test"]["f1"].get<double>() - without["test"]["f1"].get<double>() >= 0.05);
  CHECK(without["use_knowledge"] == false);

  // predict with the saved checkpoint reproduces the test-split metrics on all records
  r = run(dir, "predict" + cfg + record_flags(dir) + " --checkpoint " + (dir / "with" / "fusion.fusnet").string() +
                   " --out " + (dir / "pred").string());
  REQUIRE(r.code == 0);
  const auto pred = nlohmann::json::parse(slurp(dir / "pred" / "predict_metrics.json"));
  CHECK(pred["n"] == 600);
  CHECK(pred["accuracy"].get<double>() >= 0.95);

  // the no-knowledge sidecar makes predict skip knowledge too
  r = run(dir, "predict" + cfg + record_flags(dir) + " --checkpoint " + (dir / "without" / "fusion.fusnet").string() +
                   " --out " + (dir / "pred0").string());
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "without" / "fusion.fusnet.json"))["use_knowledge"] == false);

  // a corrupted checkpoint is rejected
  auto bytes = slurp(dir / "with" / "fusion.fusnet");
  bytes[0] = 'X';
  spit(dir / "bad.fusnet", bytes);
  CHECK(run(dir, "predict" + cfg + record_flags(dir) + " --checkpoint " + (dir / "bad.fusnet").string() + " --out " +
                     (dir / "p").string())
            .code == 1);
}

TEST_CASE("congruence") {
  TempDir dir;
  RowMatrixXf m(3, 4);
  m << 1, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1, 1;
  write_store(EmbeddingStore(4, {"a", "b", "c"}, m, "text"), dir / "t.embstor");
  write_store(EmbeddingStore(4, {"a", "b", "c"}, m, "image"), dir / "i.embstor");
  spit(dir / "pairs.jsonl",
       "{\"id\":\"p0\",\"text\":\"a\",\"image\":\"a\"}\n{\"id\":\"p1\",\"text\":\"b\",\"image\":\"b\"}\n"
       "{\"id\":\"p2\",\"text\":\"c\",\"image\":\"c\"}\n");
  auto r = run(dir, "congruence --pairs " + (dir / "pairs.jsonl").string() + " --text-store " +
                        (dir / "t.embstor").string() + " --image-store " + (dir / "i.embstor").string() + " --out " +
                        (dir / "o").string());
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(slurp(dir / "o" / "congruence.json"));
  CHECK(j["without_knowledge"]["centroid_distance"].get<double>() == 0.0);
  CHECK(j["without_knowledge"]["mean_pairwise_cosine"].get<double>() == doctest::Approx(1.0));
  CHECK(j["with_knowledge"].is_null());
  CHECK(slurp(dir / "o" / "congruence_cosines.csv").rfind("pair_id,cos_without,cos_with\np0,1,\n", 0) == 0);

  // midpoint fixture from synth
  REQUIRE(run(dir, "synth --n 10 --dim 8 --pairs 300 --seed 2 --out " + (dir / "s").string()).code == 0);
  const auto s = dir / "s";
  const std::string args = "congruence --pairs " + (s / "pairs.jsonl").string() + " --text-store " +
                           (s / "text.embstor").string() + " --image-store " + (s / "image.embstor").string() +
                           " --concept-store " + (s / "pair_concepts.embstor").string();
  r = run(dir, args + " --out " + (dir / "m").string());
  REQUIRE(r.code == 0);
  j = nlohmann::json::parse(slurp(dir / "m" / "congruence.json"));
  CHECK(j["relative_similarity_change"].get<double>() > 0.0);
  CHECK(j["n"] == 300);

  // malformed store
  auto bytes = slurp(s / "text.embstor");
  spit(dir / "trunc.embstor", bytes.substr(0, bytes.size() - 3));
  r = run(dir, "congruence --pairs " + (s / "pairs.jsonl").string() + " --text-store " +
                   (dir / "trunc.embstor").string() + " --image-store " + (s / "image.embstor").string() + " --out " +
                   (dir / "x").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("trunc.embstor") != std::string::npos);
}

TEST_CASE("outputs are byte-identical across runs") {
  TempDir dir;
  spit(dir / "small.json", kSmallConfig);
  spit(dir / "toy.tsv", kimm::testing::rows_to_tsv(kimm::testing::toy_chain_rows()));
  const std::string cfg = " --config " + (dir / "small.json").string() + " --seed 9";
  for (const char* tag : {"a", "b"}) {
    const auto out = dir / tag;
    REQUIRE(run(dir, "synth" + cfg + " --pairs 20 --out " + (out / "data").string()).code == 0);
    REQUIRE(run(dir, "train-kge --triples " + (dir / "toy.tsv").string() + " --epochs 20 --seed 9 --out " +
                         (out / "kge").string())
                .code == 0);
    const auto d = out / "data";
    const std::string rec = " --records " + (d / "records.jsonl").string() + " --mm-store " +
                            (d / "multimodal.embstor").string() + " --concept-store " + (d / "concepts.embstor").string();
    REQUIRE(run(dir, "train-fusion" + cfg + rec + " --epochs 5 --out " + (out / "fusion").string()).code == 0);
    REQUIRE(run(dir, "predict" + cfg + rec + " --checkpoint " + (out / "fusion" / "fusion.fusnet").string() +
                         " --out " + (out / "pred").string())
                .code == 0);
    REQUIRE(run(dir, "retrieve --concept-store " + (d / "concepts.embstor").string() + " --queries " +
                         (out / "kge" / "entities.embstor").string() + " --out " + (out / "ret").string())
                .code == 1);  // entity dim 256 against concept dim 32
    REQUIRE(run(dir, "retrieve --concept-store " + (d / "pair_concepts.embstor").string() + " --queries " +
                         (d / "text.embstor").string() + " --out " + (out / "ret").string())
                .code == 0);
    REQUIRE(run(dir, "congruence --pairs " + (d / "pairs.jsonl").string() + " --text-store " +
                         (d / "text.embstor").string() + " --image-store " + (d / "image.embstor").string() +
                         " --concept-store " + (d / "pair_concepts.embstor").string() + " --out " +
                         (out / "cong").string())
                .code == 0);
  }
  std::size_t compared = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir / "a");
    CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "b" / rel), rel.string());
    ++compared;
  }
  CHECK(compared >= 18);
}
