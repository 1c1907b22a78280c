#include "kimm/embedding_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kimm/binio.hpp"
#include "kimm/error.hpp"
#include "kimm/rng.hpp"

namespace kimm {

namespace {
constexpr std::string_view kStoreMagic = "EMBSTOR1";
}

EmbeddingStore::EmbeddingStore(std::size_t dim, std::vector<std::string> names,
                               RowMatrixXf vectors, std::string kind_tag)
    : dim_(dim), names_(std::move(names)), vectors_(std::move(vectors)), kind_tag_(std::move(kind_tag)) {
  if (dim_ == 0) throw DimMismatch("embedding store dim must be positive");
  if (static_cast<std::size_t>(vectors_.rows()) != names_.size())
    throw ValidationError("embedding store: " + std::to_string(names_.size()) + " names but " +
                          std::to_string(vectors_.rows()) + " rows");
  if (!names_.empty() && static_cast<std::size_t>(vectors_.cols()) != dim_)
    throw DimMismatch("embedding store: rows have " + std::to_string(vectors_.cols()) +
                      " entries, dim is " + std::to_string(dim_));
  if (names_.empty()) vectors_.resize(0, static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second)
      throw DuplicateName("embedding store: duplicate name '" + names_[i] + "'");
    if (!vectors_.row(static_cast<Eigen::Index>(i)).allFinite())
      throw NonFiniteValue("embedding store: non-finite value in row " + std::to_string(i) +
                           " ('" + names_[i] + "')");
  }
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingStore::row_of(std::string_view name) const {
  auto r = find(name);
  if (!r) throw ValidationError("no vector named '" + std::string(name) + "' in " + kind_tag_ + " store");
  return *r;
}

VectorXd EmbeddingStore::row_as_double(std::size_t row) const {
  return vectors_.row(static_cast<Eigen::Index>(row)).cast<double>().transpose();
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.dim_ != b.dim_ || a.names_ != b.names_ || a.kind_tag_ != b.kind_tag_) return false;
  // Bit-level comparison so that -0.0 and 0.0 differ.
  return a.vectors_.size() == b.vectors_.size() &&
         std::memcmp(a.vectors_.data(), b.vectors_.data(), sizeof(float) * a.vectors_.size()) == 0;
}

std::string encode_store(const EmbeddingStore& store) {
  binio::Writer w;
  w.put_bytes(kStoreMagic);
  w.put(static_cast<std::uint32_t>(store.dim()));
  w.put(static_cast<std::uint64_t>(store.size()));
  w.put_short_string(store.kind_tag());
  for (const auto& name : store.names()) w.put_short_string(name);
  const float* data = store.vectors().data();
  for (Eigen::Index i = 0; i < store.vectors().size(); ++i) w.put_f32(data[i]);
  return w.take();
}

EmbeddingStore decode_store(std::string_view bytes, std::optional<std::size_t> expected_dim) {
  if (bytes.size() < kStoreMagic.size() || bytes.substr(0, kStoreMagic.size()) != kStoreMagic)
    throw MagicMismatch("not an EMBSTOR1 file (bad magic)");
  binio::Reader r(bytes.substr(kStoreMagic.size()));
  const auto dim = r.get<std::uint32_t>("dim");
  const auto n = r.get<std::uint64_t>("count");
  if (dim == 0) throw DimMismatch("EMBSTOR1 header declares dim 0");
  if (expected_dim && *expected_dim != dim)
    throw DimMismatch("EMBSTOR1 dim " + std::to_string(dim) + ", expected " + std::to_string(*expected_dim));
  auto kind = r.get_short_string("kind tag");

  // Every name costs at least 2 bytes; reject absurd counts before allocating.
  if (n > r.remaining() / 2) throw TruncatedPayload("EMBSTOR1 declares " + std::to_string(n) + " records but the file is too short");
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) names.push_back(r.get_short_string("name table"));

  const std::uint64_t count = n * dim;
  if (dim != 0 && count / dim != n) throw FormatError("EMBSTOR1 payload size overflows");
  if (count > r.remaining() / 4)
    throw TruncatedPayload("EMBSTOR1 payload truncated: need " + std::to_string(count * 4) +
                           " bytes, have " + std::to_string(r.remaining()));
  RowMatrixXf vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  float* data = vectors.data();
  for (std::uint64_t i = 0; i < count; ++i) data[i] = r.get_f32("payload");
  if (r.remaining() != 0)
    throw FormatError("EMBSTOR1 has " + std::to_string(r.remaining()) + " trailing bytes");
  return EmbeddingStore(dim, std::move(names), std::move(vectors), std::move(kind));
}

EmbeddingStore read_store(const std::filesystem::path& path, std::optional<std::size_t> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_store(buf.str(), expected_dim);
  } catch (const FormatError& e) {
    // Re-throw the same type with the path prepended.
    const std::string msg = path.string() + ": " + e.what();
    if (dynamic_cast<const MagicMismatch*>(&e)) throw MagicMismatch(msg);
    if (dynamic_cast<const DimMismatch*>(&e)) throw DimMismatch(msg);
    if (dynamic_cast<const TruncatedPayload*>(&e)) throw TruncatedPayload(msg);
    if (dynamic_cast<const DuplicateName*>(&e)) throw DuplicateName(msg);
    if (dynamic_cast<const NonFiniteValue*>(&e)) throw NonFiniteValue(msg);
    throw FormatError(msg);
  }
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_store(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<RecordEntry> read_record_entries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RecordEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      auto j = nlohmann::json::parse(line);
      RecordEntry e;
      e.id = j.at("id").get<std::string>();
      e.vec_name = j.contains("vec_name") ? j["vec_name"].get<std::string>() : e.id;
      e.concept_names = j.at("concept_names").get<std::vector<std::string>>();
      e.label = j.at("label").get<int>();
      if (e.label != 0 && e.label != 1) throw ValidationError(where + "label must be 0 or 1");
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(where + ex.what());
    }
  }
  return out;
}

void write_record_entries(const std::vector<RecordEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["vec_name"] = e.vec_name;
    j["concept_names"] = e.concept_names;
    j["label"] = e.label;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<std::uint32_t> resolve_concepts(const RecordEntry& e, const EmbeddingStore& concepts) {
  if (e.concept_names.empty())
    throw ValidationError("record '" + e.id + "' has no concepts");
  std::vector<std::uint32_t> ids;
  ids.reserve(e.concept_names.size());
  for (const auto& name : e.concept_names) {
    auto row = concepts.find(name);
    if (!row) throw ValidationError("record '" + e.id + "': unresolvable concept '" + name + "'");
    ids.push_back(static_cast<std::uint32_t>(*row));
  }
  return ids;
}

}  // namespace

std::vector<CampaignRecord> resolve_records(const std::vector<RecordEntry>& entries,
                                            const EmbeddingStore& multimodal,
                                            const EmbeddingStore& concepts) {
  std::vector<CampaignRecord> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    CampaignRecord r{e.id, multimodal.row_as_double(multimodal.row_of(e.vec_name)),
                     resolve_concepts(e, concepts), e.label};
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CampaignRecord> resolve_records(const std::vector<RecordEntry>& entries,
                                            const EmbeddingStore& text,
                                            const EmbeddingStore& image,
                                            const EmbeddingStore& concepts) {
  std::vector<CampaignRecord> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    VectorXd t = text.row_as_double(text.row_of(e.vec_name));
    VectorXd v = image.row_as_double(image.row_of(e.vec_name));
    VectorXd joint(t.size() + v.size());
    joint << t, v;
    out.push_back({e.id, std::move(joint), resolve_concepts(e, concepts), e.label});
  }
  return out;
}

void SynthConfig::validate() const {
  if (n < 10) throw ValidationError("synth: n must be at least 10");
  if (!(class_ratio > 0.0 && class_ratio < 1.0)) throw ValidationError("synth: class_ratio must lie in (0, 1)");
  if (!(concept_signal_strength >= 0.0 && concept_signal_strength <= 1.0))
    throw ValidationError("synth: concept_signal_strength must lie in [0, 1]");
  if (dim == 0 || knowledge_dim == 0) throw ValidationError("synth: dims must be positive");
  if (concepts_per_record == 0) throw ValidationError("synth: concepts_per_record must be positive");
  if (num_concepts < 3 * concepts_per_record)
    throw ValidationError("synth: num_concepts must be at least 3 x concepts_per_record");
  if (!(modality_separation >= 0.0)) throw ValidationError("synth: modality_separation must be non-negative");
}

namespace {

VectorXd random_unit(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  VectorXd v(static_cast<Eigen::Index>(dim));
  do {
    for (auto& x : v) x = g(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

std::string padded(const char* prefix, std::size_t i, int width) {
  std::ostringstream os;
  os << prefix << std::setw(width) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

SynthDataset synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  // Concepts: [0, pool) follow success, [pool, 2*pool) follow failure, the
  // rest carry no label information.
  const std::size_t pool = cfg.num_concepts / 3;
  const VectorXd concept_dir = random_unit(cfg.knowledge_dim, rng);
  const double concept_noise = 0.5 / std::sqrt(static_cast<double>(cfg.knowledge_dim));
  RowMatrixXf concept_vecs(static_cast<Eigen::Index>(cfg.num_concepts),
                           static_cast<Eigen::Index>(cfg.knowledge_dim));
  std::vector<std::string> concept_names;
  for (std::size_t c = 0; c < cfg.num_concepts; ++c) {
    const double sign = c < pool ? 1.0 : (c < 2 * pool ? -1.0 : 0.0);
    for (std::size_t d = 0; d < cfg.knowledge_dim; ++d)
      concept_vecs(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) =
          static_cast<float>(sign * concept_dir[static_cast<Eigen::Index>(d)] + concept_noise * noise(rng));
    concept_names.push_back(padded("concept_", c, 4));
  }

  const auto n_unsuccessful = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n) * cfg.class_ratio));
  std::vector<int> labels(cfg.n, 1);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_unsuccessful), 0);
  std::shuffle(labels.begin(), labels.end(), rng);

  const VectorXd mm_dir = random_unit(cfg.dim, rng);
  RowMatrixXf mm_vecs(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.dim));
  std::vector<std::string> ids;
  std::bernoulli_distribution from_pool(cfg.concept_signal_strength);
  std::uniform_int_distribution<std::size_t> any_concept(0, cfg.num_concepts - 1);
  std::uniform_int_distribution<std::size_t> in_pool(0, pool - 1);

  SynthDataset out;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double shift = (labels[i] == 1 ? 0.5 : -0.5) * cfg.modality_separation;
    for (std::size_t d = 0; d < cfg.dim; ++d)
      mm_vecs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
          static_cast<float>(shift * mm_dir[static_cast<Eigen::Index>(d)] + noise(rng));
    ids.push_back(padded("rec_", i, 6));

    std::vector<std::uint32_t> chosen;
    while (chosen.size() < cfg.concepts_per_record) {
      std::size_t c = from_pool(rng) ? (labels[i] == 1 ? 0 : pool) + in_pool(rng) : any_concept(rng);
      if (std::find(chosen.begin(), chosen.end(), c) == chosen.end())
        chosen.push_back(static_cast<std::uint32_t>(c));
    }
    RecordEntry entry{ids.back(), ids.back(), {}, labels[i]};
    for (auto c : chosen) entry.concept_names.push_back(concept_names[c]);
    out.entries.push_back(std::move(entry));
    out.records.push_back({ids.back(), VectorXd(), std::move(chosen), labels[i]});
  }

  out.multimodal = EmbeddingStore(cfg.dim, ids, std::move(mm_vecs), "multimodal");
  out.concepts = EmbeddingStore(cfg.knowledge_dim, std::move(concept_names), std::move(concept_vecs), "concept");
  for (std::size_t i = 0; i < cfg.n; ++i) out.records[i].multimodal_vec = out.multimodal.row_as_double(i);
  return out;
}

}  // namespace kimm
