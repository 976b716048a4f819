#include "shiftzoo/feature_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shiftzoo/error.hpp"
#include "shiftzoo/rng.hpp"

namespace shiftzoo {
namespace {

constexpr std::array<char, 4> kFeatureMagic{'F', 'Z', 'F', '1'};
constexpr std::array<char, 4> kLabelMagic{'F', 'Z', 'L', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void check_magic(const std::string& bytes, const std::array<char, 4>& magic,
                 const std::filesystem::path& path) {
  if (bytes.size() < 4 || !std::equal(magic.begin(), magic.end(), bytes.begin()))
    throw ValidationError("malformed header: bad magic in " + path.string());
}

Eigen::MatrixXd select_rows(const FeatureMatrix& m, const std::vector<bool>& mask, bool want) {
  const auto count = static_cast<Eigen::Index>(std::count(mask.begin(), mask.end(), want));
  Eigen::MatrixXd out(count, m.cols());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] == want) out.row(r++) = m.row(static_cast<Eigen::Index>(i)).cast<double>();
  return out;
}

std::vector<std::uint32_t> select_labels(const std::vector<std::uint32_t>& labels,
                                         const std::vector<bool>& mask, bool want) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] == want) out.push_back(labels[i]);
  return out;
}

}  // namespace

std::size_t FeatureSet::validation_count() const {
  return static_cast<std::size_t>(std::count(split_mask.begin(), split_mask.end(), true));
}
Eigen::MatrixXd FeatureSet::training_rows() const { return select_rows(features, split_mask, false); }
std::vector<std::uint32_t> FeatureSet::training_labels() const {
  return select_labels(labels, split_mask, false);
}
Eigen::MatrixXd FeatureSet::validation_rows() const { return select_rows(features, split_mask, true); }
std::vector<std::uint32_t> FeatureSet::validation_labels() const {
  return select_labels(labels, split_mask, true);
}

const std::filesystem::path& EncoderEntry::path_for(std::string_view domain_id) const {
  for (const auto& [domain, path] : feature_paths)
    if (domain == domain_id) return path;
  throw ValidationError("encoder '" + id + "' has no features for domain '" + std::string(domain_id) +
                        "'");
}

const DomainEntry& ZooManifest::domain(std::string_view id) const {
  for (const auto& d : domains)
    if (d.id == id) return d;
  throw ValidationError("unknown domain id '" + std::string(id) + "'");
}

const EncoderEntry& ZooManifest::encoder(std::string_view id) const {
  for (const auto& e : encoders)
    if (e.id == id) return e;
  throw ValidationError("unknown encoder id '" + std::string(id) + "'");
}

bool ZooManifest::has_encoder(std::string_view id) const {
  return std::any_of(encoders.begin(), encoders.end(), [&](const auto& e) { return e.id == id; });
}

std::filesystem::path ZooManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& features) {
  std::string bytes(kFeatureMagic.begin(), kFeatureMagic.end());
  bytes.reserve(12 + static_cast<std::size_t>(features.size()) * 4);
  put_u32(bytes, static_cast<std::uint32_t>(features.rows()));
  put_u32(bytes, static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.size(); ++i)
    put_u32(bytes, std::bit_cast<std::uint32_t>(features.data()[i]));
  dump(path, bytes);
}

std::pair<std::uint32_t, std::uint32_t> read_feature_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string head(12, '\0');
  in.read(head.data(), 12);
  if (in.gcount() != 12) throw ValidationError("malformed header: truncated " + path.string());
  check_magic(head, kFeatureMagic, path);
  return {get_u32(head, 4), get_u32(head, 8)};
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  check_magic(bytes, kFeatureMagic, path);
  if (bytes.size() < 12) throw ValidationError("malformed header: truncated " + path.string());
  const std::uint64_t rows = get_u32(bytes, 4);
  const std::uint64_t cols = get_u32(bytes, 8);
  if (bytes.size() != 12 + rows * cols * 4)
    throw ValidationError("malformed header: payload size disagrees with " + std::to_string(rows) +
                          "x" + std::to_string(cols) + " in " + path.string());
  FeatureMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float v = std::bit_cast<float>(get_u32(bytes, 12 + static_cast<std::size_t>(i) * 4));
    if (!std::isfinite(v)) throw ValidationError("NaN payload: non-finite value in " + path.string());
    m.data()[i] = v;
  }
  return m;
}

void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels) {
  std::string bytes(kLabelMagic.begin(), kLabelMagic.end());
  put_u32(bytes, static_cast<std::uint32_t>(labels.size()));
  for (const auto l : labels) put_u32(bytes, l);
  dump(path, bytes);
}

std::vector<std::uint32_t> read_labels(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  check_magic(bytes, kLabelMagic, path);
  if (bytes.size() < 8) throw ValidationError("malformed header: truncated " + path.string());
  const std::uint64_t n = get_u32(bytes, 4);
  if (bytes.size() != 8 + n * 4)
    throw ValidationError("malformed header: label count disagrees with payload in " + path.string());
  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = get_u32(bytes, 8 + i * 4);
  return labels;
}

ZooManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("schema", std::string{}) != ZooManifest::kSchema)
      throw ValidationError("manifest schema must be '" + std::string(ZooManifest::kSchema) + "'");
    ZooManifest m;
    m.base_dir = base_dir;
    m.dataset_name = doc.at("dataset_name").get<std::string>();
    m.n_classes = doc.at("n_classes").get<std::size_t>();
    m.split_ratio = doc.value("split_ratio", 0.2);
    m.split_seed = doc.value("split_seed", std::uint64_t{0});
    for (const auto& d : doc.at("domains"))
      m.domains.push_back({d.at("id").get<std::string>(), d.at("n_samples").get<std::size_t>(),
                           d.at("labels").get<std::string>()});
    for (const auto& e : doc.at("encoders")) {
      EncoderEntry entry{e.at("id").get<std::string>(), e.at("dim").get<std::size_t>(), {}};
      for (const auto& [domain, path] : e.at("features").items())
        entry.feature_paths.emplace_back(domain, path.get<std::string>());
      m.encoders.push_back(std::move(entry));
    }
    if (m.n_classes < 2) throw ValidationError("manifest n_classes must be >= 2");
    if (!(m.split_ratio > 0.0 && m.split_ratio < 1.0))
      throw ValidationError("manifest split_ratio must lie in (0, 1)");
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest field error: ") + e.what());
  }
}

std::string serialize_manifest(const ZooManifest& m) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["schema"] = ZooManifest::kSchema;
  doc["dataset_name"] = m.dataset_name;
  doc["n_classes"] = m.n_classes;
  doc["split_ratio"] = m.split_ratio;
  doc["split_seed"] = m.split_seed;
  doc["domains"] = ordered_json::array();
  for (const auto& d : m.domains)
    doc["domains"].push_back(
        {{"id", d.id}, {"n_samples", d.n_samples}, {"labels", d.labels_path.generic_string()}});
  doc["encoders"] = ordered_json::array();
  for (const auto& e : m.encoders) {
    ordered_json files = ordered_json::object();
    for (const auto& [domain, path] : e.feature_paths) files[domain] = path.generic_string();
    doc["encoders"].push_back({{"id", e.id}, {"dim", e.dim}, {"features", files}});
  }
  return doc.dump(2) + "\n";
}

ZooManifest read_manifest(const std::filesystem::path& path) {
  auto m = parse_manifest(slurp(path), path.parent_path());
  validate_manifest(m);
  return m;
}

void write_manifest(const std::filesystem::path& path, const ZooManifest& manifest) {
  dump(path, serialize_manifest(manifest));
}

void validate_manifest(const ZooManifest& m) {
  std::set<std::string> seen;
  for (const auto& d : m.domains)
    if (!seen.insert(d.id).second) throw ValidationError("duplicate domain id '" + d.id + "'");
  seen.clear();
  for (const auto& e : m.encoders)
    if (!seen.insert(e.id).second) throw ValidationError("duplicate encoder id '" + e.id + "'");

  for (const auto& d : m.domains) {
    const auto path = m.resolve(d.labels_path);
    if (!std::filesystem::exists(path)) throw ValidationError("missing label file " + path.string());
  }
  for (const auto& e : m.encoders) {
    for (const auto& d : m.domains) {
      const auto path = m.resolve(e.path_for(d.id));
      if (!std::filesystem::exists(path))
        throw ValidationError("missing feature file " + path.string());
      const auto [rows, cols] = read_feature_header(path);
      if (cols != e.dim)
        throw ValidationError("dim mismatch: " + path.string() + " has " + std::to_string(cols) +
                              " columns, manifest declares " + std::to_string(e.dim));
      if (rows != d.n_samples)
        throw ValidationError("dim mismatch: " + path.string() + " has " + std::to_string(rows) +
                              " rows, manifest declares " + std::to_string(d.n_samples));
    }
  }
}

std::vector<bool> make_split_mask(std::size_t n, double ratio, std::string_view dataset_name,
                                  std::string_view domain_id, std::uint64_t seed) {
  std::string key(dataset_name);
  key += '/';
  key += domain_id;
  Rng rng(derive_seed(seed, key));
  const auto order = rng.permutation(n);
  const auto n_val = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  std::vector<bool> mask(n, false);
  for (std::size_t i = n - n_val; i < n; ++i) mask[order[i]] = true;
  return mask;
}

void validate_feature_set(const FeatureSet& fs, std::size_t n_classes) {
  if (static_cast<std::size_t>(fs.features.rows()) != fs.labels.size())
    throw ValidationError("dim mismatch: " + std::to_string(fs.features.rows()) + " feature rows vs " +
                          std::to_string(fs.labels.size()) + " labels in domain '" + fs.domain_id +
                          "'");
  if (fs.split_mask.size() != fs.labels.size())
    throw ValidationError("split mask length differs from sample count");
  if (!fs.features.allFinite()) throw ValidationError("NaN payload in domain '" + fs.domain_id + "'");
  for (const auto l : fs.labels)
    if (l >= n_classes)
      throw ValidationError("label out of range: " + std::to_string(l) + " >= n_classes " +
                            std::to_string(n_classes));
}

FeatureSet load_feature_set(const std::filesystem::path& features_path,
                            const std::filesystem::path& labels_path, const ZooManifest& manifest,
                            std::string_view domain_id) {
  FeatureSet fs;
  fs.domain_id = std::string(domain_id);
  fs.features = read_feature_matrix(features_path);
  fs.labels = read_labels(labels_path);
  fs.split_mask = make_split_mask(fs.labels.size(), manifest.split_ratio, manifest.dataset_name,
                                  domain_id, manifest.split_seed);
  validate_feature_set(fs, manifest.n_classes);
  return fs;
}

FeatureSet load_feature_set(const ZooManifest& manifest, std::string_view encoder_id,
                            std::string_view domain_id) {
  const auto& encoder = manifest.encoder(encoder_id);
  const auto& domain = manifest.domain(domain_id);
  auto fs = load_feature_set(manifest.resolve(encoder.path_for(domain_id)),
                             manifest.resolve(domain.labels_path), manifest, domain_id);
  if (static_cast<std::size_t>(fs.dim()) != encoder.dim)
    throw ValidationError("dim mismatch: encoder '" + encoder.id + "' declares " +
                          std::to_string(encoder.dim) + " but file has " +
                          std::to_string(fs.dim()));
  return fs;
}

void save_feature_set(const FeatureSet& fs, const std::filesystem::path& features_path,
                      const std::filesystem::path& labels_path) {
  write_feature_matrix(features_path, fs.features);
  write_labels(labels_path, fs.labels);
}

}  // namespace shiftzoo
