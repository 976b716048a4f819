#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace shiftzoo {

/// Encoder activations as stored on disk: row-major f32, one row per sample.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Features of one encoder on one domain, with labels and the train/validation split.
struct FeatureSet {
  std::string domain_id;
  FeatureMatrix features;
  std::vector<std::uint32_t> labels;
  std::vector<bool> split_mask;  // true = validation row

  std::size_t size() const { return labels.size(); }
  Eigen::Index dim() const { return features.cols(); }
  std::size_t validation_count() const;

  /// Rows with split_mask == false, widened to double.
  Eigen::MatrixXd training_rows() const;
  std::vector<std::uint32_t> training_labels() const;
  /// Rows with split_mask == true, widened to double.
  Eigen::MatrixXd validation_rows() const;
  std::vector<std::uint32_t> validation_labels() const;
};

struct DomainEntry {
  std::string id;
  std::size_t n_samples = 0;
  std::filesystem::path labels_path;  // relative to the manifest directory
};

struct EncoderEntry {
  std::string id;
  std::size_t dim = 0;
  std::vector<std::pair<std::string, std::filesystem::path>> feature_paths;  // domain id -> file

  const std::filesystem::path& path_for(std::string_view domain_id) const;
};

/// Dataset description tying domains, labels and per-encoder feature files together.
struct ZooManifest {
  static constexpr std::string_view kSchema = "shiftzoo.manifest/1";

  std::string dataset_name;
  std::size_t n_classes = 0;
  double split_ratio = 0.2;
  std::uint64_t split_seed = 0;
  std::vector<DomainEntry> domains;
  std::vector<EncoderEntry> encoders;
  std::filesystem::path base_dir;  // not serialized; set on read

  const DomainEntry& domain(std::string_view id) const;
  const EncoderEntry& encoder(std::string_view id) const;
  bool has_encoder(std::string_view id) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// Raw container formats.

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);
/// Reads only the (rows, cols) header of a feature file.
std::pair<std::uint32_t, std::uint32_t> read_feature_header(const std::filesystem::path& path);

void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels);
std::vector<std::uint32_t> read_labels(const std::filesystem::path& path);

// Manifest.

ZooManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
std::string serialize_manifest(const ZooManifest& manifest);
ZooManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const ZooManifest& manifest);
/// Checks id uniqueness, file existence and that file headers agree with declared dims.
void validate_manifest(const ZooManifest& manifest);

// Feature sets.

/// Validation rows are the last floor(ratio * n) entries of a permutation seeded by
/// (seed, dataset_name, domain_id). The split is shared by every encoder of a domain.
std::vector<bool> make_split_mask(std::size_t n, double ratio, std::string_view dataset_name,
                                  std::string_view domain_id, std::uint64_t seed);

FeatureSet load_feature_set(const std::filesystem::path& features_path,
                            const std::filesystem::path& labels_path, const ZooManifest& manifest,
                            std::string_view domain_id);
FeatureSet load_feature_set(const ZooManifest& manifest, std::string_view encoder_id,
                            std::string_view domain_id);

void save_feature_set(const FeatureSet& fs, const std::filesystem::path& features_path,
                      const std::filesystem::path& labels_path);

/// Throws ValidationError when fs breaks a FeatureSet invariant.
void validate_feature_set(const FeatureSet& fs, std::size_t n_classes);

}  // namespace shiftzoo
