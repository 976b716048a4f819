#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shiftzoo/feature_store.hpp"

namespace shiftzoo {

/// Generative knobs for a multi-domain dataset with planted shifts.
///
/// Raw inputs are the concatenation [core | div | spur]:
///  - core: class-mean shift, identical in every domain;
///  - div:  N(domain_index * div_offset, noise_sigma^2) per dim, label-free;
///  - spur: with probability |spur_strength[d]| encodes the label (cyclically shifted by one
///          class when the strength is negative), otherwise a uniformly random class.
/// The spur marginal is the same in every domain; only its relation to the label moves.
struct SynthSpec {
  std::size_t n_domains = 3;
  std::size_t n_classes = 4;
  std::size_t dim_core = 8;
  std::size_t dim_div = 4;
  std::size_t dim_spur = 4;
  std::size_t samples_per_domain = 2000;
  std::vector<double> spur_strength{0.9, 0.8, -0.9};
  double div_offset = 3.0;
  double core_separation = 1.0;
  double spur_separation = 3.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  std::string dataset_name = "synthetic";

  std::size_t raw_dim() const { return dim_core + dim_div + dim_spur; }
  void validate() const;
};

/// One domain in raw input space.
struct SynthDomain {
  std::string id;
  Eigen::MatrixXd inputs;  // samples x raw_dim
  std::vector<std::uint32_t> labels;
};

struct SynthDataset {
  SynthSpec spec;
  std::vector<SynthDomain> domains;
};

enum class Block { kCore, kDiv, kSpur };

/// Fixed seeded random projection of a subset of raw dims, then leaky ReLU.
struct SynthEncoder {
  std::string id;
  std::string role;                   // clean | diversity_heavy | correlation_heavy | main | mixed
  std::vector<std::size_t> raw_dims;  // which raw columns pass through (non-empty)
  Eigen::MatrixXd projection;         // out x raw_dims.size()
  double negative_slope = 0.5;

  Eigen::MatrixXd encode(const Eigen::MatrixXd& raw_inputs) const;
  bool passes(const SynthSpec& spec, Block block) const;
};

std::string domain_name(std::size_t index);

SynthDataset generate(const SynthSpec& spec);

/// Encoder ids of the planted roles.
inline constexpr std::string_view kCleanEncoder = "clean";
inline constexpr std::string_view kDiversityEncoder = "div_heavy";
inline constexpr std::string_view kCorrelationEncoder = "cor_heavy";
inline constexpr std::string_view kMainEncoder = "main";

/// clean, div_heavy, cor_heavy, then main (zoo_size >= 4), then mixed_<k>.
std::vector<SynthEncoder> build_zoo(const SynthSpec& spec, std::size_t zoo_size);

/// Encoded FeatureSets (split per the manifest conventions) for one encoder.
std::vector<FeatureSet> extract_features(const SynthDataset& data, const SynthEncoder& encoder,
                                         double split_ratio = 0.2);

/// Human-readable record of what was planted where (JSON).
std::string ground_truth_card(const SynthSpec& spec, const std::vector<SynthEncoder>& zoo);

/// Writes features/<encoder>/<domain>.fzf, labels/<domain>.fzl, manifest.json and
/// ground_truth.json under out_dir. Returns the manifest.
ZooManifest write_synthetic_zoo(const SynthSpec& spec, std::size_t zoo_size,
                                const std::filesystem::path& out_dir, double split_ratio = 0.2);

}  // namespace shiftzoo
