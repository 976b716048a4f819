#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shiftzoo/correlation_profile.hpp"
#include "shiftzoo/feature_store.hpp"
#include "shiftzoo/gaussian_profile.hpp"

namespace shiftzoo {

/// One domain's encoder outputs, split into fit (training) and threshold (validation) rows.
struct DomainFeatures {
  std::string id;
  Eigen::MatrixXd train;
  std::vector<std::uint32_t> train_labels;
  Eigen::MatrixXd validation;

  static DomainFeatures from(const FeatureSet& fs);
};

struct ProfilerOptions {
  double shrinkage = kDefaultShrinkage;
  int bins = kDefaultCalibrationBins;
  std::size_t jobs = 1;
  LogmeOptions logme;
};

struct PairShift {
  DiversityEstimate diversity;
  CorrelationEstimate correlation;
};

/// All unordered domain pairs of one encoder, with pair-averaged scores.
struct EncoderShift {
  std::string encoder_id;
  std::vector<PairShift> pairs;
  double f_div = 0.0;
  double f_cor = 0.0;
};

/// Runs fn(0..n-1) on up to `jobs` threads; each index is visited exactly once.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Unordered pairs (i < j) in lexicographic index order.
std::vector<std::pair<std::size_t, std::size_t>> domain_pairs(std::size_t n_domains);

/// Pairs are formed over domains sorted by id; input order does not affect the result.
EncoderShift profile_encoder(const std::string& encoder_id, const std::vector<DomainFeatures>& domains,
                             std::size_t n_classes, const ProfilerOptions& options = {});

/// Profiles every encoder in `encoder_ids` (all encoders when empty), sorted by encoder id.
std::vector<EncoderShift> profile_manifest(const ZooManifest& manifest,
                                           const std::vector<std::string>& encoder_ids,
                                           const ProfilerOptions& options = {});

struct DiversityProfile {
  std::vector<DiversityEstimate> pairs;
  double average = 0.0;
};

struct CorrelationProfile {
  std::vector<CorrelationEstimate> pairs;
  double average = 0.0;
};

DiversityProfile profile_dataset_diversity(const ZooManifest& manifest, const std::string& encoder_id,
                                           const ProfilerOptions& options = {});
CorrelationProfile profile_dataset_correlation(const ZooManifest& manifest,
                                               const std::string& encoder_id,
                                               const ProfilerOptions& options = {});

}  // namespace shiftzoo
