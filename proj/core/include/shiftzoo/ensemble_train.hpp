#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shiftzoo/feature_store.hpp"
#include "shiftzoo/hsic.hpp"
#include "shiftzoo/mlp_head.hpp"

namespace shiftzoo {

inline constexpr double kInfiniteTemperature = std::numeric_limits<double>::infinity();
inline constexpr double kProbabilityFloor = 1e-6;
inline constexpr double kMaxRawWeight = 100.0;

/// Linear reweight-auxiliary classifier schedule.
struct RewAuxConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 16;
  std::size_t steps = 1000;
  double weight_decay = 0.0;

  void validate() const;
};

struct TrainConfig {
  double lambda = 1.0;
  double gamma1 = 0.5;  // logit kernel
  double gamma2 = 0.5;  // diversity-auxiliary kernel
  double temperature = 1.0;
  std::size_t n_warmup = 100;
  std::size_t n_anneal = 1000;
  double learning_rate = 5e-5;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t steps = 5000;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 100;
  RewAuxConfig rew_aux;

  void validate() const;
};

struct RewAuxiliary {
  DenseLayer classifier;          // n_classes x aux_dim
  Eigen::VectorXd class_prior;    // p(y) over pooled training rows, floored
  std::vector<std::string> warnings;

  /// Softmax class probabilities, one row per input row.
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& aux_features) const;
};

RewAuxiliary train_rew_auxiliary(const Eigen::MatrixXd& aux_features,
                                 const std::vector<std::uint32_t>& labels, std::size_t n_classes,
                                 const RewAuxConfig& config, std::uint64_t seed);

/// (prior / p_c)^(1/T) with p_c floored; T = +inf gives exactly 1.
double raw_weight(double prior, double p_c_y, double temperature);

/// Rescales to mean 1 (sum m), preserving ratios.
Eigen::VectorXd batch_weights(const Eigen::VectorXd& raw);

struct TrainBatch {
  Eigen::MatrixXd inputs;                // main-encoder features
  std::vector<std::uint32_t> labels;
  Eigen::MatrixXd div_features;          // diversity-auxiliary features; empty = no HSIC
  Eigen::VectorXd raw_weights;           // pre-normalization weights; empty = uniform
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double hsic = 0.0;  // unscaled HSIC_b; 0 when inactive
  double mean_weight = 1.0;
  bool hsic_active = false;
  bool reweight_active = false;
};

struct LossAndGrad {
  LossBreakdown loss;
  HeadTensors grad;
};

/// Loss and analytic gradient of one batch without updating parameters.
LossAndGrad batch_loss_and_grad(const MlpHead& head, const TrainBatch& batch,
                                const TrainConfig& config, std::size_t step_index,
                                Rng* dropout_rng = nullptr);

/// One AdamW update. Throws Error on a non-finite loss.
LossBreakdown train_step(MlpHead& head, AdamW& optimizer, const TrainBatch& batch,
                         const TrainConfig& config, std::size_t step_index,
                         Rng* dropout_rng = nullptr);

enum class TrainMode { kErm, kRew, kHsic, kBoth };

TrainMode parse_train_mode(std::string_view text);
std::string_view to_string(TrainMode mode);

/// Per-domain inputs of one training run. div/rew sets are present when the mode uses them.
struct DomainTrainData {
  FeatureSet main;
  std::optional<FeatureSet> div_aux;
  std::optional<FeatureSet> rew_aux;
};

struct TrainLogEntry {
  std::size_t step = 0;
  double total = 0.0;
  double ce = 0.0;
  double hsic = 0.0;
  double mean_weight = 1.0;
  double lr = 0.0;
};

struct TrainResult {
  MlpHead head;
  std::vector<TrainLogEntry> log;
  std::string target_domain;
  double final_target_accuracy = 0.0;
  double final_validation_accuracy = 0.0;
  double best_validation_accuracy = 0.0;
  double target_accuracy_at_best_validation = 0.0;
  std::size_t best_step = 0;
  std::vector<std::string> warnings;
};

/// Trains on every domain except `target_domain` and evaluates on the target.
TrainResult train(const std::vector<DomainTrainData>& domains, const std::string& target_domain,
                  std::size_t n_classes, TrainMode mode, const TrainConfig& config);

/// Loads the needed encoders from a manifest, then trains.
TrainResult train(const ZooManifest& manifest, const std::string& main_encoder_id,
                  const std::optional<std::string>& div_aux_id,
                  const std::optional<std::string>& rew_aux_id, const std::string& target_domain,
                  TrainMode mode, const TrainConfig& config);

double accuracy(const MlpHead& head, const Eigen::MatrixXd& inputs,
                const std::vector<std::uint32_t>& labels);

/// One TrainLog line (JSON object, no trailing newline).
std::string format_log_entry(const TrainLogEntry& entry);

}  // namespace shiftzoo
