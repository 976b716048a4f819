#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shiftzoo/ensemble_train.hpp"
#include "shiftzoo/shift_profiler.hpp"

namespace shiftzoo::cli {

/// One held-out domain of a `shiftzoo train` run.
struct FoldResult {
  std::string target_domain;
  double final_target_accuracy = 0.0;
  double final_validation_accuracy = 0.0;
  double best_validation_accuracy = 0.0;
  double target_accuracy_at_best_validation = 0.0;
  std::size_t best_step = 0;
  double logit_f_div = 0.0;  // pair-averaged over all domains, on the head's logits
  double logit_f_cor = 0.0;
  std::vector<std::string> warnings;
};

struct RunReport {
  static constexpr std::string_view kSchema = "shiftzoo.run_report/1";

  std::string tool_version;
  std::string dataset_name;
  std::string mode;
  std::string main_encoder;
  std::optional<std::string> div_aux;
  std::optional<std::string> rew_aux;
  TrainConfig config;
  std::vector<FoldResult> folds;

  double mean_target_accuracy() const;
  double mean_logit_f_div() const;
  double mean_logit_f_cor() const;
};

/// Shift scores of the head's logits over every domain (split as in the manifest).
EncoderShift logit_shift(const MlpHead& head, const std::vector<FeatureSet>& main_features,
                         std::size_t n_classes, const ProfilerOptions& options);

std::string serialize_run_report(const RunReport& report);
RunReport parse_run_report(std::string_view text);

/// Schema tag of a report document, or empty when absent.
std::string report_schema(std::string_view text);

}  // namespace shiftzoo::cli
