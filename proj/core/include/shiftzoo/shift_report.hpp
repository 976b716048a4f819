#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shiftzoo/shift_profiler.hpp"

namespace shiftzoo {

/// Per-encoder shift scores for one dataset, as written by `shiftzoo profile`.
struct ShiftReport {
  static constexpr std::string_view kSchema = "shiftzoo.shift_report/1";

  std::string tool_version;
  std::string dataset_name;
  std::uint64_t seed = 0;
  double split_ratio = 0.2;
  double shrinkage = kDefaultShrinkage;
  int bins = kDefaultCalibrationBins;
  std::vector<EncoderShift> encoders;  // sorted by encoder id

  const EncoderShift& encoder(std::string_view id) const;
};

ShiftReport make_shift_report(const ZooManifest& manifest, std::vector<EncoderShift> encoders,
                              const ProfilerOptions& options);

std::string serialize_shift_report(const ShiftReport& report);
/// Checks the schema tag and that every average equals the mean of its pairs.
ShiftReport parse_shift_report(std::string_view text);
ShiftReport read_shift_report(const std::filesystem::path& path);
void write_shift_report(const std::filesystem::path& path, const ShiftReport& report);

struct RankedEncoder {
  std::string encoder_id;
  double score = 0.0;
};

/// Descending by score, ties by ascending id.
std::vector<RankedEncoder> rank_by_diversity(const ShiftReport& report);
std::vector<RankedEncoder> rank_by_correlation(const ShiftReport& report);

struct AuxiliaryChoice {
  std::string diversity_aux;    // maximizes F_div
  std::string correlation_aux;  // maximizes F_cor
};

/// Most extreme encoder on each shift metric, never the main encoder.
AuxiliaryChoice select_auxiliaries(const ShiftReport& report, std::string_view main_encoder_id);

}  // namespace shiftzoo
