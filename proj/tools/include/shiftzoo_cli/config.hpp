#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "shiftzoo/ensemble_train.hpp"
#include "shiftzoo/synthetic_dg.hpp"

namespace shiftzoo::cli {

inline constexpr std::string_view kSeedEnv = "SHIFTZOO_SEED";

/// Parses "inf"/"infinity" or a positive number.
double parse_temperature(std::string_view text);

/// Overlays the keys present in a JSON object onto `config`. Unknown keys are rejected.
void apply_train_config_json(std::string_view text, TrainConfig& config);
void apply_synth_spec_json(std::string_view text, SynthSpec& spec);

std::string read_text_file(const std::filesystem::path& path);

/// Value of SHIFTZOO_SEED, if set. A malformed value is a ValidationError.
std::optional<std::uint64_t> seed_from_env();

/// defaults < config file < SHIFTZOO_SEED; flags are applied by the caller afterwards.
TrainConfig load_train_config(const std::optional<std::filesystem::path>& config_file);
SynthSpec load_synth_spec(const std::optional<std::filesystem::path>& config_file);

/// Settings used by the synthetic training benchmark (see README).
TrainConfig benchmark_train_config();

}  // namespace shiftzoo::cli
