#include "shiftzoo_cli/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shiftzoo/error.hpp"

namespace shiftzoo::cli {

using nlohmann::json;

namespace {

json parse_object(std::string_view text, std::string_view what) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  return doc;
}

template <typename T>
T get_as(const json& value, const std::string& key) {
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (value.is_number_integer() && value.get<std::int64_t>() < 0)
        throw ValidationError("config key '" + key + "' must be non-negative");
    }
    return value.get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + key + "' has the wrong type");
  }
}

double temperature_from(const json& value) {
  if (value.is_string()) return parse_temperature(value.get<std::string>());
  return get_as<double>(value, "temperature");
}

void apply_rew_aux(const json& doc, RewAuxConfig& aux) {
  if (!doc.is_object()) throw ValidationError("config key 'rew_aux' must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "learning_rate") aux.learning_rate = get_as<double>(value, key);
    else if (key == "batch_size") aux.batch_size = get_as<std::size_t>(value, key);
    else if (key == "steps") aux.steps = get_as<std::size_t>(value, key);
    else if (key == "weight_decay") aux.weight_decay = get_as<double>(value, key);
    else throw ValidationError("unknown config key 'rew_aux." + key + "'");
  }
}

}  // namespace

double parse_temperature(std::string_view text) {
  if (text == "inf" || text == "infinity" || text == "+inf") return kInfiniteTemperature;
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || !(value > 0.0))
    throw ValidationError("temperature must be a positive number or 'inf', got '" +
                          std::string(text) + "'");
  return value;
}

void apply_train_config_json(std::string_view text, TrainConfig& c) {
  const json doc = parse_object(text, "train config");
  for (const auto& [key, value] : doc.items()) {
    if (key == "lambda") c.lambda = get_as<double>(value, key);
    else if (key == "gamma1") c.gamma1 = get_as<double>(value, key);
    else if (key == "gamma2") c.gamma2 = get_as<double>(value, key);
    else if (key == "temperature") c.temperature = temperature_from(value);
    else if (key == "n_warmup") c.n_warmup = get_as<std::size_t>(value, key);
    else if (key == "n_anneal") c.n_anneal = get_as<std::size_t>(value, key);
    else if (key == "learning_rate") c.learning_rate = get_as<double>(value, key);
    else if (key == "weight_decay") c.weight_decay = get_as<double>(value, key);
    else if (key == "batch_size") c.batch_size = get_as<std::size_t>(value, key);
    else if (key == "steps") c.steps = get_as<std::size_t>(value, key);
    else if (key == "dropout") c.dropout = get_as<double>(value, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(value, key);
    else if (key == "eval_interval") c.eval_interval = get_as<std::size_t>(value, key);
    else if (key == "rew_aux") apply_rew_aux(value, c.rew_aux);
    else throw ValidationError("unknown config key '" + key + "'");
  }
}

void apply_synth_spec_json(std::string_view text, SynthSpec& s) {
  const json doc = parse_object(text, "synth config");
  for (const auto& [key, value] : doc.items()) {
    if (key == "n_domains") s.n_domains = get_as<std::size_t>(value, key);
    else if (key == "n_classes") s.n_classes = get_as<std::size_t>(value, key);
    else if (key == "dim_core") s.dim_core = get_as<std::size_t>(value, key);
    else if (key == "dim_div") s.dim_div = get_as<std::size_t>(value, key);
    else if (key == "dim_spur") s.dim_spur = get_as<std::size_t>(value, key);
    else if (key == "samples_per_domain") s.samples_per_domain = get_as<std::size_t>(value, key);
    else if (key == "spur_strength") s.spur_strength = get_as<std::vector<double>>(value, key);
    else if (key == "div_offset") s.div_offset = get_as<double>(value, key);
    else if (key == "core_separation") s.core_separation = get_as<double>(value, key);
    else if (key == "spur_separation") s.spur_separation = get_as<double>(value, key);
    else if (key == "noise_sigma") s.noise_sigma = get_as<double>(value, key);
    else if (key == "seed") s.seed = get_as<std::uint64_t>(value, key);
    else if (key == "dataset_name") s.dataset_name = get_as<std::string>(value, key);
    else throw ValidationError("unknown config key '" + key + "'");
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv(std::string(kSeedEnv).c_str());
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string_view text(raw);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ValidationError(std::string(kSeedEnv) + " must be a non-negative integer, got '" +
                          std::string(text) + "'");
  return value;
}

TrainConfig load_train_config(const std::optional<std::filesystem::path>& config_file) {
  TrainConfig config;
  if (config_file) apply_train_config_json(read_text_file(*config_file), config);
  if (auto seed = seed_from_env()) config.seed = *seed;
  return config;
}

SynthSpec load_synth_spec(const std::optional<std::filesystem::path>& config_file) {
  SynthSpec spec;
  if (config_file) apply_synth_spec_json(read_text_file(*config_file), spec);
  if (auto seed = seed_from_env()) spec.seed = *seed;
  return spec;
}

TrainConfig benchmark_train_config() {
  TrainConfig c;
  c.lambda = 30.0;
  c.gamma1 = 0.5;
  c.gamma2 = 0.25;
  c.temperature = 1.0;
  c.learning_rate = 1e-3;
  c.steps = 2000;
  c.n_warmup = 500;
  c.n_anneal = 500;
  c.rew_aux.learning_rate = 1e-2;
  return c;
}

}  // namespace shiftzoo::cli
