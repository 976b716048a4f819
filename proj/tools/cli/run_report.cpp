#include "shiftzoo_cli/run_report.hpp"

#include <cmath>

#include <json.hpp>

#include "shiftzoo/error.hpp"

namespace shiftzoo::cli {

using nlohmann::ordered_json;

namespace {

template <typename F>
double mean_over(const std::vector<FoldResult>& folds, F field) {
  if (folds.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : folds) sum += field(f);
  return sum / static_cast<double>(folds.size());
}

ordered_json temperature_json(double t) {
  if (std::isinf(t)) return "inf";
  return t;
}

ordered_json config_json(const TrainConfig& c) {
  return ordered_json{{"lambda", c.lambda},
                      {"gamma1", c.gamma1},
                      {"gamma2", c.gamma2},
                      {"temperature", temperature_json(c.temperature)},
                      {"n_warmup", c.n_warmup},
                      {"n_anneal", c.n_anneal},
                      {"learning_rate", c.learning_rate},
                      {"weight_decay", c.weight_decay},
                      {"batch_size", c.batch_size},
                      {"steps", c.steps},
                      {"dropout", c.dropout},
                      {"seed", c.seed},
                      {"eval_interval", c.eval_interval},
                      {"rew_aux",
                       {{"learning_rate", c.rew_aux.learning_rate},
                        {"batch_size", c.rew_aux.batch_size},
                        {"steps", c.rew_aux.steps},
                        {"weight_decay", c.rew_aux.weight_decay}}}};
}

TrainConfig config_from_json(const ordered_json& j) {
  TrainConfig c;
  c.lambda = j.at("lambda").get<double>();
  c.gamma1 = j.at("gamma1").get<double>();
  c.gamma2 = j.at("gamma2").get<double>();
  const auto& t = j.at("temperature");
  c.temperature = t.is_string() ? kInfiniteTemperature : t.get<double>();
  c.n_warmup = j.at("n_warmup").get<std::size_t>();
  c.n_anneal = j.at("n_anneal").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.steps = j.at("steps").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_interval = j.at("eval_interval").get<std::size_t>();
  const auto& aux = j.at("rew_aux");
  c.rew_aux.learning_rate = aux.at("learning_rate").get<double>();
  c.rew_aux.batch_size = aux.at("batch_size").get<std::size_t>();
  c.rew_aux.steps = aux.at("steps").get<std::size_t>();
  c.rew_aux.weight_decay = aux.at("weight_decay").get<double>();
  return c;
}

ordered_json optional_json(const std::optional<std::string>& s) {
  return s ? ordered_json(*s) : ordered_json(nullptr);
}

std::optional<std::string> optional_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

}  // namespace

double RunReport::mean_target_accuracy() const {
  return mean_over(folds, [](const FoldResult& f) { return f.final_target_accuracy; });
}

double RunReport::mean_logit_f_div() const {
  return mean_over(folds, [](const FoldResult& f) { return f.logit_f_div; });
}

double RunReport::mean_logit_f_cor() const {
  return mean_over(folds, [](const FoldResult& f) { return f.logit_f_cor; });
}

EncoderShift logit_shift(const MlpHead& head, const std::vector<FeatureSet>& main_features,
                         std::size_t n_classes, const ProfilerOptions& options) {
  std::vector<DomainFeatures> domains;
  domains.reserve(main_features.size());
  for (const auto& fs : main_features) {
    FeatureSet logits = fs;
    logits.features = head.logits(fs.features.cast<double>()).cast<float>();
    domains.push_back(DomainFeatures::from(logits));
  }
  return profile_encoder("logits", domains, n_classes, options);
}

std::string serialize_run_report(const RunReport& r) {
  ordered_json doc;
  doc["schema"] = RunReport::kSchema;
  doc["tool_version"] = r.tool_version;
  doc["dataset_name"] = r.dataset_name;
  doc["seed"] = r.config.seed;
  doc["mode"] = r.mode;
  doc["main_encoder"] = r.main_encoder;
  doc["div_aux"] = optional_json(r.div_aux);
  doc["rew_aux"] = optional_json(r.rew_aux);
  doc["config"] = config_json(r.config);
  doc["folds"] = ordered_json::array();
  for (const auto& f : r.folds) {
    doc["folds"].push_back(ordered_json{
        {"target_domain", f.target_domain},
        {"final_target_accuracy", f.final_target_accuracy},
        {"final_validation_accuracy", f.final_validation_accuracy},
        {"best_validation_accuracy", f.best_validation_accuracy},
        {"target_accuracy_at_best_validation", f.target_accuracy_at_best_validation},
        {"best_step", f.best_step},
        {"logit_f_div", f.logit_f_div},
        {"logit_f_cor", f.logit_f_cor},
        {"warnings", f.warnings}});
  }
  doc["mean_target_accuracy"] = r.mean_target_accuracy();
  doc["mean_logit_f_div"] = r.mean_logit_f_div();
  doc["mean_logit_f_cor"] = r.mean_logit_f_cor();
  return doc.dump(2) + "\n";
}

std::string report_schema(std::string_view text) {
  try {
    const auto doc = ordered_json::parse(text);
    if (doc.is_object() && doc.contains("schema") && doc["schema"].is_string())
      return doc["schema"].get<std::string>();
  } catch (const ordered_json::exception&) {
  }
  return {};
}

RunReport parse_run_report(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("run report is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema", "") != RunReport::kSchema)
    throw ValidationError("run report schema must be '" + std::string(RunReport::kSchema) + "'");
  try {
    RunReport r;
    r.tool_version = doc.at("tool_version").get<std::string>();
    r.dataset_name = doc.at("dataset_name").get<std::string>();
    r.mode = doc.at("mode").get<std::string>();
    r.main_encoder = doc.at("main_encoder").get<std::string>();
    r.div_aux = optional_from(doc.at("div_aux"));
    r.rew_aux = optional_from(doc.at("rew_aux"));
    r.config = config_from_json(doc.at("config"));
    for (const auto& f : doc.at("folds")) {
      FoldResult fold;
      fold.target_domain = f.at("target_domain").get<std::string>();
      fold.final_target_accuracy = f.at("final_target_accuracy").get<double>();
      fold.final_validation_accuracy = f.at("final_validation_accuracy").get<double>();
      fold.best_validation_accuracy = f.at("best_validation_accuracy").get<double>();
      fold.target_accuracy_at_best_validation =
          f.at("target_accuracy_at_best_validation").get<double>();
      fold.best_step = f.at("best_step").get<std::size_t>();
      fold.logit_f_div = f.at("logit_f_div").get<double>();
      fold.logit_f_cor = f.at("logit_f_cor").get<double>();
      fold.warnings = f.at("warnings").get<std::vector<std::string>>();
      r.folds.push_back(std::move(fold));
    }
    return r;
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("run report field error: ") + e.what());
  }
}

}  // namespace shiftzoo::cli
