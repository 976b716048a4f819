#include "shiftzoo/shift_report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "shiftzoo/error.hpp"
#include "shiftzoo/version.hpp"

namespace shiftzoo {
namespace {

using nlohmann::ordered_json;

constexpr double kAverageTolerance = 1e-12;

ordered_json pair_to_json(const PairShift& p) {
  return {{"domain_a", p.diversity.domain_a},
          {"domain_b", p.diversity.domain_b},
          {"f_div", p.diversity.f_div},
          {"p_a_escapes", p.diversity.p_a_escapes},
          {"p_b_escapes", p.diversity.p_b_escapes},
          {"f_cor", p.correlation.f_cor},
          {"overlap_count", p.correlation.overlap_count},
          {"empty_overlap", p.correlation.empty_overlap}};
}

PairShift pair_from_json(const std::string& encoder_id, const ordered_json& j) {
  PairShift p;
  p.diversity.encoder_id = p.correlation.encoder_id = encoder_id;
  p.diversity.domain_a = p.correlation.domain_a = j.at("domain_a").get<std::string>();
  p.diversity.domain_b = p.correlation.domain_b = j.at("domain_b").get<std::string>();
  p.diversity.f_div = j.at("f_div").get<double>();
  p.diversity.p_a_escapes = j.at("p_a_escapes").get<double>();
  p.diversity.p_b_escapes = j.at("p_b_escapes").get<double>();
  p.correlation.f_cor = j.at("f_cor").get<double>();
  p.correlation.overlap_count = j.at("overlap_count").get<std::size_t>();
  p.correlation.empty_overlap = j.value("empty_overlap", false);
  return p;
}

std::vector<RankedEncoder> rank_by(const ShiftReport& report, double EncoderShift::*field) {
  std::vector<RankedEncoder> out;
  for (const auto& e : report.encoders) out.push_back({e.encoder_id, e.*field});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.encoder_id < b.encoder_id;
  });
  return out;
}

}  // namespace

const EncoderShift& ShiftReport::encoder(std::string_view id) const {
  for (const auto& e : encoders)
    if (e.encoder_id == id) return e;
  throw ValidationError("report has no encoder '" + std::string(id) + "'");
}

ShiftReport make_shift_report(const ZooManifest& manifest, std::vector<EncoderShift> encoders,
                              const ProfilerOptions& options) {
  ShiftReport report;
  report.tool_version = std::string(kVersion);
  report.dataset_name = manifest.dataset_name;
  report.seed = manifest.split_seed;
  report.split_ratio = manifest.split_ratio;
  report.shrinkage = options.shrinkage;
  report.bins = options.bins;
  std::sort(encoders.begin(), encoders.end(),
            [](const auto& a, const auto& b) { return a.encoder_id < b.encoder_id; });
  report.encoders = std::move(encoders);
  return report;
}

std::string serialize_shift_report(const ShiftReport& report) {
  ordered_json doc;
  doc["schema"] = ShiftReport::kSchema;
  doc["tool_version"] = report.tool_version;
  doc["dataset_name"] = report.dataset_name;
  doc["seed"] = report.seed;
  doc["config"] = {{"split_ratio", report.split_ratio},
                   {"shrinkage", report.shrinkage},
                   {"bins", report.bins}};
  doc["encoders"] = ordered_json::array();
  for (const auto& e : report.encoders) {
    ordered_json pairs = ordered_json::array();
    for (const auto& p : e.pairs) pairs.push_back(pair_to_json(p));
    doc["encoders"].push_back(
        {{"encoder_id", e.encoder_id}, {"f_div", e.f_div}, {"f_cor", e.f_cor}, {"pairs", pairs}});
  }
  return doc.dump(2) + "\n";
}

ShiftReport parse_shift_report(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  try {
    if (doc.value("schema", std::string{}) != ShiftReport::kSchema)
      throw ValidationError("malformed report: schema must be '" +
                            std::string(ShiftReport::kSchema) + "'");
    ShiftReport r;
    r.tool_version = doc.at("tool_version").get<std::string>();
    r.dataset_name = doc.at("dataset_name").get<std::string>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    const auto& config = doc.at("config");
    r.split_ratio = config.at("split_ratio").get<double>();
    r.shrinkage = config.at("shrinkage").get<double>();
    r.bins = config.at("bins").get<int>();
    for (const auto& e : doc.at("encoders")) {
      EncoderShift shift;
      shift.encoder_id = e.at("encoder_id").get<std::string>();
      shift.f_div = e.at("f_div").get<double>();
      shift.f_cor = e.at("f_cor").get<double>();
      double div = 0.0;
      double cor = 0.0;
      for (const auto& p : e.at("pairs")) {
        shift.pairs.push_back(pair_from_json(shift.encoder_id, p));
        div += shift.pairs.back().diversity.f_div;
        cor += shift.pairs.back().correlation.f_cor;
      }
      if (!shift.pairs.empty()) {
        const double n = static_cast<double>(shift.pairs.size());
        if (std::abs(div / n - shift.f_div) > kAverageTolerance ||
            std::abs(cor / n - shift.f_cor) > kAverageTolerance)
          throw ValidationError("malformed report: averages of encoder '" + shift.encoder_id +
                                "' disagree with its pairs");
      }
      r.encoders.push_back(std::move(shift));
    }
    return r;
  } catch (const ordered_json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

ShiftReport read_shift_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open report " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_shift_report(text);
}

void write_shift_report(const std::filesystem::path& path, const ShiftReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write report " + path.string());
  out << serialize_shift_report(report);
}

std::vector<RankedEncoder> rank_by_diversity(const ShiftReport& report) {
  return rank_by(report, &EncoderShift::f_div);
}

std::vector<RankedEncoder> rank_by_correlation(const ShiftReport& report) {
  return rank_by(report, &EncoderShift::f_cor);
}

AuxiliaryChoice select_auxiliaries(const ShiftReport& report, std::string_view main_encoder_id) {
  if (report.encoders.empty()) throw ValidationError("report is empty");
  auto pick = [&](const std::vector<RankedEncoder>& ranked) {
    for (const auto& r : ranked)
      if (r.encoder_id != main_encoder_id) return r.encoder_id;
    throw ValidationError("report has no encoder besides the main encoder");
  };
  return {pick(rank_by_diversity(report)), pick(rank_by_correlation(report))};
}

}  // namespace shiftzoo
