#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shiftzoo/error.hpp"
#include "shiftzoo/shift_report.hpp"
#include "shiftzoo/synthetic_dg.hpp"
#include "shiftzoo/version.hpp"
#include "shiftzoo_cli/cli.hpp"
#include "shiftzoo_cli/config.hpp"
#include "shiftzoo_cli/run_report.hpp"

namespace shiftzoo::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

std::size_t default_jobs() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void emit(const std::optional<fs::path>& path, const std::string& text, std::ostream& out) {
  if (path) write_file(*path, text);
  else out << text;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  fs::path out_dir;
  std::optional<fs::path> config;
  std::size_t zoo_size = 6;
  double split_ratio = 0.2;
  std::optional<std::size_t> domains, classes, dim_core, dim_div, dim_spur, samples;
  std::optional<std::vector<double>> spur_strength;
  std::optional<double> div_offset, core_separation, spur_separation, noise;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> name;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--out", a.out_dir, "Output directory")->required();
  app.add_option("--config", a.config, "JSON file with generator settings")->check(CLI::ExistingFile);
  app.add_option("--zoo-size", a.zoo_size, "Number of encoders (>= 3)")->capture_default_str();
  app.add_option("--split-ratio", a.split_ratio, "Validation fraction per domain")->capture_default_str();
  app.add_option("--domains", a.domains, "Number of domains");
  app.add_option("--classes", a.classes, "Number of classes");
  app.add_option("--dim-core", a.dim_core, "Label-predictive dims, stable across domains");
  app.add_option("--dim-div", a.dim_div, "Domain-translated dims");
  app.add_option("--dim-spur", a.dim_spur, "Dims with a per-domain label correlation");
  app.add_option("--samples", a.samples, "Samples per domain");
  app.add_option("--spur-strength", a.spur_strength, "Per-domain strength in [-1, 1]")->delimiter(',');
  app.add_option("--div-offset", a.div_offset, "Translation of the div block per domain index");
  app.add_option("--core-separation", a.core_separation, "Scale of the class code in the core block");
  app.add_option("--spur-separation", a.spur_separation, "Scale of the code in the spur block");
  app.add_option("--noise", a.noise, "Noise standard deviation");
  app.add_option("--seed", a.seed, "Generator seed");
  app.add_option("--name", a.name, "Dataset name");
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec = load_synth_spec(a.config);
  if (a.domains) spec.n_domains = *a.domains;
  if (a.classes) spec.n_classes = *a.classes;
  if (a.dim_core) spec.dim_core = *a.dim_core;
  if (a.dim_div) spec.dim_div = *a.dim_div;
  if (a.dim_spur) spec.dim_spur = *a.dim_spur;
  if (a.samples) spec.samples_per_domain = *a.samples;
  if (a.spur_strength) spec.spur_strength = *a.spur_strength;
  if (a.div_offset) spec.div_offset = *a.div_offset;
  if (a.core_separation) spec.core_separation = *a.core_separation;
  if (a.spur_separation) spec.spur_separation = *a.spur_separation;
  if (a.noise) spec.noise_sigma = *a.noise;
  if (a.seed) spec.seed = *a.seed;
  if (a.name) spec.dataset_name = *a.name;
  // A changed domain count without explicit strengths keeps the default pattern length valid.
  if (a.domains && !a.spur_strength && !a.config && spec.spur_strength.size() != spec.n_domains) {
    std::vector<double> s(spec.n_domains, 0.9);
    s.back() = -0.9;
    spec.spur_strength = s;
  }
  spec.validate();
  if (!(a.split_ratio > 0.0 && a.split_ratio < 1.0))
    throw ValidationError("--split-ratio must lie in (0, 1)");

  const auto manifest = write_synthetic_zoo(spec, a.zoo_size, a.out_dir, a.split_ratio);
  out << "wrote " << manifest.encoders.size() << " encoders x " << manifest.domains.size()
      << " domains to " << (a.out_dir / "manifest.json").string() << "\n";
  return kExitOk;
}

// ---- profile --------------------------------------------------------------

struct ProfileArgs {
  fs::path manifest;
  std::vector<std::string> encoders;
  std::optional<fs::path> out;
  std::size_t jobs = default_jobs();
  double shrinkage = kDefaultShrinkage;
  int bins = kDefaultCalibrationBins;
};

void add_profile(CLI::App& app, ProfileArgs& a) {
  app.add_option("manifest", a.manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  app.add_option("--encoders", a.encoders, "Only these encoder ids")->delimiter(',');
  app.add_option("--out", a.out, "Report path (default: stdout)");
  app.add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--shrinkage", a.shrinkage, "Covariance ridge, relative to trace/dim")
      ->capture_default_str();
  app.add_option("--bins", a.bins, "Calibration bins")->capture_default_str();
}

int cmd_profile(const ProfileArgs& a, std::ostream& out) {
  if (a.shrinkage < 0.0) throw ValidationError("--shrinkage must be >= 0");
  if (a.bins < 2) throw ValidationError("--bins must be >= 2");
  const auto manifest = read_manifest(a.manifest);
  for (const auto& id : a.encoders) (void)manifest.encoder(id);
  ProfilerOptions options;
  options.shrinkage = a.shrinkage;
  options.bins = a.bins;
  options.jobs = a.jobs;
  auto shifts = profile_manifest(manifest, a.encoders, options);
  const auto report = make_shift_report(manifest, std::move(shifts), options);
  emit(a.out, serialize_shift_report(report), out);
  return kExitOk;
}

// ---- rank -----------------------------------------------------------------

struct RankArgs {
  fs::path report;
  std::string main_encoder;
};

void add_rank(CLI::App& app, RankArgs& a) {
  app.add_option("report", a.report, "Shift report")->required()->check(CLI::ExistingFile);
  app.add_option("--main", a.main_encoder, "Main encoder, excluded from the suggestion");
}

int cmd_rank(const RankArgs& a, std::ostream& out) {
  const auto report = read_shift_report(a.report);
  if (!a.main_encoder.empty()) (void)report.encoder(a.main_encoder);
  std::size_t w = 12;
  for (const auto& e : report.encoders) w = std::max(w, e.encoder_id.size() + 2);
  auto listing = [&](const char* title, const std::vector<RankedEncoder>& ranked) {
    out << title << "\n";
    for (std::size_t i = 0; i < ranked.size(); ++i)
      out << "  " << pad(std::to_string(i + 1), 4) << pad(ranked[i].encoder_id, w)
          << fmt("%.6f", ranked[i].score) << "\n";
  };
  out << "dataset " << report.dataset_name << " (" << report.encoders.size() << " encoders)\n";
  listing("by F_div:", rank_by_diversity(report));
  listing("by F_cor:", rank_by_correlation(report));
  const auto choice = select_auxiliaries(report, a.main_encoder);
  out << "suggested: --div-aux " << choice.diversity_aux << " --rew-aux " << choice.correlation_aux
      << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  fs::path manifest;
  std::string main_encoder;
  std::optional<std::string> div_aux, rew_aux, target;
  std::string mode = "erm";
  std::optional<fs::path> config, log, out;
  std::size_t jobs = default_jobs();
  std::optional<double> lambda, gamma1, gamma2, lr, weight_decay, dropout, aux_lr;
  std::optional<std::string> temperature;
  std::optional<std::size_t> warmup, anneal, batch_size, steps, eval_interval, aux_steps,
      aux_batch_size;
  std::optional<std::uint64_t> seed;
};

void add_train(CLI::App& app, TrainArgs& a) {
  app.add_option("manifest", a.manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  app.add_option("--main", a.main_encoder, "Main encoder id")->required();
  app.add_option("--div-aux", a.div_aux, "Diversity auxiliary encoder (HSIC)");
  app.add_option("--rew-aux", a.rew_aux, "Correlation auxiliary encoder (reweighting)");
  app.add_option("--mode", a.mode, "erm | rew | hsic | both")
      ->check(CLI::IsMember({"erm", "rew", "hsic", "both"}))
      ->capture_default_str();
  app.add_option("--target", a.target, "Held-out domain (default: every domain in turn)");
  app.add_option("--config", a.config, "JSON file with training settings")->check(CLI::ExistingFile);
  app.add_option("--log", a.log, "Per-step log, one JSON object per line");
  app.add_option("--out", a.out, "Run report path (default: stdout)");
  app.add_option("--jobs", a.jobs, "Worker threads for logit profiling")->check(CLI::PositiveNumber);
  app.add_option("--lambda", a.lambda, "HSIC weight");
  app.add_option("--gamma1", a.gamma1, "Logit kernel bandwidth");
  app.add_option("--gamma2", a.gamma2, "Auxiliary kernel bandwidth");
  app.add_option("--temperature", a.temperature, "Reweighting temperature, or 'inf'");
  app.add_option("--warmup", a.warmup, "Steps before the HSIC term is added");
  app.add_option("--anneal", a.anneal, "Steps before reweighting starts");
  app.add_option("--lr", a.lr, "Head learning rate");
  app.add_option("--weight-decay", a.weight_decay, "Decoupled weight decay");
  app.add_option("--batch-size", a.batch_size, "Batch size");
  app.add_option("--steps", a.steps, "Training steps");
  app.add_option("--dropout", a.dropout, "Dropout probability");
  app.add_option("--eval-interval", a.eval_interval, "Steps between evaluations");
  app.add_option("--aux-lr", a.aux_lr, "Reweight auxiliary learning rate");
  app.add_option("--aux-steps", a.aux_steps, "Reweight auxiliary steps");
  app.add_option("--aux-batch-size", a.aux_batch_size, "Reweight auxiliary batch size");
  app.add_option("--seed", a.seed, "Training seed");
}

TrainConfig resolve_train_config(const TrainArgs& a) {
  TrainConfig c = load_train_config(a.config);
  if (a.lambda) c.lambda = *a.lambda;
  if (a.gamma1) c.gamma1 = *a.gamma1;
  if (a.gamma2) c.gamma2 = *a.gamma2;
  if (a.temperature) c.temperature = parse_temperature(*a.temperature);
  if (a.warmup) c.n_warmup = *a.warmup;
  if (a.anneal) c.n_anneal = *a.anneal;
  if (a.lr) c.learning_rate = *a.lr;
  if (a.weight_decay) c.weight_decay = *a.weight_decay;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.steps) c.steps = *a.steps;
  if (a.dropout) c.dropout = *a.dropout;
  if (a.eval_interval) c.eval_interval = *a.eval_interval;
  if (a.aux_lr) c.rew_aux.learning_rate = *a.aux_lr;
  if (a.aux_steps) c.rew_aux.steps = *a.aux_steps;
  if (a.aux_batch_size) c.rew_aux.batch_size = *a.aux_batch_size;
  if (a.seed) c.seed = *a.seed;
  c.validate();
  return c;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_train_config(a);
  const TrainMode mode = parse_train_mode(a.mode);
  const bool use_hsic = mode == TrainMode::kHsic || mode == TrainMode::kBoth;
  const bool use_rew = mode == TrainMode::kRew || mode == TrainMode::kBoth;

  const auto manifest = read_manifest(a.manifest);
  (void)manifest.encoder(a.main_encoder);
  if (a.div_aux) (void)manifest.encoder(*a.div_aux);
  if (a.rew_aux) (void)manifest.encoder(*a.rew_aux);
  if (use_hsic && !a.div_aux) throw ValidationError("--mode " + a.mode + " requires --div-aux");
  if (use_rew && !a.rew_aux) throw ValidationError("--mode " + a.mode + " requires --rew-aux");
  if (a.target) (void)manifest.domain(*a.target);
  if (manifest.domains.size() < 2) throw ValidationError("training needs at least two domains");

  std::vector<FeatureSet> main_features;
  for (const auto& d : manifest.domains)
    main_features.push_back(load_feature_set(manifest, a.main_encoder, d.id));
  std::vector<DomainTrainData> domains;
  for (std::size_t i = 0; i < manifest.domains.size(); ++i) {
    const auto& id = manifest.domains[i].id;
    DomainTrainData data{main_features[i], std::nullopt, std::nullopt};
    if (use_hsic) data.div_aux = load_feature_set(manifest, *a.div_aux, id);
    if (use_rew) data.rew_aux = load_feature_set(manifest, *a.rew_aux, id);
    domains.push_back(std::move(data));
  }

  std::vector<std::string> targets;
  if (a.target) targets.push_back(*a.target);
  else
    for (const auto& d : manifest.domains) targets.push_back(d.id);

  RunReport report;
  report.tool_version = std::string(kVersion);
  report.dataset_name = manifest.dataset_name;
  report.mode = a.mode;
  report.main_encoder = a.main_encoder;
  report.div_aux = use_hsic ? a.div_aux : std::nullopt;
  report.rew_aux = use_rew ? a.rew_aux : std::nullopt;
  report.config = config;

  ProfilerOptions profiler;
  profiler.jobs = a.jobs;
  std::string log_text;
  for (const auto& target : targets) {
    const auto result = train(domains, target, manifest.n_classes, mode, config);
    const auto shift = logit_shift(result.head, main_features, manifest.n_classes, profiler);
    FoldResult fold;
    fold.target_domain = target;
    fold.final_target_accuracy = result.final_target_accuracy;
    fold.final_validation_accuracy = result.final_validation_accuracy;
    fold.best_validation_accuracy = result.best_validation_accuracy;
    fold.target_accuracy_at_best_validation = result.target_accuracy_at_best_validation;
    fold.best_step = result.best_step;
    fold.logit_f_div = shift.f_div;
    fold.logit_f_cor = shift.f_cor;
    fold.warnings = result.warnings;
    report.folds.push_back(std::move(fold));
    if (a.log) {
      for (const auto& entry : result.log) {
        nlohmann::ordered_json line{{"target", target}};
        const auto fields = nlohmann::ordered_json::parse(format_log_entry(entry));
        for (const auto& [k, v] : fields.items()) line[k] = v;
        log_text += line.dump() + "\n";
      }
    }
  }
  if (a.log) write_file(*a.log, log_text);
  emit(a.out, serialize_run_report(report), out);
  return kExitOk;
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
  std::vector<fs::path> inputs;
  std::optional<fs::path> csv;
  std::optional<fs::path> out;
};

void add_report(CLI::App& app, ReportArgs& a) {
  app.add_option("reports", a.inputs, "Shift reports and/or run reports")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--csv", a.csv, "Scatter data: encoder_id,f_div,f_cor");
  app.add_option("--out", a.out, "Table path (default: stdout)");
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<ShiftReport> shifts;
  std::vector<RunReport> runs;
  std::string dataset;
  for (const auto& path : a.inputs) {
    const auto text = read_text_file(path);
    const auto schema = report_schema(text);
    std::string name;
    if (schema == ShiftReport::kSchema) {
      shifts.push_back(parse_shift_report(text));
      name = shifts.back().dataset_name;
    } else if (schema == RunReport::kSchema) {
      runs.push_back(parse_run_report(text));
      name = runs.back().dataset_name;
    } else {
      throw ValidationError("unrecognized report schema in " + path.string());
    }
    if (dataset.empty()) dataset = name;
    else if (name != dataset)
      throw ValidationError("reports mix datasets '" + dataset + "' and '" + name + "'");
  }

  std::string table = "dataset " + dataset + "\n";
  std::string csv = "encoder_id,f_div,f_cor\n";
  if (!shifts.empty()) {
    std::size_t w = 12;
    for (const auto& r : shifts)
      for (const auto& e : r.encoders) w = std::max(w, e.encoder_id.size() + 2);
    table += "\n" + pad("seed", 8) + pad("encoder_id", w) + pad("f_div", 10) + "f_cor\n";
    for (const auto& r : shifts) {
      for (const auto& e : r.encoders) {
        table += pad(std::to_string(r.seed), 8) + pad(e.encoder_id, w) +
                 pad(fmt("%.6f", e.f_div), 10) + fmt("%.6f", e.f_cor) + "\n";
        csv += e.encoder_id + "," + fmt("%.17g", e.f_div) + "," + fmt("%.17g", e.f_cor) + "\n";
      }
    }
  }
  if (!runs.empty()) {
    std::size_t w = 12;
    for (const auto& r : runs) w = std::max(w, r.main_encoder.size() + 2);
    table += "\n" + pad("seed", 8) + pad("mode", 6) + pad("main", w) + pad("target", 10) +
             pad("acc", 10) + pad("best_val", 10) + pad("logit_f_div", 13) + "logit_f_cor\n";
    for (const auto& r : runs) {
      for (const auto& f : r.folds)
        table += pad(std::to_string(r.config.seed), 8) + pad(r.mode, 6) + pad(r.main_encoder, w) +
                 pad(f.target_domain, 10) + pad(fmt("%.4f", f.final_target_accuracy), 10) +
                 pad(fmt("%.4f", f.best_validation_accuracy), 10) +
                 pad(fmt("%.6f", f.logit_f_div), 13) + fmt("%.6f", f.logit_f_cor) + "\n";
      table += pad(std::to_string(r.config.seed), 8) + pad(r.mode, 6) + pad(r.main_encoder, w) +
               pad("mean", 10) + pad(fmt("%.4f", r.mean_target_accuracy()), 10) + pad("", 10) +
               pad(fmt("%.6f", r.mean_logit_f_div()), 13) + fmt("%.6f", r.mean_logit_f_cor()) +
               "\n";
    }
  }
  if (a.csv) write_file(*a.csv, csv);
  emit(a.out, table, out);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Profile encoder zoos for feature shift and train shift-aware heads", "shiftzoo"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SynthArgs synth_args;
  ProfileArgs profile_args;
  RankArgs rank_args;
  TrainArgs train_args;
  ReportArgs report_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-domain zoo");
  auto* profile = app.add_subcommand("profile", "Compute F_div / F_cor for every encoder");
  auto* rank = app.add_subcommand("rank", "Rank encoders by shift and suggest auxiliaries");
  auto* train_cmd = app.add_subcommand("train", "Train a head with optional HSIC and reweighting");
  auto* report = app.add_subcommand("report", "Tabulate shift or run reports");
  add_synth(*synth, synth_args);
  add_profile(*profile, profile_args);
  add_rank(*rank, rank_args);
  add_train(*train_cmd, train_args);
  add_report(*report, report_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "shiftzoo: " << e.what() << "\n";
    if (app.get_subcommands().empty()) err << "run 'shiftzoo --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args, out);
    if (profile->parsed()) return cmd_profile(profile_args, out);
    if (rank->parsed()) return cmd_rank(rank_args, out);
    if (train_cmd->parsed()) return cmd_train(train_args, out);
    if (report->parsed()) return cmd_report(report_args, out);
  } catch (const ValidationError& e) {
    err << "shiftzoo: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "shiftzoo: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace shiftzoo::cli
