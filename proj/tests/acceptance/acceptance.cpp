// Acceptance driver: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.hpp"
#include "shiftzoo/ensemble_train.hpp"
#include "shiftzoo/hsic.hpp"
#include "shiftzoo/shift_report.hpp"
#include "shiftzoo/synthetic_dg.hpp"
#include "shiftzoo_cli/config.hpp"
#include "shiftzoo_cli/run_report.hpp"

namespace {

using namespace shiftzoo;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome shiftzoo_cli(const oracle::TempDir& scratch, const std::string& args) {
  static int counter = 0;
  const auto tag = std::to_string(counter++);
  const auto out = scratch.path() / ("stdout" + tag);
  const auto err = scratch.path() / ("stderr" + tag);
  const std::string cmd = std::string("env -u SHIFTZOO_SEED ") + SHIFTZOO_BINARY + " " + args + " >" +
                          out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

/// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

// 1 ---------------------------------------------------------------------------

Verdict hsic_oracles() {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = static_cast<Eigen::Index>(2 + rng.below(31));
    const auto dl = static_cast<Eigen::Index>(1 + rng.below(6));
    const auto dk = static_cast<Eigen::Index>(1 + rng.below(6));
    const Eigen::MatrixXd zl = oracle::random_matrix(rng, m, dl, rng.uniform(0.2, 3.0));
    const Eigen::MatrixXd zd = oracle::random_matrix(rng, m, dk, rng.uniform(0.2, 3.0));
    const KernelSpec sl{rng.uniform(0.05, 2.0), static_cast<int>(dl)};
    const KernelSpec sk{rng.uniform(0.05, 2.0), static_cast<int>(dk)};
    const auto k = oracle::kernel_elementwise(zd, sk.effective_gamma());
    const auto l = oracle::kernel_elementwise(zl, sl.effective_gamma());
    const double got = hsic_b(zl, zd, sl, sk);
    worst = std::max({worst, std::abs(got - oracle::hsic_trace(k, l)),
                      std::abs(got - oracle::hsic_double_sum(k, l))});
  }
  return {worst <= 1e-10, fmt("100 instances, max abs err %.2e", worst)};
}

// 2 ---------------------------------------------------------------------------

Verdict training_gradient() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    MlpHead head(2, 16, 8, 3, 500 + trial);
    const auto m = static_cast<Eigen::Index>(4 + rng.below(13));
    TrainBatch batch;
    batch.inputs = oracle::random_matrix(rng, m, 2);
    for (Eigen::Index i = 0; i < m; ++i) batch.labels.push_back(static_cast<std::uint32_t>(rng.below(3)));
    batch.div_features = oracle::random_matrix(rng, m, static_cast<Eigen::Index>(1 + rng.below(6)));
    batch.raw_weights = (oracle::random_matrix(rng, m, 1).array().abs() + 0.05).matrix();
    TrainConfig config;
    config.lambda = rng.uniform(0.1, 50.0);
    config.gamma1 = rng.uniform(0.1, 2.0);
    config.gamma2 = rng.uniform(0.1, 2.0);
    config.n_warmup = 0;
    config.n_anneal = 0;
    const auto lg = batch_loss_and_grad(head, batch, config, 1);
    if (!lg.loss.hsic_active || !lg.loss.reweight_active) return {false, "gates inactive"};
    const auto fd = oracle::central_difference(
        [&](const Eigen::VectorXd& p) {
          MlpHead h = head;
          h.unflatten(p);
          return batch_loss_and_grad(h, batch, config, 1).loss.total;
        },
        head.flatten());
    worst = std::max(worst, oracle::relative_error(flatten(lg.grad), fd));
  }
  return {worst < 1e-4, fmt("20 configs on a 2-16-8-3 head, max rel err %.2e", worst)};
}

// 3 ---------------------------------------------------------------------------

Verdict logme_grid() {
  Rng rng(303);
  constexpr double kCell = 0.05, kGridLo = -4.0, kGridHi = 4.0;
  double worst = 0.0;
  int columns = 0, unbounded = 0;
  bool monotone = true;
  bool interior = true;
  bool below_grid = false;
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(20 + rng.below(81));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(8));
    const auto classes = static_cast<Eigen::Index>(2 + rng.below(3));
    const Eigen::MatrixXd f = oracle::random_matrix(rng, n, d);
    const Eigen::MatrixXd w = oracle::random_matrix(rng, d, classes);
    const Eigen::MatrixXd scores = f * w + oracle::random_matrix(rng, n, classes);
    std::vector<std::uint32_t> labels;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      scores.row(i).maxCoeff(&best);
      labels.push_back(static_cast<std::uint32_t>(best));
    }
    const Eigen::MatrixXd y = one_hot(labels, static_cast<std::size_t>(classes));
    for (Eigen::Index c = 0; c < classes; ++c) {
      const auto fit = logme_fit_column(f, y.col(c));
      const auto coarse = oracle::grid_search_evidence(f, y.col(c), kGridLo, kGridHi, kCell);
      const auto grid = oracle::refined_grid_search_evidence(f, y.col(c), kGridLo, kGridHi, kCell);
      ++columns;
      if (fit.log_evidence < coarse.value - 1e-9 * (1.0 + std::abs(coarse.value))) below_grid = true;
      // An uninformative column has its supremum at alpha -> inf; the grid then reports its
      // edge, so the fit is compared after clamping to the grid range.
      const double la = std::clamp(std::log10(fit.alpha), kGridLo, kGridHi);
      const double lb = std::clamp(std::log10(fit.beta), kGridLo, kGridHi);
      worst = std::max({worst, std::abs(la - grid.log10_alpha), std::abs(lb - grid.log10_beta)});
      if (grid.log10_alpha >= kGridHi) ++unbounded;
      if (grid.log10_alpha <= kGridLo || std::abs(grid.log10_beta) >= kGridHi) interior = false;
      const auto& h = fit.evidence_history;
      for (std::size_t i = 1; i < h.size(); ++i)
        if (h[i] < h[i - 1] - 1e-9 * (1.0 + std::abs(h[i - 1]))) monotone = false;
    }
  }
  std::string detail = fmt("20 instances, %.0f label columns (%.0f with alpha* -> inf), max |log10 diff| %.4f vs refined grid (cell %.2f)",
                           columns, unbounded, worst, kCell);
  detail += monotone ? ", evidence non-decreasing" : ", evidence DECREASED";
  if (!interior) detail += ", grid optimum on an unexpected boundary";
  if (below_grid) detail += ", fit evidence BELOW a grid point";
  return {worst <= kCell && monotone && interior && !below_grid, detail};
}

// 4 ---------------------------------------------------------------------------

Verdict diversity_calibration() {
  // Calibration is judged on the 10-seed mean; with a 400-row validation split the per-seed
  // sd is about 0.0044, so single seeds land above 0.02 roughly 6% of the time.
  double lo = 1.0, hi = 0.0, sum = 0.0, far_min = 1.0;
  int in_band = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const auto a = oracle::gaussian_domain(1000 + 2 * seed, "a", 2000, 4, 0.0);
    const auto b = oracle::gaussian_domain(1001 + 2 * seed, "b", 2000, 4, 0.0);
    const double iid = profile_encoder("e", {a, b}, 1).f_div;
    lo = std::min(lo, iid);
    hi = std::max(hi, iid);
    sum += iid;
    in_band += iid <= 0.02;
    auto far = b;
    far.train.col(0).array() += 100.0;
    far.validation.col(0).array() += 100.0;
    far_min = std::min(far_min, profile_encoder("e", {a, far}, 1).f_div);
  }
  const double mean = sum / 10.0;
  std::string detail = fmt("iid F_div mean %.4f (need 0.01 +- 0.01), per seed [%.4f, %.4f], ", mean, lo, hi);
  detail += fmt("%.0f/10 seeds individually in band; 100 sigma apart min %.4f", in_band, far_min);
  return {std::abs(mean - 0.01) <= 0.01 && far_min >= 0.999, detail};
}

// 5 ---------------------------------------------------------------------------

Verdict correlation_calibration() {
  double same_max = 0.0, flip_min = 1.0;
  using oracle::LabelRule;
  for (int seed = 0; seed < 10; ++seed) {
    const auto a = oracle::discrete_domain(3000 + 4 * seed, "a", LabelRule::kNoisyPositive, 2000, 1);
    const auto b = oracle::discrete_domain(3001 + 4 * seed, "b", LabelRule::kNoisyPositive, 2000, 1);
    same_max = std::max(same_max, profile_encoder("e", {a, b}, 2).f_cor);
    const auto c = oracle::discrete_domain(3002 + 4 * seed, "c", LabelRule::kPositive, 2000, 1);
    const auto d = oracle::discrete_domain(3003 + 4 * seed, "d", LabelRule::kNegative, 2000, 1);
    flip_min = std::min(flip_min, profile_encoder("e", {c, d}, 2).f_cor);
  }
  return {same_max <= 0.05 && flip_min >= 0.9,
          fmt("10 seeds: identical max %.4f (<= 0.05), flipped min %.4f (>= 0.9)", same_max, flip_min)};
}

// 6 ---------------------------------------------------------------------------

Verdict zoo_recovery() {
  int hits = 0;
  std::string misses;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    oracle::TempDir dir("accept-zoo");
    SynthSpec spec;
    spec.seed = seed;
    const auto manifest = write_synthetic_zoo(spec, 6, dir.path());
    const ProfilerOptions options;
    const auto report = make_shift_report(manifest, profile_manifest(manifest, {}, options), options);
    const auto choice = select_auxiliaries(report, kMainEncoder);
    if (choice.diversity_aux == kDiversityEncoder && choice.correlation_aux == kCorrelationEncoder) ++hits;
    else misses += " seed" + std::to_string(seed) + "->(" + choice.diversity_aux + "," + choice.correlation_aux + ")";
  }
  return {hits >= 9, fmt("%.0f/10 seeds recovered", hits) + misses};
}

// 7, 8 --------------------------------------------------------------------------

struct BenchmarkMeans {
  bool ok = true;
  std::string error;
  std::map<std::string, double> acc, f_div, f_cor;
};

/// Synthesizes seeds 0-4 and trains every mode through the CLI with the benchmark config.
BenchmarkMeans run_benchmark(const oracle::TempDir& scratch, const std::filesystem::path& config) {
  BenchmarkMeans out;
  const std::array<const char*, 4> modes{"erm", "rew", "hsic", "both"};
  for (int seed = 0; seed < 5; ++seed) {
    const auto zoo = scratch.path() / ("bench" + std::to_string(seed));
    const auto s = shiftzoo_cli(scratch, "synth --out " + zoo.string() + " --seed " + std::to_string(seed));
    if (s.code != 0) return {false, "synth failed: " + s.err, {}, {}, {}};
    for (const auto* mode : modes) {
      const auto r = shiftzoo_cli(
          scratch, "train " + (zoo / "manifest.json").string() +
                       " --main main --div-aux div_heavy --rew-aux cor_heavy --target d2 --mode " + mode +
                       " --config " + config.string() + " --seed " + std::to_string(seed));
      if (r.code != 0) return {false, std::string("train ") + mode + " failed: " + r.err, {}, {}, {}};
      const auto report = cli::parse_run_report(r.out);
      out.acc[mode] += report.mean_target_accuracy() / 5.0;
      out.f_div[mode] += report.mean_logit_f_div() / 5.0;
      out.f_cor[mode] += report.mean_logit_f_cor() / 5.0;
    }
  }
  return out;
}

// 9 ---------------------------------------------------------------------------

Verdict reduction_identity(const oracle::TempDir& scratch, const std::filesystem::path& config) {
  const auto zoo = scratch.path() / "bench0";
  if (!std::filesystem::exists(zoo / "manifest.json") &&
      shiftzoo_cli(scratch, "synth --out " + zoo.string() + " --seed 0").code != 0)
    return {false, "synth failed"};
  const std::string base = "train " + (zoo / "manifest.json").string() + " --main main --target d2 --config " +
                           config.string() + " --seed 0";
  const auto erm_log = scratch.path() / "erm.jsonl";
  const auto both_log = scratch.path() / "both.jsonl";
  const auto erm = shiftzoo_cli(scratch, base + " --mode erm --log " + erm_log.string());
  const auto both = shiftzoo_cli(scratch, base + " --mode both --div-aux div_heavy --rew-aux cor_heavy"
                                               " --lambda 0 --temperature inf --log " + both_log.string());
  if (erm.code != 0 || both.code != 0) return {false, "train failed: " + erm.err + both.err};
  const auto folds_erm = nlohmann::ordered_json::parse(erm.out).at("folds").dump();
  const auto folds_both = nlohmann::ordered_json::parse(both.out).at("folds").dump();
  const bool same_folds = folds_erm == folds_both;
  const bool same_log = slurp(erm_log) == slurp(both_log) && !slurp(erm_log).empty();
  return {same_folds && same_log, std::string("fold results ") + (same_folds ? "identical" : "DIFFER") +
                                      ", per-step logs " + (same_log ? "identical" : "DIFFER")};
}

// 10 --------------------------------------------------------------------------

Verdict determinism_and_format(const oracle::TempDir& scratch, const std::filesystem::path& config) {
  std::vector<std::string> failures;
  // synth
  const auto z1 = scratch.path() / "det1", z2 = scratch.path() / "det2";
  const auto s1 = shiftzoo_cli(scratch, "synth --out " + z1.string() + " --seed 9");
  const auto s2 = shiftzoo_cli(scratch, "synth --out " + z2.string() + " --seed 9");
  // stdout names the output directory, which is the one intended difference
  std::string s2_out = s2.out;
  if (const auto at = s2_out.find(z2.string()); at != std::string::npos)
    s2_out.replace(at, z2.string().size(), z1.string());
  if (s1.code || s2.code || tree(z1) != tree(z2) || s1.out != s2_out) failures.push_back("synth");
  const auto manifest = (z1 / "manifest.json").string();
  // profile, once per --jobs setting
  const auto p1 = shiftzoo_cli(scratch, "profile " + manifest + " --jobs 1");
  const auto p2 = shiftzoo_cli(scratch, "profile " + manifest + " --jobs 4");
  if (p1.code || p2.code || p1.out != p2.out) failures.push_back("profile");
  const auto shift = scratch.path() / "det_shift.json";
  std::ofstream(shift, std::ios::binary) << p1.out;
  // rank
  const auto r1 = shiftzoo_cli(scratch, "rank " + shift.string() + " --main main");
  const auto r2 = shiftzoo_cli(scratch, "rank " + shift.string() + " --main main");
  if (r1.code || r1.out != r2.out) failures.push_back("rank");
  // train
  const std::string train = "train " + manifest + " --main main --div-aux div_heavy --rew-aux cor_heavy"
                            " --mode both --config " + config.string() + " --steps 300";
  const auto t1 = shiftzoo_cli(scratch, train + " --jobs 1 --log " + (scratch.path() / "t1.jsonl").string());
  const auto t2 = shiftzoo_cli(scratch, train + " --jobs 3 --log " + (scratch.path() / "t2.jsonl").string());
  if (t1.code || t1.out != t2.out ||
      slurp(scratch.path() / "t1.jsonl") != slurp(scratch.path() / "t2.jsonl"))
    failures.push_back("train");
  const auto run = scratch.path() / "det_run.json";
  std::ofstream(run, std::ios::binary) << t1.out;
  // report
  const auto c1 = scratch.path() / "c1.csv", c2 = scratch.path() / "c2.csv";
  const auto q1 = shiftzoo_cli(scratch, "report " + shift.string() + " " + run.string() + " --csv " + c1.string());
  const auto q2 = shiftzoo_cli(scratch, "report " + shift.string() + " " + run.string() + " --csv " + c2.string());
  if (q1.code || q1.out != q2.out || slurp(c1) != slurp(c2)) failures.push_back("report");

  // binary formats
  oracle::TempDir dir("accept-fzf");
  Rng rng(1010);
  const std::array<float, 6> specials{0.0f, -0.0f, std::numeric_limits<float>::denorm_min(),
                                      std::numeric_limits<float>::max(),
                                      std::numeric_limits<float>::lowest(), 1e-30f};
  int round_trips = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rows = static_cast<Eigen::Index>(rng.below(20));
    const auto cols = static_cast<Eigen::Index>(1 + rng.below(16));
    FeatureMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = rng.below(10) == 0 ? specials[rng.below(specials.size())]
                                       : static_cast<float>(rng.normal(0.0, std::pow(10.0, rng.uniform(-6, 6))));
    write_feature_matrix(dir.path() / "m.fzf", m);
    const FeatureMatrix back = read_feature_matrix(dir.path() / "m.fzf");
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(rows));
    for (auto& l : labels) l = static_cast<std::uint32_t>(rng.next_u64());
    write_labels(dir.path() / "l.fzl", labels);
    if (back.rows() == rows && back.cols() == cols &&
        std::memcmp(back.data(), m.data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0 &&
        read_labels(dir.path() / "l.fzl") == labels)
      ++round_trips;
  }
  if (round_trips != 1000) failures.push_back("FZF1/FZL1 round trip");

  std::string detail = "synth, profile, rank, train, report byte-identical; " + std::to_string(round_trips) +
                       "/1000 format round trips";
  if (!failures.empty()) {
    detail = "mismatch in:";
    for (const auto& f : failures) detail += " " + f;
  }
  return {failures.empty(), detail};
}

struct Runner {
  int failed = 0;

  void check(int id, const std::string& what, double limit_s, const std::function<Verdict()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(id, what, v, secs, limit_s);
  }

  void report(int id, const std::string& what, Verdict v, double secs, double limit_s) {
    if (limit_s > 0.0 && secs > limit_s) {
      v.pass = false;
      v.detail += "; over time limit";
    }
    if (!v.pass) ++failed;
    std::string timing = limit_s > 0.0 ? fmt("%.1fs / limit %.0fs", secs, limit_s) : fmt("%.1fs", secs);
    std::printf("%s criterion %d: %s -- %s [%s]\n", v.pass ? "PASS" : "FAIL", id, what.c_str(),
                v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
};

}  // namespace

int main() {
  Runner run;
  oracle::TempDir scratch("acceptance");
  const auto config = scratch.path() / "benchmark.json";
  {
    const auto c = cli::benchmark_train_config();
    nlohmann::ordered_json j{{"lambda", c.lambda},
                             {"gamma1", c.gamma1},
                             {"gamma2", c.gamma2},
                             {"temperature", c.temperature},
                             {"n_warmup", c.n_warmup},
                             {"n_anneal", c.n_anneal},
                             {"learning_rate", c.learning_rate},
                             {"weight_decay", c.weight_decay},
                             {"batch_size", c.batch_size},
                             {"steps", c.steps},
                             {"eval_interval", c.eval_interval},
                             {"rew_aux", {{"learning_rate", c.rew_aux.learning_rate},
                                          {"batch_size", c.rew_aux.batch_size},
                                          {"steps", c.rew_aux.steps}}}};
    std::ofstream(config, std::ios::binary) << j.dump(2) << "\n";
  }

  run.check(1, "HSIC_b equals trace and double-sum oracles", 10, hsic_oracles);
  run.check(2, "training-loss gradient matches finite differences", 30, training_gradient);
  run.check(3, "LogME fixed point matches evidence grid search", 60, logme_grid);
  run.check(4, "diversity-shift calibration", 60, diversity_calibration);
  run.check(5, "correlation-shift calibration", 120, correlation_calibration);
  run.check(6, "zoo recovery of planted auxiliaries", 300, zoo_recovery);

  const auto t0 = std::chrono::steady_clock::now();
  BenchmarkMeans bench;
  try {
    bench = run_benchmark(scratch, config);
  } catch (const std::exception& e) {
    bench = {false, std::string("exception: ") + e.what(), {}, {}, {}};
  }
  const double bench_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Verdict v7, v8;
  if (!bench.ok) {
    v7 = v8 = {false, bench.error};
  } else {
    v7.pass = bench.f_div["hsic"] < bench.f_div["erm"] && bench.f_cor["rew"] < bench.f_cor["erm"];
    v7.detail = fmt("logit F_div hsic %.4f < erm %.4f; logit F_cor rew %.4f < erm %.4f", bench.f_div["hsic"],
                    bench.f_div["erm"], bench.f_cor["rew"], bench.f_cor["erm"]);
    const double margin = 100.0 * (bench.acc["both"] - bench.acc["erm"]);
    v8.pass = margin >= 2.0;
    v8.detail = fmt("target acc both %.4f vs erm %.4f, margin %+.2f points (need >= 2)", bench.acc["both"],
                    bench.acc["erm"], margin);
    v8.detail += fmt("; rew %.4f, hsic %.4f", bench.acc["rew"], bench.acc["hsic"]);
  }
  // both criteria share one 5-seed benchmark run
  run.report(7, "auxiliary terms lower the targeted logit shift (5 seeds)", v7, bench_secs, 600);
  run.report(8, "both beats erm on target accuracy (5 seeds)", v8, bench_secs, 600);

  run.check(9, "both with lambda=0, T=inf reproduces erm", 0, [&] { return reduction_identity(scratch, config); });
  run.check(10, "CLI determinism and binary format round trips", 0,
            [&] { return determinism_and_format(scratch, config); });

  std::printf("%d of 10 criteria failed\n", run.failed);
  return run.failed == 0 ? 0 : 1;
}
