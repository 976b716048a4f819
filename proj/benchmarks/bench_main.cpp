#include <benchmark/benchmark.h>

#include "shiftzoo/correlation_profile.hpp"
#include "shiftzoo/ensemble_train.hpp"
#include "shiftzoo/gaussian_profile.hpp"
#include "shiftzoo/hsic.hpp"
#include "shiftzoo/rng.hpp"

namespace {

using namespace shiftzoo;

Eigen::MatrixXd noise(Rng& rng, Eigen::Index rows, Eigen::Index cols, double shift = 0.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() + shift;
  return m;
}

void BM_HsicValueGrad(benchmark::State& state) {
  const auto m = static_cast<Eigen::Index>(state.range(0));
  Rng rng(1);
  const Eigen::MatrixXd zl = noise(rng, m, 4);
  const Eigen::MatrixXd zd = noise(rng, m, 16);
  const KernelSpec sl{0.5, 4}, sk{0.25, 16};
  for (auto _ : state) {
    const auto vg = hsic_b_value_grad(zl, double_center(gaussian_kernel_matrix(zd, sk)), sl);
    benchmark::DoNotOptimize(vg.value);
  }
}
BENCHMARK(BM_HsicValueGrad)->Arg(16)->Arg(64)->Arg(256);

void BM_LogmeFit(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(2);
  const Eigen::MatrixXd f = noise(rng, n, 16);
  std::vector<std::uint32_t> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<std::uint32_t>(rng.below(4));
  const Eigen::MatrixXd y = one_hot(labels, 4);
  for (auto _ : state) benchmark::DoNotOptimize(logme_fit(f, y).weights.data());
}
BENCHMARK(BM_LogmeFit)->Arg(500)->Arg(2000);

void BM_DiversityShift(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(3);
  const auto pa = build_profile(noise(rng, n, 16), noise(rng, n / 4, 16));
  const auto pb = build_profile(noise(rng, n, 16, 0.5), noise(rng, n / 4, 16, 0.5));
  const Eigen::MatrixXd a = noise(rng, n, 16), b = noise(rng, n, 16, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(diversity_shift(pa, pb, a, b).f_div);
}
BENCHMARK(BM_DiversityShift)->Arg(2000);

void BM_TrainStep(benchmark::State& state) {
  Rng rng(4);
  MlpHead head = MlpHead::for_encoder(14, 4, 5);
  AdamW adam(head.layers(), {});
  TrainBatch batch;
  batch.inputs = noise(rng, 16, 14);
  for (int i = 0; i < 16; ++i) batch.labels.push_back(static_cast<std::uint32_t>(i % 4));
  batch.div_features = noise(rng, 16, 12);
  batch.raw_weights = Eigen::VectorXd::Ones(16);
  TrainConfig config;
  config.n_warmup = 0;
  config.n_anneal = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(head, adam, batch, config, 1).total);
}
BENCHMARK(BM_TrainStep);

}  // namespace

// The packaged benchmark_main archive carries LTO bytecode from another compiler release.
BENCHMARK_MAIN();
