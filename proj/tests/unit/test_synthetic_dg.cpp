#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "shiftzoo/error.hpp"
#include "shiftzoo/shift_profiler.hpp"
#include "shiftzoo/synthetic_dg.hpp"

namespace shiftzoo {
namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.samples_per_domain = 600;
  return s;
}

/// Identity-projection encoder over one raw block.
SynthEncoder block_encoder(const SynthSpec& spec, Block block) {
  std::size_t begin = 0, len = spec.dim_core;
  if (block == Block::kDiv) {
    begin = spec.dim_core;
    len = spec.dim_div;
  } else if (block == Block::kSpur) {
    begin = spec.dim_core + spec.dim_div;
    len = spec.dim_spur;
  }
  SynthEncoder e;
  e.id = "probe";
  e.role = "probe";
  for (std::size_t i = 0; i < len; ++i) e.raw_dims.push_back(begin + i);
  e.projection = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(len));
  e.negative_slope = 1.0;
  return e;
}

EncoderShift profile_with(const SynthDataset& data, const SynthEncoder& enc) {
  std::vector<DomainFeatures> doms;
  for (const auto& fs : extract_features(data, enc)) doms.push_back(DomainFeatures::from(fs));
  return profile_encoder(enc.id, doms, data.spec.n_classes);
}

TEST(SynthSpec, Validation) {
  EXPECT_NO_THROW(SynthSpec{}.validate());
  SynthSpec s;
  s.spur_strength = {0.9, 0.8};
  EXPECT_THROW(s.validate(), ValidationError);
  s = SynthSpec{};
  s.spur_strength = {0.9, 1.5, 0.0};
  EXPECT_THROW(s.validate(), ValidationError);
  s = SynthSpec{};
  s.n_classes = 1;
  EXPECT_THROW(s.validate(), ValidationError);
  s = SynthSpec{};
  s.dim_core = s.dim_div = s.dim_spur = 0;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Generate, LabelsAreBalancedPerDomain) {
  const auto data = generate(small_spec());
  ASSERT_EQ(data.domains.size(), 3u);
  for (const auto& d : data.domains) {
    EXPECT_EQ(d.inputs.rows(), 600);
    EXPECT_EQ(d.inputs.cols(), 16);
    std::vector<int> counts(4, 0);
    for (const auto y : d.labels) ++counts[y];
    for (const int c : counts) EXPECT_NEAR(c / 600.0, 0.25, 0.02);
  }
  EXPECT_EQ(data.domains[2].id, "d2");
}

TEST(Generate, SeededAndDeterministic) {
  const auto a = generate(small_spec());
  const auto b = generate(small_spec());
  for (std::size_t d = 0; d < a.domains.size(); ++d) {
    EXPECT_EQ(a.domains[d].inputs, b.domains[d].inputs);
    EXPECT_EQ(a.domains[d].labels, b.domains[d].labels);
  }
  SynthSpec other = small_spec();
  other.seed = 1;
  EXPECT_NE(generate(other).domains[0].inputs, a.domains[0].inputs);
}

TEST(Generate, ZeroOffsetDiversityBlockIsIid) {
  SynthSpec s = small_spec();
  s.div_offset = 0.0;
  s.samples_per_domain = 2000;
  const auto shift = profile_with(generate(s), block_encoder(s, Block::kDiv));
  for (const auto& p : shift.pairs) EXPECT_LT(p.diversity.f_div, 0.04);
}

TEST(Generate, LargeOffsetSeparatesDiversityBlock) {
  SynthSpec s = small_spec();
  s.div_offset = 100.0;
  const auto shift = profile_with(generate(s), block_encoder(s, Block::kDiv));
  for (const auto& p : shift.pairs) EXPECT_GE(p.diversity.f_div, 0.99);
}

TEST(Generate, OppositeSpuriousCodesGiveCorrelationShift) {
  SynthSpec s = small_spec();
  s.n_domains = 2;
  s.spur_strength = {1.0, -1.0};
  s.samples_per_domain = 1000;
  const auto shift = profile_with(generate(s), block_encoder(s, Block::kSpur));
  ASSERT_EQ(shift.pairs.size(), 1u);
  EXPECT_GE(shift.f_cor, 0.8);
  // spurious marginal is shared, so the diversity score stays small
  EXPECT_LT(shift.f_div, 0.05);
}

TEST(Zoo, PlantedRolesAndSizes) {
  const auto spec = small_spec();
  EXPECT_THROW(build_zoo(spec, 2), ValidationError);
  const auto zoo = build_zoo(spec, 6);
  ASSERT_EQ(zoo.size(), 6u);
  EXPECT_EQ(zoo[0].id, "clean");
  EXPECT_EQ(zoo[1].id, "div_heavy");
  EXPECT_EQ(zoo[2].id, "cor_heavy");
  EXPECT_EQ(zoo[3].id, "main");
  EXPECT_EQ(zoo[4].id, "mixed_0");
  EXPECT_FALSE(zoo[0].passes(spec, Block::kDiv));
  EXPECT_FALSE(zoo[0].passes(spec, Block::kSpur));
  EXPECT_TRUE(zoo[1].passes(spec, Block::kDiv));
  EXPECT_FALSE(zoo[1].passes(spec, Block::kSpur));
  EXPECT_TRUE(zoo[2].passes(spec, Block::kSpur));
  EXPECT_FALSE(zoo[2].passes(spec, Block::kDiv));
  for (const auto& e : zoo) EXPECT_EQ(e.projection.rows(), static_cast<Eigen::Index>(e.raw_dims.size()));
}

TEST(Zoo, HeavyEncodersCarryTheirShift) {
  const auto spec = small_spec();
  const auto data = generate(spec);
  const auto zoo = build_zoo(spec, 3);
  const auto clean = profile_with(data, zoo[0]);
  const auto div = profile_with(data, zoo[1]);
  const auto cor = profile_with(data, zoo[2]);
  EXPECT_GT(div.f_div, clean.f_div + 0.2);
  EXPECT_GT(cor.f_cor, clean.f_cor + 0.1);
}

TEST(Zoo, WrittenFilesValidateAndRepeat) {
  oracle::TempDir a("synth_a"), b("synth_b");
  SynthSpec spec = small_spec();
  spec.samples_per_domain = 100;
  const auto m = write_synthetic_zoo(spec, 5, a.path());
  write_synthetic_zoo(spec, 5, b.path());
  const auto loaded = read_manifest(a.path() / "manifest.json");
  EXPECT_EQ(loaded.encoders.size(), 5u);
  EXPECT_EQ(loaded.domains.size(), 3u);
  EXPECT_EQ(m.dataset_name, "synthetic");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  for (const auto& rel : {"manifest.json", "ground_truth.json", "labels/d1.fzl", "features/main/d2.fzf"})
    EXPECT_EQ(slurp(a.path() / rel), slurp(b.path() / rel)) << rel;
  const auto fs = load_feature_set(loaded, "div_heavy", "d0");
  EXPECT_EQ(fs.size(), 100u);
  EXPECT_EQ(fs.validation_count(), 20u);
}

}  // namespace
}  // namespace shiftzoo
