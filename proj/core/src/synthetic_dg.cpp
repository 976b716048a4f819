#include "shiftzoo/synthetic_dg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "shiftzoo/error.hpp"
#include "shiftzoo/rng.hpp"

namespace shiftzoo {
namespace {

/// Class code: coordinates j with j % n_classes == cls. Narrow blocks (dim < n_classes)
/// share coordinates between classes and separate them by sign instead.
void add_code(Eigen::Ref<Eigen::RowVectorXd> out, std::size_t cls, std::size_t n_classes,
              double scale) {
  const auto dim = static_cast<std::size_t>(out.size());
  if (dim >= n_classes) {
    for (std::size_t j = cls; j < dim; j += n_classes) out[static_cast<Eigen::Index>(j)] += scale;
    return;
  }
  const double sign = (cls / dim) % 2 == 0 ? 1.0 : -1.0;
  out[static_cast<Eigen::Index>(cls % dim)] += sign * scale;
}

std::vector<std::size_t> block_dims(const SynthSpec& spec, Block block) {
  std::size_t begin = 0;
  std::size_t len = spec.dim_core;
  if (block == Block::kDiv) {
    begin = spec.dim_core;
    len = spec.dim_div;
  } else if (block == Block::kSpur) {
    begin = spec.dim_core + spec.dim_div;
    len = spec.dim_spur;
  }
  std::vector<std::size_t> dims(len);
  for (std::size_t i = 0; i < len; ++i) dims[i] = begin + i;
  return dims;
}

SynthEncoder make_encoder(const SynthSpec& spec, std::string id, std::string role,
                          std::vector<std::size_t> raw_dims) {
  std::sort(raw_dims.begin(), raw_dims.end());
  SynthEncoder enc;
  enc.id = std::move(id);
  enc.role = std::move(role);
  enc.raw_dims = std::move(raw_dims);
  const auto k = static_cast<Eigen::Index>(enc.raw_dims.size());
  Rng rng(derive_seed(spec.seed, "encoder/" + enc.id));
  enc.projection.resize(k, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (Eigen::Index i = 0; i < enc.projection.size(); ++i)
    enc.projection.data()[i] = scale * rng.normal();
  return enc;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_domains < 2) throw ValidationError("synthetic spec needs at least 2 domains");
  if (n_classes < 2) throw ValidationError("synthetic spec needs at least 2 classes");
  if (dim_core + dim_div + dim_spur == 0)
    throw ValidationError("synthetic spec needs at least one non-empty feature block");
  if (spur_strength.size() != n_domains)
    throw ValidationError("spur_strength needs one entry per domain (" +
                          std::to_string(n_domains) + ")");
  for (const double s : spur_strength)
    if (!(s >= -1.0 && s <= 1.0)) throw ValidationError("spur_strength entries must lie in [-1, 1]");
  if (!(noise_sigma > 0.0)) throw ValidationError("noise_sigma must be > 0");
  if (samples_per_domain < 4) throw ValidationError("samples_per_domain must be >= 4");
}

Eigen::MatrixXd SynthEncoder::encode(const Eigen::MatrixXd& raw_inputs) const {
  Eigen::MatrixXd selected(raw_inputs.rows(), static_cast<Eigen::Index>(raw_dims.size()));
  for (std::size_t j = 0; j < raw_dims.size(); ++j)
    selected.col(static_cast<Eigen::Index>(j)) = raw_inputs.col(static_cast<Eigen::Index>(raw_dims[j]));
  Eigen::MatrixXd out = selected * projection.transpose();
  const double slope = negative_slope;
  return out.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
}

bool SynthEncoder::passes(const SynthSpec& spec, Block block) const {
  const auto dims = block_dims(spec, block);
  return std::any_of(dims.begin(), dims.end(), [&](std::size_t d) {
    return std::find(raw_dims.begin(), raw_dims.end(), d) != raw_dims.end();
  });
}

std::string domain_name(std::size_t index) { return "d" + std::to_string(index); }

SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  SynthDataset data;
  data.spec = spec;
  const auto n = spec.samples_per_domain;
  const auto C = spec.n_classes;
  const auto core_end = static_cast<Eigen::Index>(spec.dim_core);
  const auto div_end = core_end + static_cast<Eigen::Index>(spec.dim_div);

  for (std::size_t d = 0; d < spec.n_domains; ++d) {
    SynthDomain dom;
    dom.id = domain_name(d);
    Rng rng(derive_seed(spec.seed, "domain/" + dom.id));

    dom.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) dom.labels[i] = static_cast<std::uint32_t>(i % C);
    rng.shuffle(std::span<std::uint32_t>(dom.labels));

    dom.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.raw_dim()));
    const double strength = spec.spur_strength[d];
    const double offset = static_cast<double>(d) * spec.div_offset;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::RowVectorXd row(dom.inputs.cols());
      for (Eigen::Index j = 0; j < row.size(); ++j) row[j] = spec.noise_sigma * rng.normal();
      const std::size_t y = dom.labels[i];
      if (spec.dim_core > 0) add_code(row.segment(0, core_end), y, C, spec.core_separation);
      if (spec.dim_div > 0) row.segment(core_end, div_end - core_end).array() += offset;
      if (spec.dim_spur > 0) {
        std::size_t code = static_cast<std::size_t>(rng.below(C));
        if (rng.uniform() < std::abs(strength)) code = strength >= 0.0 ? y : (y + 1) % C;
        add_code(row.segment(div_end, static_cast<Eigen::Index>(spec.dim_spur)), code, C,
                 spec.spur_separation);
      }
      dom.inputs.row(static_cast<Eigen::Index>(i)) = row;
    }
    data.domains.push_back(std::move(dom));
  }
  return data;
}

std::vector<SynthEncoder> build_zoo(const SynthSpec& spec, std::size_t zoo_size) {
  spec.validate();
  if (zoo_size < 3) throw ValidationError("zoo_size must be >= 3 (clean, div_heavy, cor_heavy)");
  const auto core = block_dims(spec, Block::kCore);
  const auto div = block_dims(spec, Block::kDiv);
  const auto spur = block_dims(spec, Block::kSpur);
  auto join = [](std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  auto head_of = [](const std::vector<std::size_t>& v, std::size_t k) {
    return std::vector<std::size_t>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(k, v.size())));
  };

  std::vector<SynthEncoder> zoo;
  const auto clean_dims = core.empty() ? join(div, spur) : core;
  zoo.push_back(make_encoder(spec, std::string(kCleanEncoder), "clean", clean_dims));
  zoo.push_back(make_encoder(spec, std::string(kDiversityEncoder), "diversity_heavy", join(core, div)));
  zoo.push_back(make_encoder(spec, std::string(kCorrelationEncoder), "correlation_heavy", join(core, spur)));
  if (zoo_size >= 4) {
    // full diversity block, partial spurious block
    const auto half_spur = head_of(spur, (spur.size() + 1) / 2);
    zoo.push_back(make_encoder(spec, std::string(kMainEncoder), "main", join(join(core, div), half_spur)));
  }
  for (std::size_t k = 0; zoo.size() < zoo_size; ++k) {
    const std::string id = "mixed_" + std::to_string(k);
    Rng rng(derive_seed(spec.seed, "zoo/" + id));
    auto pick = [&](std::vector<std::size_t> block) {
      if (block.empty()) return block;
      rng.shuffle(std::span<std::size_t>(block));
      const std::size_t max_take = std::max<std::size_t>(1, block.size() / 2);
      block.resize(1 + static_cast<std::size_t>(rng.below(max_take)));
      return block;
    };
    auto dims = join(join(core, pick(div)), pick(spur));
    zoo.push_back(make_encoder(spec, id, "mixed", std::move(dims)));
  }
  return zoo;
}

std::vector<FeatureSet> extract_features(const SynthDataset& data, const SynthEncoder& encoder,
                                         double split_ratio) {
  std::vector<FeatureSet> out;
  for (const auto& dom : data.domains) {
    FeatureSet fs;
    fs.domain_id = dom.id;
    fs.features = encoder.encode(dom.inputs).cast<float>();
    fs.labels = dom.labels;
    fs.split_mask = make_split_mask(dom.labels.size(), split_ratio, data.spec.dataset_name, dom.id,
                                    data.spec.seed);
    out.push_back(std::move(fs));
  }
  return out;
}

std::string ground_truth_card(const SynthSpec& spec, const std::vector<SynthEncoder>& zoo) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["schema"] = "shiftzoo.ground_truth/1";
  doc["dataset_name"] = spec.dataset_name;
  doc["seed"] = spec.seed;
  doc["spec"] = {{"n_domains", spec.n_domains},
                 {"n_classes", spec.n_classes},
                 {"dim_core", spec.dim_core},
                 {"dim_div", spec.dim_div},
                 {"dim_spur", spec.dim_spur},
                 {"samples_per_domain", spec.samples_per_domain},
                 {"spur_strength", spec.spur_strength},
                 {"div_offset", spec.div_offset},
                 {"core_separation", spec.core_separation},
                 {"spur_separation", spec.spur_separation},
                 {"noise_sigma", spec.noise_sigma}};
  doc["blocks"] = {
      {{"name", "core"}, {"shift", "none"}},
      {{"name", "div"}, {"shift", "diversity"}, {"planted_by", "translation by domain_index * div_offset"}},
      {{"name", "spur"}, {"shift", "correlation"}, {"planted_by", "per-domain label-code strength and sign"}}};
  doc["encoders"] = ordered_json::array();
  for (const auto& e : zoo) {
    ordered_json blocks = ordered_json::array();
    for (const auto& [block, name] : {std::pair{Block::kCore, "core"}, std::pair{Block::kDiv, "div"},
                                      std::pair{Block::kSpur, "spur"}})
      if (e.passes(spec, block)) blocks.push_back(name);
    doc["encoders"].push_back(
        {{"id", e.id}, {"role", e.role}, {"blocks", blocks}, {"raw_dims", e.raw_dims}});
  }
  doc["expected"] = {{"top_diversity", kDiversityEncoder}, {"top_correlation", kCorrelationEncoder}};
  return doc.dump(2) + "\n";
}

ZooManifest write_synthetic_zoo(const SynthSpec& spec, std::size_t zoo_size,
                                const std::filesystem::path& out_dir, double split_ratio) {
  const auto data = generate(spec);
  const auto zoo = build_zoo(spec, zoo_size);

  ZooManifest manifest;
  manifest.dataset_name = spec.dataset_name;
  manifest.n_classes = spec.n_classes;
  manifest.split_ratio = split_ratio;
  manifest.split_seed = spec.seed;
  manifest.base_dir = out_dir;
  for (const auto& dom : data.domains) {
    const std::filesystem::path rel = std::filesystem::path("labels") / (dom.id + ".fzl");
    write_labels(out_dir / rel, dom.labels);
    manifest.domains.push_back({dom.id, dom.labels.size(), rel});
  }
  for (const auto& enc : zoo) {
    EncoderEntry entry{enc.id, static_cast<std::size_t>(enc.projection.rows()), {}};
    for (const auto& fs : extract_features(data, enc, split_ratio)) {
      const std::filesystem::path rel =
          std::filesystem::path("features") / enc.id / (fs.domain_id + ".fzf");
      write_feature_matrix(out_dir / rel, fs.features);
      entry.feature_paths.emplace_back(fs.domain_id, rel);
    }
    manifest.encoders.push_back(std::move(entry));
  }
  write_manifest(out_dir / "manifest.json", manifest);
  {
    std::ofstream card(out_dir / "ground_truth.json", std::ios::binary | std::ios::trunc);
    if (!card) throw Error("cannot write ground-truth card");
    card << ground_truth_card(spec, zoo);
  }
  return manifest;
}

}  // namespace shiftzoo
