#include "shiftzoo/shift_profiler.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "shiftzoo/error.hpp"

namespace shiftzoo {
namespace {

/// Per-domain quantities that every pair of the domain reuses.
struct DomainFit {
  GaussianProfile gaussian;
  EvidenceModel evidence;
};

DomainFit fit_domain(const DomainFeatures& d, std::size_t n_classes, const ProfilerOptions& options) {
  if (d.train.rows() < 2)
    throw ValidationError("domain '" + d.id + "' has fewer than 2 training rows");
  DomainFit fit;
  fit.gaussian = build_profile(d.train, d.validation, options.shrinkage);
  fit.evidence = logme_fit(d.train, one_hot(d.train_labels, n_classes), options.logme);
  return fit;
}

PairShift shift_for_pair(const std::string& encoder_id, const DomainFeatures& a,
                         const DomainFeatures& b, const DomainFit& fa, const DomainFit& fb,
                         const ProfilerOptions& options) {
  PairShift out;
  const auto a_escapes = escape_mask(fb.gaussian, a.train);
  const auto b_escapes = escape_mask(fa.gaussian, b.train);
  out.diversity = diversity_shift(fa.gaussian, fb.gaussian, a.train, b.train);
  out.correlation = correlation_shift(fa.evidence, fb.evidence, a.train, a.train_labels, b.train,
                                      b.train_labels, a_escapes, b_escapes, options.bins);
  for (auto* ids : {&out.diversity.encoder_id, &out.correlation.encoder_id}) *ids = encoder_id;
  out.diversity.domain_a = out.correlation.domain_a = a.id;
  out.diversity.domain_b = out.correlation.domain_b = b.id;
  return out;
}

void finish_averages(EncoderShift& shift) {
  if (shift.pairs.empty()) return;
  double div = 0.0;
  double cor = 0.0;
  for (const auto& p : shift.pairs) {
    div += p.diversity.f_div;
    cor += p.correlation.f_cor;
  }
  shift.f_div = div / static_cast<double>(shift.pairs.size());
  shift.f_cor = cor / static_cast<double>(shift.pairs.size());
}

/// Domain indices ordered by id, so pair order and averages do not depend on input order.
std::vector<std::size_t> order_by_id(const std::vector<std::string>& ids) {
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  for (std::size_t k = 1; k < order.size(); ++k)
    if (ids[order[k]] == ids[order[k - 1]])
      throw ValidationError("duplicate domain id '" + ids[order[k]] + "'");
  return order;
}

}  // namespace

DomainFeatures DomainFeatures::from(const FeatureSet& fs) {
  return {fs.domain_id, fs.training_rows(), fs.training_labels(), fs.validation_rows()};
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::pair<std::size_t, std::size_t>> domain_pairs(std::size_t n_domains) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n_domains; ++i)
    for (std::size_t j = i + 1; j < n_domains; ++j) pairs.emplace_back(i, j);
  return pairs;
}

EncoderShift profile_encoder(const std::string& encoder_id, const std::vector<DomainFeatures>& domains,
                             std::size_t n_classes, const ProfilerOptions& options) {
  if (domains.size() < 2) throw ValidationError("profiling needs at least 2 domains");
  std::vector<DomainFit> fits(domains.size());
  parallel_for(domains.size(), options.jobs,
               [&](std::size_t i) { fits[i] = fit_domain(domains[i], n_classes, options); });
  std::vector<std::string> ids;
  for (const auto& d : domains) ids.push_back(d.id);
  const auto order = order_by_id(ids);
  const auto pairs = domain_pairs(domains.size());
  EncoderShift shift;
  shift.encoder_id = encoder_id;
  shift.pairs.resize(pairs.size());
  parallel_for(pairs.size(), options.jobs, [&](std::size_t k) {
    const std::size_t i = order[pairs[k].first];
    const std::size_t j = order[pairs[k].second];
    shift.pairs[k] = shift_for_pair(encoder_id, domains[i], domains[j], fits[i], fits[j], options);
  });
  finish_averages(shift);
  return shift;
}

std::vector<EncoderShift> profile_manifest(const ZooManifest& manifest,
                                           const std::vector<std::string>& encoder_ids,
                                           const ProfilerOptions& options) {
  if (manifest.domains.size() < 2) throw ValidationError("profiling needs at least 2 domains");
  std::vector<std::string> ids = encoder_ids;
  if (ids.empty())
    for (const auto& e : manifest.encoders) ids.push_back(e.id);
  for (const auto& id : ids) (void)manifest.encoder(id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  const std::size_t n_dom = manifest.domains.size();
  std::vector<std::string> domain_ids;
  for (const auto& d : manifest.domains) domain_ids.push_back(d.id);
  const auto order = order_by_id(domain_ids);
  const auto pairs = domain_pairs(n_dom);

  // Stage 1: load and fit every (encoder, domain) cell.
  std::vector<DomainFeatures> data(ids.size() * n_dom);
  std::vector<DomainFit> fits(ids.size() * n_dom);
  parallel_for(data.size(), options.jobs, [&](std::size_t cell) {
    const auto& enc = ids[cell / n_dom];
    const auto& dom = manifest.domains[cell % n_dom].id;
    data[cell] = DomainFeatures::from(load_feature_set(manifest, enc, dom));
    fits[cell] = fit_domain(data[cell], manifest.n_classes, options);
  });

  // Stage 2: every (encoder, pair) cell.
  std::vector<EncoderShift> out(ids.size());
  for (std::size_t e = 0; e < ids.size(); ++e) {
    out[e].encoder_id = ids[e];
    out[e].pairs.resize(pairs.size());
  }
  parallel_for(ids.size() * pairs.size(), options.jobs, [&](std::size_t cell) {
    const std::size_t e = cell / pairs.size();
    const std::size_t i = order[pairs[cell % pairs.size()].first];
    const std::size_t j = order[pairs[cell % pairs.size()].second];
    out[e].pairs[cell % pairs.size()] =
        shift_for_pair(ids[e], data[e * n_dom + i], data[e * n_dom + j], fits[e * n_dom + i],
                       fits[e * n_dom + j], options);
  });
  for (auto& s : out) finish_averages(s);
  return out;
}

DiversityProfile profile_dataset_diversity(const ZooManifest& manifest, const std::string& encoder_id,
                                           const ProfilerOptions& options) {
  const auto shift = profile_manifest(manifest, {encoder_id}, options).front();
  DiversityProfile out;
  for (const auto& p : shift.pairs) out.pairs.push_back(p.diversity);
  out.average = shift.f_div;
  return out;
}

CorrelationProfile profile_dataset_correlation(const ZooManifest& manifest,
                                               const std::string& encoder_id,
                                               const ProfilerOptions& options) {
  const auto shift = profile_manifest(manifest, {encoder_id}, options).front();
  CorrelationProfile out;
  for (const auto& p : shift.pairs) out.pairs.push_back(p.correlation);
  out.average = shift.f_cor;
  return out;
}

}  // namespace shiftzoo
