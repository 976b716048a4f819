#include "shiftzoo/ensemble_train.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "shiftzoo/error.hpp"

namespace shiftzoo {
namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& source, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), source.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

/// Row-wise cross-entropy and its gradient with respect to logits (unweighted, unscaled).
struct SoftmaxCe {
  Eigen::VectorXd loss;
  Eigen::MatrixXd d_logits;
};

SoftmaxCe softmax_cross_entropy(const Eigen::MatrixXd& logits,
                                const std::vector<std::uint32_t>& labels) {
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  const Eigen::MatrixXd shifted = logits.colwise() - row_max;
  const Eigen::VectorXd log_norm = shifted.array().exp().rowwise().sum().log().matrix();
  SoftmaxCe out;
  out.loss.resize(logits.rows());
  out.d_logits = softmax_rows(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    out.loss[i] = log_norm[i] - shifted(i, y);
    out.d_logits(i, y) -= 1.0;
  }
  return out;
}

Eigen::MatrixXd to_double(const FeatureMatrix& m) { return m.cast<double>(); }

}  // namespace

void RewAuxConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("rew-aux learning rate must be > 0");
  if (batch_size < 1) throw ValidationError("rew-aux batch size must be >= 1");
  if (steps < 1) throw ValidationError("rew-aux steps must be >= 1");
  if (weight_decay < 0.0) throw ValidationError("rew-aux weight decay must be >= 0");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!(gamma1 > 0.0) || !(gamma2 > 0.0)) throw ValidationError("gamma1 and gamma2 must be > 0");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0 or inf");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (steps < 1) throw ValidationError("steps must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (eval_interval < 1) throw ValidationError("eval interval must be >= 1");
  rew_aux.validate();
}

Eigen::MatrixXd RewAuxiliary::predict_proba(const Eigen::MatrixXd& aux_features) const {
  Eigen::MatrixXd logits = aux_features * classifier.weight.transpose();
  logits.rowwise() += classifier.bias.transpose();
  return softmax_rows(logits);
}

RewAuxiliary train_rew_auxiliary(const Eigen::MatrixXd& aux_features,
                                 const std::vector<std::uint32_t>& labels, std::size_t n_classes,
                                 const RewAuxConfig& config, std::uint64_t seed) {
  config.validate();
  if (static_cast<std::size_t>(aux_features.rows()) != labels.size() || labels.empty())
    throw ValidationError("rew auxiliary: features and labels differ in length or are empty");

  RewAuxiliary aux;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_classes));
  for (const auto y : labels) {
    if (y >= n_classes) throw ValidationError("label out of range");
    counts[y] += 1.0;
  }
  if ((counts.array() > 0.0).count() < 2)
    throw ValidationError("rew auxiliary needs at least 2 classes in the training data");
  for (Eigen::Index c = 0; c < counts.size(); ++c)
    if (counts[c] == 0.0)
      aux.warnings.push_back("class " + std::to_string(c) +
                             " absent from reweight-auxiliary training data; prior floored");
  aux.class_prior = (counts / static_cast<double>(labels.size())).cwiseMax(kProbabilityFloor);
  aux.class_prior /= aux.class_prior.sum();

  const auto classes = static_cast<Eigen::Index>(n_classes);
  std::vector<DenseLayer> params{
      {Eigen::MatrixXd::Zero(classes, aux_features.cols()), Eigen::VectorXd::Zero(classes)}};
  AdamW optimizer(params, {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng rng(seed);
  auto order = rng.permutation(labels.size());
  const std::size_t batch = std::min(config.batch_size, labels.size());
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (cursor + batch > order.size()) {
      rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    const std::span<const std::size_t> idx(order.data() + cursor, batch);
    cursor += batch;
    const Eigen::MatrixXd x = gather_rows(aux_features, idx);
    std::vector<std::uint32_t> y;
    for (const auto i : idx) y.push_back(labels[i]);
    Eigen::MatrixXd logits = x * params[0].weight.transpose();
    logits.rowwise() += params[0].bias.transpose();
    const auto ce = softmax_cross_entropy(logits, y);
    const Eigen::MatrixXd d = ce.d_logits / static_cast<double>(batch);
    HeadTensors grad{{{d.transpose() * x, d.colwise().sum().transpose()}}};
    optimizer.step(params, grad);
  }
  aux.classifier = std::move(params[0]);
  return aux;
}

double raw_weight(double prior, double p_c_y, double temperature) {
  if (std::isinf(temperature)) return 1.0;
  const double ratio = prior / std::max(p_c_y, kProbabilityFloor);
  return temperature == 1.0 ? ratio : std::pow(ratio, 1.0 / temperature);
}

Eigen::VectorXd batch_weights(const Eigen::VectorXd& raw) {
  const double sum = raw.sum();
  if (!(sum > 0.0)) throw ValidationError("batch weights must be positive");
  return raw * (static_cast<double>(raw.size()) / sum);
}

LossAndGrad batch_loss_and_grad(const MlpHead& head, const TrainBatch& batch,
                                const TrainConfig& config, std::size_t step_index,
                                Rng* dropout_rng) {
  const auto m = batch.inputs.rows();
  if (m < 1 || static_cast<std::size_t>(m) != batch.labels.size())
    throw ValidationError("batch inputs and labels differ in length");
  const ForwardCache cache = head.forward(batch.inputs, config.dropout, dropout_rng);
  const auto ce = softmax_cross_entropy(cache.logits, batch.labels);

  LossAndGrad out;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
  if (batch.raw_weights.size() > 0 && step_index >= config.n_anneal) {
    if (batch.raw_weights.size() != m) throw ValidationError("batch weight count mismatch");
    w = batch_weights(batch.raw_weights);
    out.loss.reweight_active = true;
  }
  const double md = static_cast<double>(m);
  out.loss.ce = w.dot(ce.loss) / md;
  out.loss.mean_weight = w.mean();
  Eigen::MatrixXd d_logits = (w / md).asDiagonal() * ce.d_logits;

  if (config.lambda > 0.0 && step_index >= config.n_warmup && batch.div_features.size() > 0) {
    if (m < 2) throw ValidationError("HSIC needs a batch of at least 2 rows");
    if (batch.div_features.rows() != m) throw ValidationError("auxiliary feature count mismatch");
    const KernelSpec spec_k{config.gamma2, static_cast<int>(batch.div_features.cols())};
    const KernelSpec spec_l{config.gamma1, static_cast<int>(cache.logits.cols())};
    const auto vg = hsic_b_value_grad(cache.logits,
                                      double_center(gaussian_kernel_matrix(batch.div_features, spec_k)),
                                      spec_l);
    out.loss.hsic = vg.value;
    out.loss.hsic_active = true;
    d_logits += config.lambda * vg.grad;
  }
  out.loss.total = out.loss.ce + config.lambda * out.loss.hsic;
  out.grad = head.backward(cache, d_logits);
  return out;
}

LossBreakdown train_step(MlpHead& head, AdamW& optimizer, const TrainBatch& batch,
                         const TrainConfig& config, std::size_t step_index, Rng* dropout_rng) {
  auto lg = batch_loss_and_grad(head, batch, config, step_index, dropout_rng);
  if (!std::isfinite(lg.loss.total))
    throw Error("non-finite loss at step " + std::to_string(step_index) +
                " (ce=" + std::to_string(lg.loss.ce) + ", hsic=" + std::to_string(lg.loss.hsic) +
                ")");
  optimizer.step(head.layers(), lg.grad);
  return lg.loss;
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "erm") return TrainMode::kErm;
  if (text == "rew") return TrainMode::kRew;
  if (text == "hsic") return TrainMode::kHsic;
  if (text == "both") return TrainMode::kBoth;
  throw ValidationError("unknown mode '" + std::string(text) + "' (expected erm|rew|hsic|both)");
}

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kErm: return "erm";
    case TrainMode::kRew: return "rew";
    case TrainMode::kHsic: return "hsic";
    case TrainMode::kBoth: return "both";
  }
  return "erm";
}

double accuracy(const MlpHead& head, const Eigen::MatrixXd& inputs,
                const std::vector<std::uint32_t>& labels) {
  if (labels.empty()) return 0.0;
  const Eigen::MatrixXd logits = head.logits(inputs);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (static_cast<std::uint32_t>(best) == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

struct Pooled {
  Eigen::MatrixXd main;
  Eigen::MatrixXd div;
  Eigen::MatrixXd rew;
  std::vector<std::uint32_t> labels;
};

Eigen::MatrixXd stack_rows(const std::vector<Eigen::MatrixXd>& parts, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

/// Pools rows whose split flag equals `validation` across the given domains.
Pooled pool(const std::vector<const DomainTrainData*>& domains, bool validation, bool want_div,
            bool want_rew) {
  std::vector<Eigen::MatrixXd> main;
  std::vector<Eigen::MatrixXd> div;
  std::vector<Eigen::MatrixXd> rew;
  Pooled out;
  for (const auto* d : domains) {
    main.push_back(validation ? d->main.validation_rows() : d->main.training_rows());
    const auto labels = validation ? d->main.validation_labels() : d->main.training_labels();
    out.labels.insert(out.labels.end(), labels.begin(), labels.end());
    if (want_div) div.push_back(validation ? d->div_aux->validation_rows() : d->div_aux->training_rows());
    if (want_rew) rew.push_back(validation ? d->rew_aux->validation_rows() : d->rew_aux->training_rows());
  }
  out.main = stack_rows(main, domains.front()->main.dim());
  if (want_div) out.div = stack_rows(div, domains.front()->div_aux->dim());
  if (want_rew) out.rew = stack_rows(rew, domains.front()->rew_aux->dim());
  return out;
}

}  // namespace

TrainResult train(const std::vector<DomainTrainData>& domains, const std::string& target_domain,
                  std::size_t n_classes, TrainMode mode, const TrainConfig& config) {
  config.validate();
  const bool use_rew = mode == TrainMode::kRew || mode == TrainMode::kBoth;
  const bool use_hsic = mode == TrainMode::kHsic || mode == TrainMode::kBoth;

  const DomainTrainData* target = nullptr;
  std::vector<const DomainTrainData*> sources;
  for (const auto& d : domains) {
    if (d.main.domain_id == target_domain) {
      target = &d;
      continue;
    }
    if (use_hsic && !d.div_aux) throw ValidationError("mode needs diversity-auxiliary features");
    if (use_rew && !d.rew_aux) throw ValidationError("mode needs reweight-auxiliary features");
    sources.push_back(&d);
  }
  if (target == nullptr) throw ValidationError("unknown target domain '" + target_domain + "'");
  if (sources.empty()) throw ValidationError("no training domains besides the target");

  const Pooled train_rows = pool(sources, false, use_hsic, use_rew);
  const Pooled val_rows = pool(sources, true, false, false);
  const std::size_t n = train_rows.labels.size();
  if (n == 0) throw ValidationError("no training rows");

  TrainResult result;
  result.target_domain = target_domain;

  Eigen::VectorXd raw = Eigen::VectorXd();
  if (use_rew) {
    const auto aux = train_rew_auxiliary(train_rows.rew, train_rows.labels, n_classes,
                                         config.rew_aux, derive_seed(config.seed, "rew_aux"));
    result.warnings = aux.warnings;
    const Eigen::MatrixXd probs = aux.predict_proba(train_rows.rew);
    raw.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto y = train_rows.labels[i];
      const double w = raw_weight(aux.class_prior[y], probs(static_cast<Eigen::Index>(i), y),
                                  config.temperature);
      raw[static_cast<Eigen::Index>(i)] = std::min(w, kMaxRawWeight);
    }
  }

  MlpHead head = MlpHead::for_encoder(train_rows.main.cols(), static_cast<Eigen::Index>(n_classes),
                                      derive_seed(config.seed, "head"));
  AdamW optimizer(head.layers(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng batch_rng(derive_seed(config.seed, "batches"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));

  const Eigen::MatrixXd target_inputs = to_double(target->main.features);
  bool evaluated_once = false;
  auto evaluate = [&](std::size_t steps_done) {
    const double val = accuracy(head, val_rows.main, val_rows.labels);
    if (!evaluated_once || val > result.best_validation_accuracy) {
      result.best_validation_accuracy = val;
      result.target_accuracy_at_best_validation = accuracy(head, target_inputs, target->main.labels);
      result.best_step = steps_done;
    }
    evaluated_once = true;
  };

  auto order = batch_rng.permutation(n);
  const std::size_t batch_size = std::min(config.batch_size, n);
  std::size_t cursor = 0;
  std::vector<std::size_t> idx(batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (cursor + batch_size > n) {
      batch_rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    std::copy_n(order.begin() + static_cast<std::ptrdiff_t>(cursor), batch_size, idx.begin());
    cursor += batch_size;

    TrainBatch batch;
    batch.inputs = gather_rows(train_rows.main, idx);
    for (const auto i : idx) batch.labels.push_back(train_rows.labels[i]);
    if (use_hsic) batch.div_features = gather_rows(train_rows.div, idx);
    if (use_rew) {
      batch.raw_weights.resize(static_cast<Eigen::Index>(batch_size));
      for (std::size_t k = 0; k < batch_size; ++k)
        batch.raw_weights[static_cast<Eigen::Index>(k)] = raw[static_cast<Eigen::Index>(idx[k])];
    }
    const auto loss = train_step(head, optimizer, batch, config, step,
                                 config.dropout > 0.0 ? &dropout_rng : nullptr);
    result.log.push_back({step, loss.total, loss.ce, loss.hsic, loss.mean_weight,
                          config.learning_rate});
    if ((step + 1) % config.eval_interval == 0) evaluate(step + 1);
  }
  if (config.steps % config.eval_interval != 0) evaluate(config.steps);

  result.final_validation_accuracy = accuracy(head, val_rows.main, val_rows.labels);
  result.final_target_accuracy = accuracy(head, target_inputs, target->main.labels);
  result.head = std::move(head);
  return result;
}

TrainResult train(const ZooManifest& manifest, const std::string& main_encoder_id,
                  const std::optional<std::string>& div_aux_id,
                  const std::optional<std::string>& rew_aux_id, const std::string& target_domain,
                  TrainMode mode, const TrainConfig& config) {
  const bool use_rew = mode == TrainMode::kRew || mode == TrainMode::kBoth;
  const bool use_hsic = mode == TrainMode::kHsic || mode == TrainMode::kBoth;
  if (use_hsic && !div_aux_id) throw ValidationError("mode requires --div-aux");
  if (use_rew && !rew_aux_id) throw ValidationError("mode requires --rew-aux");
  (void)manifest.encoder(main_encoder_id);
  if (use_hsic) (void)manifest.encoder(*div_aux_id);
  if (use_rew) (void)manifest.encoder(*rew_aux_id);
  (void)manifest.domain(target_domain);

  std::vector<DomainTrainData> domains;
  for (const auto& d : manifest.domains) {
    DomainTrainData data{load_feature_set(manifest, main_encoder_id, d.id), std::nullopt,
                         std::nullopt};
    if (use_hsic) data.div_aux = load_feature_set(manifest, *div_aux_id, d.id);
    if (use_rew) data.rew_aux = load_feature_set(manifest, *rew_aux_id, d.id);
    domains.push_back(std::move(data));
  }
  return train(domains, target_domain, manifest.n_classes, mode, config);
}

std::string format_log_entry(const TrainLogEntry& e) {
  nlohmann::ordered_json j{{"step", e.step},
                           {"total", e.total},
                           {"ce", e.ce},
                           {"hsic", e.hsic},
                           {"mean_weight", e.mean_weight},
                           {"lr", e.lr}};
  return j.dump();
}

}  // namespace shiftzoo
