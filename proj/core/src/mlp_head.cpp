#include "shiftzoo/mlp_head.hpp"

#include <cmath>

#include "shiftzoo/error.hpp"

namespace shiftzoo {
namespace {

DenseLayer init_layer(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-bound, bound);
  return layer;
}

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x * layer.weight.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

}  // namespace

HeadTensors HeadTensors::zeros_like(const std::vector<DenseLayer>& layers) {
  HeadTensors t;
  for (const auto& l : layers)
    t.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  return t;
}

Eigen::Index HeadTensors::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

MlpHead::MlpHead(Eigen::Index in_dim, Eigen::Index hidden1, Eigen::Index hidden2,
                 Eigen::Index n_classes, std::uint64_t seed) {
  if (in_dim < 1 || hidden1 < 1 || hidden2 < 1 || n_classes < 2)
    throw ValidationError("invalid MLP head dimensions");
  Rng rng(seed);
  layers_.push_back(init_layer(in_dim, hidden1, rng));
  layers_.push_back(init_layer(hidden1, hidden2, rng));
  layers_.push_back(init_layer(hidden2, n_classes, rng));
}

MlpHead MlpHead::for_encoder(Eigen::Index in_dim, Eigen::Index n_classes, std::uint64_t seed) {
  const Eigen::Index hidden1 = std::max<Eigen::Index>(1, in_dim / 2);
  const Eigen::Index hidden2 = in_dim == 2048 ? 512 : 256;
  return MlpHead(in_dim, hidden1, hidden2, n_classes, seed);
}

Eigen::MatrixXd MlpHead::logits(const Eigen::MatrixXd& inputs) const {
  return forward(inputs).logits;
}

ForwardCache MlpHead::forward(const Eigen::MatrixXd& inputs, double dropout, Rng* rng) const {
  if (inputs.cols() != in_dim())
    throw ValidationError("dim mismatch: head expects " + std::to_string(in_dim()) +
                          " inputs, got " + std::to_string(inputs.cols()));
  if (dropout > 0.0 && rng == nullptr) throw ValidationError("dropout requires an rng");
  ForwardCache cache;
  cache.input = inputs;
  Eigen::MatrixXd x = inputs;
  for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
    Eigen::MatrixXd pre = affine(layers_[k], x);
    Eigen::MatrixXd post = pre.cwiseMax(0.0);
    if (dropout > 0.0) {
      Eigen::MatrixXd mask(post.rows(), post.cols());
      const double keep_scale = 1.0 / (1.0 - dropout);
      for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = rng->uniform() < dropout ? 0.0 : keep_scale;
      post = post.cwiseProduct(mask);
      cache.masks.push_back(std::move(mask));
    }
    cache.pre.push_back(std::move(pre));
    x = post;
    cache.post.push_back(std::move(post));
  }
  cache.logits = affine(layers_.back(), x);
  return cache;
}

HeadTensors MlpHead::backward(const ForwardCache& cache, const Eigen::MatrixXd& d_logits) const {
  HeadTensors grads = HeadTensors::zeros_like(layers_);
  Eigen::MatrixXd delta = d_logits;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Eigen::MatrixXd& below = k == 0 ? cache.input : cache.post[k - 1];
    grads.layers[k].weight = delta.transpose() * below;
    grads.layers[k].bias = delta.colwise().sum().transpose();
    if (k == 0) break;
    Eigen::MatrixXd d_post = delta * layers_[k].weight;
    if (!cache.masks.empty()) d_post = d_post.cwiseProduct(cache.masks[k - 1]);
    delta = (cache.pre[k - 1].array() > 0.0).select(d_post, 0.0);
  }
  return grads;
}

Eigen::VectorXd MlpHead::flatten() const { return shiftzoo::flatten(HeadTensors{layers_}); }

void MlpHead::unflatten(const Eigen::VectorXd& params) {
  Eigen::Index offset = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = params[offset++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = params[offset++];
  }
  if (offset != params.size()) throw ValidationError("parameter vector length mismatch");
}

Eigen::VectorXd flatten(const HeadTensors& tensors) {
  Eigen::VectorXd out(tensors.parameter_count());
  Eigen::Index offset = 0;
  for (const auto& l : tensors.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) out[offset++] = l.weight.data()[i];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) out[offset++] = l.bias[i];
  }
  return out;
}

AdamW::AdamW(const std::vector<DenseLayer>& shape, AdamOptions options)
    : options_(options),
      first_(HeadTensors::zeros_like(shape)),
      second_(HeadTensors::zeros_like(shape)) {}

void AdamW::step(std::vector<DenseLayer>& params, const HeadTensors& grads) {
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = options_.learning_rate;
  const double decay = 1.0 - lr * options_.weight_decay;

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    if (options_.weight_decay != 0.0) p *= decay;
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + options_.epsilon);
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    update(params[k].weight, grads.layers[k].weight, first_.layers[k].weight,
           second_.layers[k].weight);
    update(params[k].bias, grads.layers[k].bias, first_.layers[k].bias, second_.layers[k].bias);
  }
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Eigen::MatrixXd e = shifted.array().exp().matrix();
  const Eigen::VectorXd sums = e.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * e;
}

}  // namespace shiftzoo
