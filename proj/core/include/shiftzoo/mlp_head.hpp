#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "shiftzoo/rng.hpp"

namespace shiftzoo {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Same shapes as MlpHead; holds gradients or optimizer moments.
struct HeadTensors {
  std::vector<DenseLayer> layers;

  static HeadTensors zeros_like(const std::vector<DenseLayer>& layers);
  Eigen::Index parameter_count() const;
};

/// Activations kept by forward() for the backward pass.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;    // pre-activation per hidden layer
  std::vector<Eigen::MatrixXd> post;   // post-activation (after dropout) per hidden layer
  std::vector<Eigen::MatrixXd> masks;  // dropout masks already scaled by 1/(1-p); empty if off
  Eigen::MatrixXd logits;
};

/// Three dense layers with ReLU between them: in -> h1 -> h2 -> n_classes.
class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(Eigen::Index in_dim, Eigen::Index hidden1, Eigen::Index hidden2, Eigen::Index n_classes,
          std::uint64_t seed);

  /// Standard sizing for an encoder of width in_dim: hidden1 = in_dim / 2,
  /// hidden2 = 256 (512 for 2048-wide encoders).
  static MlpHead for_encoder(Eigen::Index in_dim, Eigen::Index n_classes, std::uint64_t seed);

  Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const;

  /// dropout > 0 draws masks from rng; rng may be null when dropout == 0.
  ForwardCache forward(const Eigen::MatrixXd& inputs, double dropout = 0.0,
                       Rng* rng = nullptr) const;
  HeadTensors backward(const ForwardCache& cache, const Eigen::MatrixXd& d_logits) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index n_classes() const { return layers_.back().out_dim(); }

  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& params);

 private:
  std::vector<DenseLayer> layers_;
};

Eigen::VectorXd flatten(const HeadTensors& tensors);

struct AdamOptions {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

class AdamW {
 public:
  AdamW() = default;
  AdamW(const std::vector<DenseLayer>& shape, AdamOptions options);

  void step(std::vector<DenseLayer>& params, const HeadTensors& grads);
  std::int64_t steps_taken() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  HeadTensors first_;
  HeadTensors second_;
  std::int64_t t_ = 0;
};

/// Row-wise numerically stable softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

}  // namespace shiftzoo
