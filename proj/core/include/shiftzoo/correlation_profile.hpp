#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace shiftzoo {

inline constexpr int kDefaultCalibrationBins = 10;

struct LogmeOptions {
  double tolerance = 1e-6;  // relative change of alpha and beta
  int max_iterations = 100;
  double residual_floor = 1e-12;
};

/// Evidence-maximized Bayesian linear regression of one one-hot label column.
struct ClassEvidence {
  Eigen::VectorXd weights;  // posterior mean
  double alpha = 1.0;       // prior precision
  double beta = 1.0;        // noise precision
  double log_evidence = 0.0;
  int iterations = 0;
  bool degenerate = false;  // a denominator hit its floor
  std::vector<double> evidence_history;  // L(alpha, beta) at the start and after every update
};

/// Per-class LogME fits; row i of `weights` scores class i.
struct EvidenceModel {
  Eigen::MatrixXd weights;  // n_classes x dim
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  Eigen::VectorXd log_evidence;
  bool degenerate = false;

  Eigen::Index n_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }
};

/// Bin-accuracy recalibration of an EvidenceModel's normalized scores.
struct CalibratedConditional {
  EvidenceModel raw_model;
  int bins = kDefaultCalibrationBins;
  Eigen::MatrixXi bin_count;  // bins x n_classes
  Eigen::MatrixXi bin_hits;   // rows in the bin whose true label is the column class

  bool empty(int bin, Eigen::Index cls) const { return bin_count(bin, cls) == 0; }
  double bin_accuracy(int bin, Eigen::Index cls) const;
  /// Calibrated p(y | z) for every class; empty bins fall back to the raw value.
  Eigen::VectorXd probabilities(const Eigen::VectorXd& z) const;
};

struct CorrelationEstimate {
  std::string encoder_id;
  std::string domain_a;
  std::string domain_b;
  double f_cor = 0.0;
  std::size_t overlap_count = 0;
  bool empty_overlap = false;
};

/// Fixed-point evidence maximization for a single target column.
ClassEvidence logme_fit_column(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                               const LogmeOptions& options = {});

/// features: n x d; one_hot: n x n_classes with a single 1 per row.
EvidenceModel logme_fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& one_hot,
                        const LogmeOptions& options = {});

Eigen::MatrixXd one_hot(const std::vector<std::uint32_t>& labels, std::size_t n_classes);

/// Clamp-at-zero then sum-normalize; all-zero scores map to the uniform vector.
Eigen::VectorXd normalize_scores(const Eigen::VectorXd& scores);

Eigen::VectorXd predict_tilde(const EvidenceModel& model, const Eigen::VectorXd& z);

/// Equal-width bin index of p in [0, 1].
int bin_index(double p, int bins);

CalibratedConditional calibrate(const EvidenceModel& model, const Eigen::MatrixXd& overlap_rows,
                                const std::vector<std::uint32_t>& overlap_labels, int bins);

/// Conditional with every bin empty: queries return the raw normalized scores.
CalibratedConditional uncalibrated(const EvidenceModel& model, int bins);

/// Inputs are each domain's training rows and the escape masks from the diversity pass
/// (a_escapes[i]: row i of a lies outside b's support, and vice versa).
CorrelationEstimate correlation_shift(const EvidenceModel& model_a, const EvidenceModel& model_b,
                                      const Eigen::MatrixXd& data_a,
                                      const std::vector<std::uint32_t>& labels_a,
                                      const Eigen::MatrixXd& data_b,
                                      const std::vector<std::uint32_t>& labels_b,
                                      const std::vector<bool>& a_escapes,
                                      const std::vector<bool>& b_escapes,
                                      int bins = kDefaultCalibrationBins);

}  // namespace shiftzoo
