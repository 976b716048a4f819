#include "shiftzoo/correlation_profile.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "shiftzoo/error.hpp"

namespace shiftzoo {
namespace {

constexpr double kPrecisionFloor = 1e-12;

/// Shared spectral quantities for every label column of one feature matrix.
struct Spectrum {
  Eigen::VectorXd eigenvalues;   // of F^T F, clamped at 0
  Eigen::MatrixXd eigenvectors;  // columns
};

Spectrum spectrum_of(const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd gram = features.transpose() * features;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw Error("eigendecomposition of F^T F failed");
  return {solver.eigenvalues().cwiseMax(0.0), solver.eigenvectors()};
}

struct EvidenceTerms {
  Eigen::VectorXd m;
  double m_sq = 0.0;
  double residual_sq = 0.0;
  double gamma = 0.0;
  double log_evidence = 0.0;
};

EvidenceTerms evaluate(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                       const Spectrum& spec, const Eigen::VectorXd& projected, double alpha,
                       double beta) {
  const double n = static_cast<double>(features.rows());
  const double d = static_cast<double>(features.cols());
  const Eigen::ArrayXd denom = alpha + beta * spec.eigenvalues.array();
  EvidenceTerms t;
  t.m = spec.eigenvectors * (beta * projected.array() / denom).matrix();
  t.m_sq = t.m.squaredNorm();
  t.residual_sq = (features * t.m - target).squaredNorm();
  t.gamma = (beta * spec.eigenvalues.array() / denom).sum();
  t.log_evidence = 0.5 * n * std::log(beta) + 0.5 * d * std::log(alpha) -
                   0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * beta * t.residual_sq -
                   0.5 * alpha * t.m_sq - 0.5 * denom.log().sum();
  return t;
}

ClassEvidence fit_column(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                         const Spectrum& spec, const LogmeOptions& options) {
  const double n = static_cast<double>(features.rows());
  const Eigen::VectorXd projected = spec.eigenvectors.transpose() * (features.transpose() * target);

  ClassEvidence out;
  double alpha = 1.0;
  double beta = 1.0;
  EvidenceTerms terms = evaluate(features, target, spec, projected, alpha, beta);
  out.evidence_history.push_back(terms.log_evidence);

  for (int it = 1; it <= options.max_iterations; ++it) {
    double m_sq = terms.m_sq;
    double residual_sq = terms.residual_sq;
    if (m_sq < options.residual_floor) {
      m_sq = options.residual_floor;
      out.degenerate = true;
    }
    if (residual_sq < options.residual_floor) {
      residual_sq = options.residual_floor;
      out.degenerate = true;
    }
    double next_alpha = terms.gamma / m_sq;
    double next_beta = (n - terms.gamma) / residual_sq;
    if (next_alpha < kPrecisionFloor) {
      next_alpha = kPrecisionFloor;
      out.degenerate = true;
    }
    if (next_beta < kPrecisionFloor) {
      next_beta = kPrecisionFloor;
      out.degenerate = true;
    }
    const double da = std::abs(next_alpha - alpha) / alpha;
    const double db = std::abs(next_beta - beta) / beta;
    EvidenceTerms next = evaluate(features, target, spec, projected, next_alpha, next_beta);
    // When the supremum sits at alpha -> inf the floors can make the update cycle; an update
    // that lowers the evidence is rejected and the best point so far is kept.
    if (next.log_evidence < terms.log_evidence) {
      out.degenerate = true;
      break;
    }
    alpha = next_alpha;
    beta = next_beta;
    terms = std::move(next);
    out.evidence_history.push_back(terms.log_evidence);
    out.iterations = it;
    if (da < options.tolerance && db < options.tolerance) break;
  }

  out.weights = terms.m;
  out.alpha = alpha;
  out.beta = beta;
  out.log_evidence = terms.log_evidence;
  return out;
}

void require_fit_shape(const Eigen::MatrixXd& features) {
  if (features.rows() < 2)
    throw ValidationError("logme_fit needs at least 2 rows, got " + std::to_string(features.rows()));
  if (features.cols() < 1) throw ValidationError("logme_fit needs at least one feature column");
}

}  // namespace

ClassEvidence logme_fit_column(const Eigen::MatrixXd& features, const Eigen::VectorXd& target,
                               const LogmeOptions& options) {
  require_fit_shape(features);
  if (target.size() != features.rows()) throw ValidationError("target length differs from rows");
  return fit_column(features, target, spectrum_of(features), options);
}

EvidenceModel logme_fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& one_hot_labels,
                        const LogmeOptions& options) {
  require_fit_shape(features);
  if (one_hot_labels.rows() != features.rows())
    throw ValidationError("label rows differ from feature rows");
  for (Eigen::Index r = 0; r < one_hot_labels.rows(); ++r) {
    const auto row = one_hot_labels.row(r);
    const bool binary = ((row.array() == 0.0) || (row.array() == 1.0)).all();
    if (!binary || row.sum() != 1.0) throw ValidationError("labels are not one-hot");
  }
  const Spectrum spec = spectrum_of(features);
  const Eigen::Index classes = one_hot_labels.cols();
  EvidenceModel model;
  model.weights.resize(classes, features.cols());
  model.alpha.resize(classes);
  model.beta.resize(classes);
  model.log_evidence.resize(classes);
  for (Eigen::Index c = 0; c < classes; ++c) {
    const ClassEvidence fit = fit_column(features, one_hot_labels.col(c), spec, options);
    model.weights.row(c) = fit.weights.transpose();
    model.alpha[c] = fit.alpha;
    model.beta[c] = fit.beta;
    model.log_evidence[c] = fit.log_evidence;
    model.degenerate = model.degenerate || fit.degenerate;
  }
  return model;
}

Eigen::MatrixXd one_hot(const std::vector<std::uint32_t>& labels, std::size_t n_classes) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()),
                                              static_cast<Eigen::Index>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) throw ValidationError("label out of range");
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

Eigen::VectorXd normalize_scores(const Eigen::VectorXd& scores) {
  Eigen::VectorXd clamped = scores.cwiseMax(0.0);
  const double total = clamped.sum();
  if (!(total > 0.0))
    return Eigen::VectorXd::Constant(scores.size(), 1.0 / static_cast<double>(scores.size()));
  return clamped / total;
}

Eigen::VectorXd predict_tilde(const EvidenceModel& model, const Eigen::VectorXd& z) {
  if (z.size() != model.dim())
    throw ValidationError("dim mismatch: vector has " + std::to_string(z.size()) +
                          " entries, model expects " + std::to_string(model.dim()));
  return normalize_scores(model.weights * z);
}

int bin_index(double p, int bins) {
  const int i = static_cast<int>(std::floor(p * bins));
  return std::clamp(i, 0, bins - 1);
}

double CalibratedConditional::bin_accuracy(int bin, Eigen::Index cls) const {
  return static_cast<double>(bin_hits(bin, cls)) / static_cast<double>(bin_count(bin, cls));
}

Eigen::VectorXd CalibratedConditional::probabilities(const Eigen::VectorXd& z) const {
  Eigen::VectorXd p = predict_tilde(raw_model, z);
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    const int b = bin_index(p[c], bins);
    if (!empty(b, c)) p[c] = bin_accuracy(b, c);
  }
  return p;
}

CalibratedConditional uncalibrated(const EvidenceModel& model, int bins) {
  if (bins < 2) throw ValidationError("calibration needs at least 2 bins");
  CalibratedConditional out;
  out.raw_model = model;
  out.bins = bins;
  out.bin_count = Eigen::MatrixXi::Zero(bins, model.n_classes());
  out.bin_hits = Eigen::MatrixXi::Zero(bins, model.n_classes());
  return out;
}

CalibratedConditional calibrate(const EvidenceModel& model, const Eigen::MatrixXd& overlap_rows,
                                const std::vector<std::uint32_t>& overlap_labels, int bins) {
  if (overlap_rows.rows() == 0) throw ValidationError("calibration needs overlap rows");
  if (static_cast<std::size_t>(overlap_rows.rows()) != overlap_labels.size())
    throw ValidationError("calibration rows and labels differ in length");
  CalibratedConditional out = uncalibrated(model, bins);
  for (Eigen::Index r = 0; r < overlap_rows.rows(); ++r) {
    const Eigen::VectorXd p = predict_tilde(model, overlap_rows.row(r).transpose());
    const auto truth = overlap_labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < p.size(); ++c) {
      const int b = bin_index(p[c], bins);
      out.bin_count(b, c) += 1;
      if (truth == static_cast<std::uint32_t>(c)) out.bin_hits(b, c) += 1;
    }
  }
  return out;
}

namespace {

struct OverlapRows {
  Eigen::MatrixXd rows;
  std::vector<std::uint32_t> labels;
};

OverlapRows keep_overlap(const Eigen::MatrixXd& data, const std::vector<std::uint32_t>& labels,
                         const std::vector<bool>& escapes) {
  OverlapRows out;
  const auto kept = static_cast<Eigen::Index>(std::count(escapes.begin(), escapes.end(), false));
  out.rows.resize(kept, data.cols());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < escapes.size(); ++i) {
    if (escapes[i]) continue;
    out.rows.row(r++) = data.row(static_cast<Eigen::Index>(i));
    out.labels.push_back(labels[i]);
  }
  return out;
}

}  // namespace

CorrelationEstimate correlation_shift(const EvidenceModel& model_a, const EvidenceModel& model_b,
                                      const Eigen::MatrixXd& data_a,
                                      const std::vector<std::uint32_t>& labels_a,
                                      const Eigen::MatrixXd& data_b,
                                      const std::vector<std::uint32_t>& labels_b,
                                      const std::vector<bool>& a_escapes,
                                      const std::vector<bool>& b_escapes, int bins) {
  if (static_cast<std::size_t>(data_a.rows()) != a_escapes.size() ||
      static_cast<std::size_t>(data_b.rows()) != b_escapes.size() ||
      labels_a.size() != a_escapes.size() || labels_b.size() != b_escapes.size())
    throw ValidationError("correlation_shift: rows, labels and escape masks differ in length");
  if (model_a.n_classes() != model_b.n_classes() || model_a.dim() != model_b.dim())
    throw ValidationError("correlation_shift: evidence models disagree in shape");

  const OverlapRows overlap_a = keep_overlap(data_a, labels_a, a_escapes);
  const OverlapRows overlap_b = keep_overlap(data_b, labels_b, b_escapes);

  CorrelationEstimate est;
  est.overlap_count = overlap_a.labels.size() + overlap_b.labels.size();
  if (est.overlap_count == 0) {
    est.empty_overlap = true;
    return est;
  }

  const auto cond_a = overlap_a.labels.empty()
                          ? uncalibrated(model_a, bins)
                          : calibrate(model_a, overlap_a.rows, overlap_a.labels, bins);
  const auto cond_b = overlap_b.labels.empty()
                          ? uncalibrated(model_b, bins)
                          : calibrate(model_b, overlap_b.rows, overlap_b.labels, bins);

  // Each side summed on its own so that swapping a and b is bit-exact.
  auto side_total = [&](const Eigen::MatrixXd& rows) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      const Eigen::VectorXd z = rows.row(r).transpose();
      total += (cond_a.probabilities(z) - cond_b.probabilities(z)).cwiseAbs().sum();
    }
    return total;
  };
  const double total = side_total(overlap_a.rows) + side_total(overlap_b.rows);
  const double weight = 1.0 / static_cast<double>(data_a.rows() + data_b.rows());
  est.f_cor = std::clamp(0.5 * weight * total, 0.0, 1.0);
  return est;
}

}  // namespace shiftzoo
