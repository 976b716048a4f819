#include "shiftzoo/gaussian_profile.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "shiftzoo/error.hpp"

namespace shiftzoo {
namespace {

double escape_fraction(const std::vector<bool>& mask) {
  if (mask.empty()) return 0.0;
  const auto hits = std::count(mask.begin(), mask.end(), true);
  return static_cast<double>(hits) / static_cast<double>(mask.size());
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::MatrixXd> fit_gaussian(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2)
    throw ValidationError("fit_gaussian needs at least 2 rows, got " + std::to_string(rows.rows()));
  const double n = static_cast<double>(rows.rows());
  Eigen::VectorXd mean = rows.colwise().sum().transpose() / n;
  const Eigen::MatrixXd centered = rows.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / n;
  // exact symmetry; the product is symmetric only up to rounding
  cov = 0.5 * (cov + cov.transpose()).eval();
  return {std::move(mean), std::move(cov)};
}

Eigen::MatrixXd regularize_and_factor(const Eigen::MatrixXd& covariance, double shrinkage) {
  if (covariance.rows() != covariance.cols() || covariance.rows() == 0)
    throw ValidationError("covariance must be a non-empty square matrix");
  if (shrinkage < 0.0) throw ValidationError("shrinkage must be >= 0");
  const double dim = static_cast<double>(covariance.rows());
  Eigen::MatrixXd regularized = covariance;
  regularized.diagonal().array() += shrinkage * covariance.trace() / dim;
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() != Eigen::Success)
    throw Error("Cholesky factorization failed: covariance is degenerate even after shrinkage");
  Eigen::MatrixXd lower = llt.matrixL();
  if ((lower.diagonal().array() <= 0.0).any() || !lower.allFinite())
    throw Error("Cholesky factorization failed: covariance is degenerate even after shrinkage");
  return lower;
}

double mahalanobis_sq(const GaussianProfile& profile, const Eigen::VectorXd& z) {
  if (z.size() != profile.dim())
    throw ValidationError("dim mismatch: vector has " + std::to_string(z.size()) +
                          " entries, profile has " + std::to_string(profile.dim()));
  const Eigen::VectorXd u =
      profile.chol.triangularView<Eigen::Lower>().solve(z - profile.mean);
  return u.squaredNorm();
}

Eigen::VectorXd mahalanobis_sq_rows(const GaussianProfile& profile, const Eigen::MatrixXd& rows) {
  if (rows.cols() != profile.dim())
    throw ValidationError("dim mismatch: rows have " + std::to_string(rows.cols()) +
                          " columns, profile has " + std::to_string(profile.dim()));
  const Eigen::MatrixXd centered = (rows.rowwise() - profile.mean.transpose()).transpose();
  const Eigen::MatrixXd u = profile.chol.triangularView<Eigen::Lower>().solve(centered);
  return u.colwise().squaredNorm().transpose();
}

double quantile_threshold(std::span<const double> distances, double level) {
  if (distances.empty()) throw ValidationError("threshold needs a non-empty validation set");
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  const auto allowed = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
  // At most `allowed` rows strictly exceed sorted[n - 1 - allowed]; ties sit at or below it.
  const std::size_t index = allowed >= n ? 0 : n - 1 - allowed;
  return std::max(sorted[index], 0.0);
}

double estimate_threshold(const GaussianProfile& profile, const Eigen::MatrixXd& validation_rows) {
  if (validation_rows.rows() == 0)
    throw ValidationError("threshold needs a non-empty validation set");
  const Eigen::VectorXd d = mahalanobis_sq_rows(profile, validation_rows);
  return quantile_threshold(std::span<const double>(d.data(), static_cast<std::size_t>(d.size())));
}

GaussianProfile build_profile(const Eigen::MatrixXd& training_rows,
                              const Eigen::MatrixXd& validation_rows, double shrinkage) {
  GaussianProfile profile;
  std::tie(profile.mean, profile.covariance) = fit_gaussian(training_rows);
  profile.chol = regularize_and_factor(profile.covariance, shrinkage);
  profile.threshold = estimate_threshold(profile, validation_rows);
  return profile;
}

std::vector<bool> escape_mask(const GaussianProfile& profile, const Eigen::MatrixXd& rows) {
  const Eigen::VectorXd d = mahalanobis_sq_rows(profile, rows);
  std::vector<bool> mask(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i)
    mask[static_cast<std::size_t>(i)] = d[i] > profile.threshold;
  return mask;
}

DiversityEstimate diversity_shift(const GaussianProfile& profile_a, const GaussianProfile& profile_b,
                                  const Eigen::MatrixXd& data_a, const Eigen::MatrixXd& data_b) {
  if (profile_a.dim() != profile_b.dim())
    throw ValidationError("dim mismatch between domain profiles");
  DiversityEstimate est;
  est.p_a_escapes = escape_fraction(escape_mask(profile_b, data_a));
  est.p_b_escapes = escape_fraction(escape_mask(profile_a, data_b));
  est.f_div = (est.p_a_escapes + est.p_b_escapes) / 2.0;
  return est;
}

}  // namespace shiftzoo
