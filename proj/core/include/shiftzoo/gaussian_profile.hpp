#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace shiftzoo {

inline constexpr double kDefaultShrinkage = 1e-3;
/// Fraction of a domain's own validation rows allowed beyond its threshold.
inline constexpr double kEscapeQuantile = 0.01;

/// Gaussian fit of one domain's features plus its out-of-support threshold.
struct GaussianProfile {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd chol;  // lower factor of covariance + shrinkage * (trace / dim) * I
  double threshold = 0.0;

  Eigen::Index dim() const { return mean.size(); }
};

struct DiversityEstimate {
  std::string encoder_id;
  std::string domain_a;
  std::string domain_b;
  double p_a_escapes = 0.0;  // fraction of a's rows outside b's support
  double p_b_escapes = 0.0;  // fraction of b's rows outside a's support
  double f_div = 0.0;
};

/// Column mean and 1/n covariance. Requires at least two rows.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> fit_gaussian(const Eigen::MatrixXd& rows);

/// Lower Cholesky factor of covariance + shrinkage * (trace / dim) * I.
/// Throws Error when the regularized matrix is not positive definite.
Eigen::MatrixXd regularize_and_factor(const Eigen::MatrixXd& covariance,
                                      double shrinkage = kDefaultShrinkage);

/// (z - mean)^T Sigma^-1 (z - mean), via a triangular solve against the factor.
double mahalanobis_sq(const GaussianProfile& profile, const Eigen::VectorXd& z);
Eigen::VectorXd mahalanobis_sq_rows(const GaussianProfile& profile, const Eigen::MatrixXd& rows);

/// Smallest value exceeded by at most ceil(level * n) of the given distances.
double quantile_threshold(std::span<const double> distances, double level = kEscapeQuantile);

double estimate_threshold(const GaussianProfile& profile, const Eigen::MatrixXd& validation_rows);

/// Fits on training rows and sets the threshold from validation rows.
GaussianProfile build_profile(const Eigen::MatrixXd& training_rows,
                              const Eigen::MatrixXd& validation_rows,
                              double shrinkage = kDefaultShrinkage);

/// Marks rows whose distance under `profile` exceeds its threshold.
std::vector<bool> escape_mask(const GaussianProfile& profile, const Eigen::MatrixXd& rows);

DiversityEstimate diversity_shift(const GaussianProfile& profile_a, const GaussianProfile& profile_b,
                                  const Eigen::MatrixXd& data_a, const Eigen::MatrixXd& data_b);

}  // namespace shiftzoo
