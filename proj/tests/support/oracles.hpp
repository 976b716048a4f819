#pragma once

// Reference computations written directly from the textbook formulas, deliberately
// naive (explicit inverses, explicit centering matrices, brute-force sums), plus
// small data builders shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "shiftzoo/rng.hpp"
#include "shiftzoo/shift_profiler.hpp"

namespace oracle {

inline Eigen::MatrixXd random_matrix(shiftzoo::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Eigen::MatrixXd random_spd(shiftzoo::Rng& rng, Eigen::Index dim) {
  const Eigen::MatrixXd a = random_matrix(rng, dim, dim);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(dim, dim);
}

// ---- Gaussian / Mahalanobis ------------------------------------------------

inline double mahalanobis_explicit(const Eigen::VectorXd& z, const Eigen::VectorXd& mean,
                                   const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd d = z - mean;
  return d.dot(cov.inverse() * d);
}

// ---- HSIC --------------------------------------------------------------------

inline Eigen::MatrixXd kernel_elementwise(const Eigen::MatrixXd& rows, double gamma_eff) {
  const Eigen::Index m = rows.rows();
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      double sq = 0.0;
      for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        const double diff = rows(i, c) - rows(j, c);
        sq += diff * diff;
      }
      k(i, j) = std::exp(-gamma_eff * sq);
    }
  return k;
}

/// trace(K H L H) / m^2 with the centering matrix formed explicitly.
inline double hsic_trace(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
  const Eigen::Index m = k.rows();
  const Eigen::MatrixXd h =
      Eigen::MatrixXd::Identity(m, m) - Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(m));
  return (k * h * l * h).trace() / static_cast<double>(m * m);
}

/// Expanded sums: (1/m^2) sum K_ij L_ij + (1/m^4) sum K_ij sum L_kl - (2/m^3) sum K_ij L_ik.
inline double hsic_double_sum(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
  const Eigen::Index m = k.rows();
  const double md = static_cast<double>(m);
  double kl = 0.0, ks = 0.0, ls = 0.0, cross = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      kl += k(i, j) * l(i, j);
      ks += k(i, j);
      ls += l(i, j);
      for (Eigen::Index q = 0; q < m; ++q) cross += k(i, j) * l(i, q);
    }
  return kl / (md * md) + ks * ls / (md * md * md * md) - 2.0 * cross / (md * md * md);
}

/// Definitional form over the empirical measure, each expectation a literal sum:
/// E[k(x,x') l(y,y')] + E[k(x,x')] E[l(y,y')] - 2 E_{x,y}[ E_{x'} k(x,x') E_{y'} l(y,y') ].
inline double hsic_expectation_form(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
  const Eigen::Index m = k.rows();
  const double md = static_cast<double>(m);
  double joint = 0.0, product = 0.0, cross = 0.0;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) {
      joint += k(a, b) * l(a, b);
      for (Eigen::Index c = 0; c < m; ++c) {
        cross += k(a, b) * l(a, c);
        for (Eigen::Index d = 0; d < m; ++d) product += k(a, b) * l(c, d);
      }
    }
  return joint / (md * md) + product / (md * md * md * md) - 2.0 * cross / (md * md * md);
}

// ---- LogME -------------------------------------------------------------------

/// Log marginal likelihood of Bayesian linear regression y = F w + e,
/// w ~ N(0, 1/alpha I), e ~ N(0, 1/beta I), written with dense solves.
inline double log_evidence(const Eigen::MatrixXd& f, const Eigen::VectorXd& y, double alpha,
                           double beta) {
  const double n = static_cast<double>(f.rows());
  const double d = static_cast<double>(f.cols());
  const Eigen::MatrixXd a =
      alpha * Eigen::MatrixXd::Identity(f.cols(), f.cols()) + beta * f.transpose() * f;
  const Eigen::VectorXd m = beta * a.inverse() * f.transpose() * y;
  const double log_det = std::log(a.determinant());
  return 0.5 * n * std::log(beta) + 0.5 * d * std::log(alpha) -
         0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * beta * (f * m - y).squaredNorm() -
         0.5 * alpha * m.squaredNorm() - 0.5 * log_det;
}

struct GridOptimum {
  double log10_alpha = 0.0;
  double log10_beta = 0.0;
  double value = -INFINITY;
};

/// Exhaustive search over a log10 grid [lo, hi]^2 with the given step.
inline GridOptimum grid_search_evidence(const Eigen::MatrixXd& f, const Eigen::VectorXd& y,
                                        double lo = -4.0, double hi = 4.0, double step = 0.05) {
  GridOptimum best;
  const int cells = static_cast<int>(std::lround((hi - lo) / step));
  for (int i = 0; i <= cells; ++i)
    for (int j = 0; j <= cells; ++j) {
      const double la = lo + step * i;
      const double lb = lo + step * j;
      const double v = log_evidence(f, y, std::pow(10.0, la), std::pow(10.0, lb));
      if (v > best.value) best = {la, lb, v};
    }
  return best;
}

/// Coarse grid over [lo, hi]^2, then two passes that are 10x finer around the current best.
/// A tilted, flat evidence ridge can put the coarse argmax more than a cell from the optimum.
inline GridOptimum refined_grid_search_evidence(const Eigen::MatrixXd& f, const Eigen::VectorXd& y,
                                                double lo = -4.0, double hi = 4.0,
                                                double step = 0.05) {
  GridOptimum best = grid_search_evidence(f, y, lo, hi, step);
  for (int pass = 0; pass < 2; ++pass) {
    const double fine = step / 10.0;
    GridOptimum next = best;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        const double la = std::clamp(best.log10_alpha + fine * i, lo, hi);
        const double lb = std::clamp(best.log10_beta + fine * j, lo, hi);
        const double v = log_evidence(f, y, std::pow(10.0, la), std::pow(10.0, lb));
        if (v > next.value) next = {la, lb, v};
      }
    best = next;
    step = fine;
  }
  return best;
}

// ---- finite differences -------------------------------------------------------

inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

// ---- data builders -------------------------------------------------------------

/// Gaussian domain with identity covariance around `center`; 20% validation rows.
inline shiftzoo::DomainFeatures gaussian_domain(std::uint64_t seed, const std::string& id,
                                                std::size_t n, Eigen::Index dim, double center) {
  shiftzoo::Rng rng(seed);
  const auto n_val = static_cast<Eigen::Index>(n / 5);
  const auto n_train = static_cast<Eigen::Index>(n) - n_val;
  shiftzoo::DomainFeatures d;
  d.id = id;
  d.train = random_matrix(rng, n_train, dim).array() + center;
  d.validation = random_matrix(rng, n_val, dim).array() + center;
  d.train_labels.assign(static_cast<std::size_t>(n_train), 0);
  return d;
}

enum class LabelRule { kNoisyPositive, kPositive, kNegative, kRandom };

/// Binary task on a discrete feature x in {-2, -1, 1, 2}, plus `dim - 1` Gaussian noise dims.
/// kNoisyPositive: P(y=1 | x>0) = 0.8, P(y=1 | x<0) = 0.2. kPositive: y = [x > 0].
/// kNegative: y = [x < 0]. kRandom: y uniform.
inline shiftzoo::DomainFeatures discrete_domain(std::uint64_t seed, const std::string& id,
                                                LabelRule rule, std::size_t n, Eigen::Index dim) {
  shiftzoo::Rng rng(seed);
  const auto n_train = static_cast<Eigen::Index>(n * 8 / 10);
  shiftzoo::DomainFeatures d;
  d.id = id;
  d.train.resize(n_train, dim);
  d.validation.resize(static_cast<Eigen::Index>(n) - n_train, dim);
  const double levels[4] = {-2.0, -1.0, 1.0, 2.0};
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const double x = levels[rng.below(4)];
    Eigen::RowVectorXd row(dim);
    row[0] = x;
    for (Eigen::Index j = 1; j < dim; ++j) row[j] = rng.normal();
    std::uint32_t y = 0;
    switch (rule) {
      case LabelRule::kNoisyPositive: y = (x > 0) ? rng.uniform() < 0.8 : rng.uniform() < 0.2; break;
      case LabelRule::kPositive: y = x > 0; break;
      case LabelRule::kNegative: y = x < 0; break;
      case LabelRule::kRandom: y = static_cast<std::uint32_t>(rng.below(2)); break;
    }
    if (i < n_train) {
      d.train.row(i) = row;
      d.train_labels.push_back(y);
    } else {
      d.validation.row(i - n_train) = row;
    }
  }
  return d;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    shiftzoo::Rng rng(shiftzoo::stable_hash(tag) ^ static_cast<std::uint64_t>(
                          std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() /
            ("shiftzoo-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
