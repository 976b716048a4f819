#include "shiftzoo/hsic.hpp"

#include <string>

#include "shiftzoo/error.hpp"

namespace shiftzoo {
namespace {

void require_pair(const Eigen::MatrixXd& z_l, const Eigen::MatrixXd& z_d) {
  if (z_l.rows() != z_d.rows())
    throw ValidationError("hsic: row-count mismatch (" + std::to_string(z_l.rows()) + " vs " +
                          std::to_string(z_d.rows()) + ")");
  if (z_l.rows() < 2) throw ValidationError("hsic: needs at least 2 samples");
}

}  // namespace

void KernelSpec::validate() const {
  if (!(gamma > 0.0)) throw ValidationError("kernel gamma must be > 0");
  if (rescale_dim < 1) throw ValidationError("kernel rescale_dim must be >= 1");
}

Eigen::MatrixXd gaussian_kernel_matrix(const Eigen::MatrixXd& rows, const KernelSpec& spec) {
  spec.validate();
  if (rows.rows() < 1) throw ValidationError("kernel matrix needs at least one row");
  const Eigen::VectorXd sq = rows.rowwise().squaredNorm();
  Eigen::MatrixXd dist = -2.0 * rows * rows.transpose();
  dist.colwise() += sq;
  dist.rowwise() += sq.transpose();
  dist = dist.cwiseMax(0.0);
  dist.diagonal().setZero();
  Eigen::MatrixXd k = (-spec.effective_gamma() * dist.array()).exp().matrix();
  // symmetrize away rounding differences between (i, j) and (j, i)
  return 0.5 * (k + k.transpose());
}

Eigen::MatrixXd double_center(const Eigen::MatrixXd& kernel) {
  const Eigen::VectorXd row_mean = kernel.rowwise().mean();
  const Eigen::RowVectorXd col_mean = kernel.colwise().mean();
  const double grand = kernel.mean();
  Eigen::MatrixXd centered = kernel;
  centered.colwise() -= row_mean;
  centered.rowwise() -= col_mean;
  centered.array() += grand;
  return centered;
}

double hsic_b(const Eigen::MatrixXd& z_l, const Eigen::MatrixXd& z_d, const KernelSpec& spec_l,
              const KernelSpec& spec_k) {
  require_pair(z_l, z_d);
  const Eigen::MatrixXd centered_k = double_center(gaussian_kernel_matrix(z_d, spec_k));
  const Eigen::MatrixXd l = gaussian_kernel_matrix(z_l, spec_l);
  const double m = static_cast<double>(z_l.rows());
  return centered_k.cwiseProduct(l).sum() / (m * m);
}

HsicValueGrad hsic_b_value_grad(const Eigen::MatrixXd& z_l, const Eigen::MatrixXd& centered_k,
                                const KernelSpec& spec_l) {
  if (centered_k.rows() != z_l.rows() || centered_k.cols() != z_l.rows())
    throw ValidationError("hsic: kernel shape does not match sample count");
  if (z_l.rows() < 2) throw ValidationError("hsic: needs at least 2 samples");
  const double m = static_cast<double>(z_l.rows());
  const Eigen::MatrixXd l = gaussian_kernel_matrix(z_l, spec_l);
  const Eigen::MatrixXd g = centered_k.cwiseProduct(l);
  HsicValueGrad out;
  out.value = g.sum() / (m * m);
  // d/dz_i sum_jk Kc_jk L_jk = 2 sum_j Kc_ij dL_ij/dz_i,  dL_ij/dz_i = -2 gamma L_ij (z_i - z_j)
  const double scale = -4.0 * spec_l.effective_gamma() / (m * m);
  const Eigen::VectorXd row_sum = g.rowwise().sum();
  out.grad = scale * (row_sum.asDiagonal() * z_l - g * z_l);
  return out;
}

Eigen::MatrixXd hsic_b_grad(const Eigen::MatrixXd& z_l, const Eigen::MatrixXd& z_d,
                            const KernelSpec& spec_l, const KernelSpec& spec_k) {
  require_pair(z_l, z_d);
  const Eigen::MatrixXd centered_k = double_center(gaussian_kernel_matrix(z_d, spec_k));
  return hsic_b_value_grad(z_l, centered_k, spec_l).grad;
}

}  // namespace shiftzoo
