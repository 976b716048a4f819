#pragma once

#include <Eigen/Core>

namespace shiftzoo {

/// Gaussian kernel exp(-gamma / rescale_dim * ||z - z'||^2).
struct KernelSpec {
  double gamma = 0.5;
  int rescale_dim = 1;

  double effective_gamma() const { return gamma / static_cast<double>(rescale_dim); }
  void validate() const;
};

Eigen::MatrixXd gaussian_kernel_matrix(const Eigen::MatrixXd& rows, const KernelSpec& spec);

/// H K H without forming H.
Eigen::MatrixXd double_center(const Eigen::MatrixXd& kernel);

/// Biased estimate trace(K H L H) / m^2 with L built on z_l and K on z_d.
double hsic_b(const Eigen::MatrixXd& z_l, const Eigen::MatrixXd& z_d, const KernelSpec& spec_l,
              const KernelSpec& spec_k);

/// Gradient of hsic_b with respect to z_l; the z_d kernel is held fixed.
Eigen::MatrixXd hsic_b_grad(const Eigen::MatrixXd& z_l, const Eigen::MatrixXd& z_d,
                            const KernelSpec& spec_l, const KernelSpec& spec_k);

struct HsicValueGrad {
  double value = 0.0;
  Eigen::MatrixXd grad;  // d value / d z_l
};

/// Value and gradient given an already double-centered fixed kernel.
HsicValueGrad hsic_b_value_grad(const Eigen::MatrixXd& z_l, const Eigen::MatrixXd& centered_k,
                                const KernelSpec& spec_l);

}  // namespace shiftzoo
