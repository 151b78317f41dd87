#pragma once

#include <Eigen/Dense>
#include <functional>

namespace nvrf {

/// Fills residuals r(theta) and, when `jac` is non-null, dr/dtheta.
using ResidualFn =
    std::function<void(const Eigen::VectorXd& theta, Eigen::VectorXd& r, Eigen::MatrixXd* jac)>;

struct LmOptions {
  int max_iter = 500;
  double cost_rtol = 1e-10;  // relative cost change on an accepted step
  double grad_tol = 1e-8;    // infinity norm of J^T r
  double initial_lambda = 1e-3;
};

enum class LmStatus { cost_converged, gradient_converged, stalled, iteration_limit };

struct LmResult {
  Eigen::VectorXd theta;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  LmStatus status = LmStatus::iteration_limit;

  bool converged() const noexcept { return status != LmStatus::iteration_limit; }
};

/// Levenberg-Marquardt with Marquardt diagonal scaling. A step is accepted
/// when it lowers the cost; lambda shrinks by 3 on success and grows by 4 on
/// failure. `stalled` means lambda overflowed without further decrease, i.e.
/// the iterate sits at a minimum to working precision.
LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd theta0,
                             const LmOptions& opt = {});

}  // namespace nvrf
