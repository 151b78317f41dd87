#include "nvrf/least_squares.hpp"

#include <algorithm>
#include <cmath>

namespace nvrf {

LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd theta0, const LmOptions& opt) {
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  fn(theta0, r, &jac);

  LmResult res;
  res.theta = std::move(theta0);
  res.cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_lambda;

  Eigen::VectorXd r_trial;
  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    res.iterations = iter;
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.status = LmStatus::gradient_converged;
      return res;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-300);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * diag;
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd trial = res.theta + step;
      fn(trial, r_trial, nullptr);
      const double cost = 0.5 * r_trial.squaredNorm();
      if (std::isfinite(cost) && cost < res.cost) {
        const double change = (res.cost - cost) / std::max(res.cost, 1e-300);
        res.theta = trial;
        res.cost = cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        fn(res.theta, r, &jac);
        accepted = true;
        if (change < opt.cost_rtol) {
          res.status = LmStatus::cost_converged;
          return res;
        }
      } else {
        lambda *= 4.0;
        if (lambda > 1e16) {
          res.status = LmStatus::stalled;
          return res;
        }
      }
    }
  }
  res.status = LmStatus::iteration_limit;
  return res;
}

}  // namespace nvrf
