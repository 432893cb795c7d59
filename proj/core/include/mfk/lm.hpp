#pragma once

#include <Eigen/Dense>
#include <functional>

namespace mfk {

// Dense Levenberg-Marquardt for small problems (tens of parameters).
// Jacobian by central differences; cost = 0.5 * ||r||^2.
struct LmOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-12;   // on ||J^T r||_inf
  double step_tol = 1e-14;       // on ||dx||
  double initial_lambda = 1e-4;
  double finite_diff_step = 1e-7;
};

struct LmResult {
  Eigen::VectorXd x;
  double cost = 0.0;
  double gradient_norm = 0.0;  // ||J^T r||_inf at the solution
  int iterations = 0;
  bool converged = false;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd numerical_jacobian(const ResidualFn& fn, const Eigen::VectorXd& x,
                                          double base_step) {
  const Eigen::VectorXd r0 = fn(x);
  Eigen::MatrixXd jac(r0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = base_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const Eigen::VectorXd rp = fn(xp);
    xp[j] = x[j] - h;
    const Eigen::VectorXd rm = fn(xp);
    xp[j] = x[j];
    jac.col(j) = (rp - rm) / (2.0 * h);
  }
  return jac;
}

inline LmResult lm_minimize(const ResidualFn& fn, const Eigen::VectorXd& x0,
                            const LmOptions& opt = {}) {
  LmResult res;
  res.x = x0;
  Eigen::VectorXd r = fn(res.x);
  res.cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_lambda;

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    const Eigen::MatrixXd jac = numerical_jacobian(fn, res.x, opt.finite_diff_step);
    const Eigen::VectorXd g = jac.transpose() * r;
    res.gradient_norm = g.lpNorm<Eigen::Infinity>();
    if (res.gradient_norm < opt.gradient_tol) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;

    bool stepped = false;
    for (int attempt = 0; attempt < 32; ++attempt) {
      Eigen::MatrixXd h = jtj;
      h.diagonal().array() += lambda;
      const Eigen::VectorXd dx = h.ldlt().solve(-g);
      if (!dx.allFinite()) {
        lambda *= 4.0;
        continue;
      }
      const Eigen::VectorXd x_new = res.x + dx;
      const Eigen::VectorXd r_new = fn(x_new);
      const double cost_new = 0.5 * r_new.squaredNorm();
      if (cost_new <= res.cost) {
        const double step = dx.norm();
        res.x = x_new;
        r = r_new;
        res.cost = cost_new;
        lambda = std::max(lambda / 4.0, 1e-12);
        stepped = true;
        if (step < opt.step_tol) {
          res.converged = true;
        }
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped || res.converged) {
      // no productive step available: report the gradient we are stuck at
      const Eigen::MatrixXd jac2 = numerical_jacobian(fn, res.x, opt.finite_diff_step);
      res.gradient_norm = (jac2.transpose() * r).lpNorm<Eigen::Infinity>();
      res.converged = res.converged || res.gradient_norm < opt.gradient_tol;
      break;
    }
  }
  return res;
}

}  // namespace mfk
