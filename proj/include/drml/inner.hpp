#pragma once

#include "drml/model.hpp"

namespace drml {

/// Quantities fixed for one theta, shared read-only across subjects.
struct ModelAtTheta {
  ModelAtTheta(const ParameterVector& theta, const ModelSpec& spec);

  const ModelSpec* spec;
  MatrixXd loadings;       // n_responses x q
  VectorXd intercepts;     // expanded to response rows
  MatrixXd psi;            // q x q
  MatrixXd psi_inv;
  double psi_logdet;
  double structural_const;  // -(q/2) log 2pi - 0.5 log|Psi|

  VectorXd eta(const VectorXd& b) const { return intercepts + loadings * b; }

  /// L(b) = log g(y|b) + log h(b).
  double joint_logdensity(const Eigen::Ref<const Eigen::VectorXi>& y, const VectorXd& b) const;

  /// Value, gradient and Hessian of L at b. The Hessian is negative
  /// definite for every input (Bernoulli-logit curvature plus -Psi^{-1}).
  double joint_with_derivatives(const Eigen::Ref<const Eigen::VectorXi>& y, const VectorXd& b,
                                VectorXd& grad, MatrixXd& hess) const;
};

/// Mode of the per-subject joint log density, with the Cholesky factor of
/// the curvature-implied covariance.
struct SubjectMode {
  VectorXd mode;                 // b_hat
  double log_density = 0.0;      // L(b_hat)
  MatrixXd chol;                 // lower triangular C, C C^T = (-L''(b_hat))^{-1}
  int newton_iterations = 0;
};

struct InnerOptions {
  double grad_tol = 1e-8;  // infinity norm
  int max_iterations = 100;
  int max_halvings = 30;
};

/// Newton maximization of L(b) with step halving. L is strictly concave, so
/// this converges from any start; failure to meet the tolerance within the
/// iteration cap throws ModeFailure carrying the last iterate.
SubjectMode find_mode(const ModelAtTheta& model, const Eigen::Ref<const Eigen::VectorXi>& y,
                      const VectorXd* warm_start = nullptr,
                      const InnerOptions& options = InnerOptions{});

}  // namespace drml
