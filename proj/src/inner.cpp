#include "drml/inner.hpp"

#include <Eigen/Cholesky>

namespace drml {

ModelAtTheta::ModelAtTheta(const ParameterVector& theta, const ModelSpec& spec_in)
    : spec(&spec_in) {
  loadings = loading_matrix(theta, spec_in);
  intercepts = expanded_intercepts(theta, spec_in);
  psi = psi_matrix(theta, spec_in);
  Eigen::LLT<MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("ModelAtTheta: structural covariance not positive definite");
  psi_logdet = 0.0;
  for (int k = 0; k < spec_in.q; ++k) psi_logdet += 2.0 * std::log(llt.matrixL()(k, k));
  psi_inv = llt.solve(MatrixXd::Identity(spec_in.q, spec_in.q));
  structural_const = -0.5 * spec_in.q * std::log(2.0 * M_PI) - 0.5 * psi_logdet;
}

double ModelAtTheta::joint_logdensity(const Eigen::Ref<const Eigen::VectorXi>& y,
                                      const VectorXd& b) const {
  VectorXd e = eta(b);
  double meas = 0.0;
  for (int j = 0; j < e.size(); ++j) meas += y[j] * e[j] - log1pexp(e[j]);
  return meas + structural_const - 0.5 * b.dot(psi_inv * b);
}

double ModelAtTheta::joint_with_derivatives(const Eigen::Ref<const Eigen::VectorXi>& y,
                                            const VectorXd& b, VectorXd& grad,
                                            MatrixXd& hess) const {
  VectorXd e = eta(b);
  double meas = 0.0;
  VectorXd resid(e.size()), curv(e.size());
  for (int j = 0; j < e.size(); ++j) {
    double mu = logistic(e[j]);
    meas += y[j] * e[j] - log1pexp(e[j]);
    resid[j] = y[j] - mu;
    curv[j] = mu * (1.0 - mu);
  }
  VectorXd psib = psi_inv * b;
  grad = loadings.transpose() * resid - psib;
  hess = -(loadings.transpose() * curv.asDiagonal() * loadings) - psi_inv;
  return meas + structural_const - 0.5 * b.dot(psib);
}

SubjectMode find_mode(const ModelAtTheta& model, const Eigen::Ref<const Eigen::VectorXi>& y,
                      const VectorXd* warm_start, const InnerOptions& options) {
  const int q = model.spec->q;
  VectorXd b = warm_start ? *warm_start : VectorXd::Zero(q);
  VectorXd grad(q);
  MatrixXd hess(q, q);
  double value = model.joint_with_derivatives(y, b, grad, hess);

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < options.grad_tol) break;

    // Newton direction: (-H) d = g, -H is SPD by strict concavity.
    Eigen::LLT<MatrixXd> llt(-hess);
    if (llt.info() != Eigen::Success)
      throw ModeFailure("find_mode: curvature factorization failed", b);
    VectorXd dir = llt.solve(grad);

    // Ascent acceptance with slope-proportional sufficient increase; the
    // slope g'(-H)^{-1}g is positive by concavity. Once the predicted
    // increase falls below the floating resolution of L the line search
    // cannot see progress anymore, so the pure Newton step is taken
    // unguarded: at that point the quadratic model is exact to machine
    // precision and the step is contractive.
    const double slope = grad.dot(dir);
    if (slope <= 512.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(value))) {
      b += dir;
      value = model.joint_with_derivatives(y, b, grad, hess);
      continue;
    }
    double t = 1.0;
    VectorXd b_new;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      b_new = b + t * dir;
      double v_new = model.joint_logdensity(y, b_new);
      if (std::isfinite(v_new) && v_new >= value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    b = b_new;
    value = model.joint_with_derivatives(y, b, grad, hess);
  }

  if (grad.lpNorm<Eigen::Infinity>() >= options.grad_tol) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "find_mode: no convergence after %d iterations (|grad| = %.3g)",
                  iter, grad.lpNorm<Eigen::Infinity>());
    throw ModeFailure(msg, b);
  }

  SubjectMode result;
  result.mode = b;
  result.log_density = value;
  result.newton_iterations = iter;

  // Lower-triangular C with C C^T = (-H)^{-1}: factor the reverse-permuted
  // curvature so the inverted factor comes out lower triangular. By
  // uniqueness this is the Cholesky factor of Sigma_hat itself.
  MatrixXd a_rev = (-hess).reverse();
  Eigen::LLT<MatrixXd> llt_rev(a_rev);
  if (llt_rev.info() != Eigen::Success)
    throw ModeFailure("find_mode: curvature factorization failed at mode", b);
  MatrixXd u = MatrixXd(llt_rev.matrixL()).reverse();  // upper, -H = U U^T
  result.chol = u.transpose()
                    .triangularView<Eigen::Lower>()
                    .solve(MatrixXd::Identity(q, q));
  return result;
}

}  // namespace drml
