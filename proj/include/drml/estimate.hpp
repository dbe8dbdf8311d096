#pragma once

#include <functional>

#include "drml/approx.hpp"

namespace drml {

struct FitOptions {
  long long max_feval = 500;     // budget for the search loop
  double loglik_rel_tol = 1e-8;  // relative objective change
  double grad_tol = 1e-4;        // gradient infinity norm
  InnerOptions inner;
  int threads = 1;
  int max_iterations = 500;
};

struct FitResult {
  ParameterVector theta_hat;
  VectorXd theta_unconstrained;
  VectorXd standard_errors;  // filled by sandwich_se; empty otherwise
  double loglik = 0.0;
  bool converged = false;
  long long n_feval = 0;  // exact count of likelihood evaluations made by fit
  double wall_time_s = 0.0;
  int bracket_fallback_count = 0;  // subjects flagged at the accepted optimum
  double gradient_norm = 0.0;      // infinity norm at exit
  bool hessian_pd = false;
  MatrixXd hessian_unconstrained;  // of -loglik at theta_hat, when computed
};

/// Central-difference gradient with per-coordinate step
/// h_k = eps^{1/3} max(1, |x_k|). A non-finite value at a probe point halves
/// that coordinate's step up to 5 times, then throws std::runtime_error.
VectorXd numerical_gradient(const std::function<double(const VectorXd&)>& f,
                            const VectorXd& x);

struct MinimizeResult {
  VectorXd x;
  double value = 0.0;
  bool tolerances_met = false;
  long long n_calls = 0;  // exact number of f invocations made by the driver
  double gradient_norm = 0.0;
  MatrixXd hessian;  // numerical, only when tolerances were met
  bool hessian_pd = false;
};

/// BFGS with Armijo backtracking and central-difference gradients. Counts
/// every invocation of f; the search loop stops once options.max_feval
/// invocations have been spent. When the tolerances are met the numerical
/// Hessian at the optimum is computed and checked for positive
/// definiteness. on_accept, when given, runs after each accepted step.
MinimizeResult bfgs_minimize(const std::function<double(const VectorXd&)>& f,
                             const VectorXd& x0, const FitOptions& options,
                             const std::function<void(const VectorXd&)>& on_accept = {});

/// Symmetric central-difference Hessian with steps eps^{1/4} max(1, |x_k|).
MatrixXd numerical_hessian(const std::function<double(const VectorXd&)>& f,
                           const VectorXd& x);

/// BFGS minimization of -total_loglik over the unconstrained parameter
/// space, gradients by central differences. Converged means the relative
/// objective change fell below loglik_rel_tol with gradient infinity norm
/// below grad_tol, and the numerical Hessian at the optimum is positive
/// definite. Trial points where any subject's inner solve fails score as
/// -inf log likelihood and are rejected. Never throws for budget
/// exhaustion; returns diagnostics with converged = false instead.
FitResult fit(const ResponseData& data, const ModelSpec& spec, const ApproxConfig& config,
              const ParameterVector& start, const FitOptions& options = FitOptions{});

/// Sandwich standard errors at theta_hat on the constrained scale:
/// H from the numerical Hessian of -loglik/n, U from the outer product of
/// per-subject numerical score contributions, covariance H^{-1} U H^{-1}/n
/// mapped through the pack/unpack Jacobian. Throws std::domain_error naming
/// the offending eigen-direction if H is singular.
VectorXd sandwich_se(const ResponseData& data, const ParameterVector& theta_hat,
                     const ModelSpec& spec, const ApproxConfig& config,
                     const FitOptions& options = FitOptions{});

}  // namespace drml
