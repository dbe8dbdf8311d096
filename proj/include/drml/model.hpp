#pragma once

#include <string>
#include <vector>

#include "drml/common.hpp"

namespace drml {

enum class CovarianceFamily { Correlation, LongitudinalAR1 };

/// One loading-matrix cell: fixed at a value, or free and mapped to an
/// entry of ParameterVector::loadings. Several cells may share a free
/// index (used for loadings tied over time).
struct LoadingCell {
  int free_index = -1;  // -1: fixed
  double fixed_value = 0.0;
};

/// Structural description of the model: measurement pattern, latent
/// dimension and the covariance family. Immutable after construction.
struct ModelSpec {
  CovarianceFamily family = CovarianceFamily::Correlation;
  int p = 0;            // items (per time point in the longitudinal family)
  int q = 0;            // latent dimension (p + T for longitudinal)
  int T = 1;            // time points; 1 for the correlation family
  int n_responses = 0;  // p, or p*T with rows item-major: row(j,t) = j*T + t

  std::vector<std::vector<LoadingCell>> cells;  // n_responses x q
  std::vector<int> intercept_index;             // response row -> free intercept id
  int n_intercepts = 0;
  int n_free_loadings = 0;
  int n_cov_params = 0;  // q(q-1)/2, or 2 + p (phi, sigma1^2, sigma_u^2[1..p])

  // Start values carried by the spec (free cells carry a start value).
  VectorXd intercept_starts;
  VectorXd loading_starts;
  VectorXd cov_starts;

  /// Factor model with free-correlation structural part (unit-diagonal Psi).
  /// Pattern cells: fixed -> free_index = -1 and fixed_value set; free ->
  /// fixed_value holds the start value and indices are assigned row-major.
  /// Rejects patterns with fewer than q^2 constraints (unit diagonal of Psi
  /// counts q, each fixed cell counts one).
  static ModelSpec correlation(int p, int q,
                               const std::vector<std::vector<LoadingCell>>& pattern);

  /// Longitudinal model: p items at T time points, q = p + T latents
  /// (T serially correlated factors followed by p item random effects).
  /// Item loadings are tied over time with the first item fixed to 1;
  /// intercepts are item-specific and tied over time.
  static ModelSpec longitudinal(int p, int T);

  int n_free() const { return n_intercepts + n_free_loadings + n_cov_params; }
  std::vector<std::string> parameter_names() const;
};

/// Packed free parameters on the constrained scale.
struct ParameterVector {
  VectorXd intercepts;
  VectorXd loadings;
  VectorXd covariance;  // correlations (pair-lex order), or [phi, s1sq, su2...]

  VectorXd flat() const;
  static ParameterVector from_flat(const VectorXd& v, const ModelSpec& spec);
};

struct ResponseData {
  int n = 0;
  Eigen::MatrixXi y;  // n x n_responses, entries in {0,1}
};

/// Loading matrix assembled from the pattern (n_responses x q).
MatrixXd loading_matrix(const ParameterVector& theta, const ModelSpec& spec);

/// Intercepts expanded to one entry per response row.
VectorXd expanded_intercepts(const ParameterVector& theta, const ModelSpec& spec);

/// eta = alpha0 + A b.
VectorXd linear_predictor(const ParameterVector& theta, const ModelSpec& spec,
                          const VectorXd& b);

/// Bernoulli-logit log density sum_j [y_j eta_j - log(1 + exp(eta_j))],
/// overflow-safe for large |eta|.
double log_measurement(const Eigen::Ref<const Eigen::VectorXi>& y, const VectorXd& eta);

/// log N(b; 0, Psi) via Cholesky. Throws std::domain_error if Psi is not SPD.
double log_structural(const VectorXd& b, const MatrixXd& psi);

/// Block covariance [Gamma, 0; 0, diag(sigma_u^2)] of the longitudinal
/// latent vector (z_1..z_T, u_1..u_p). Gamma is the covariance of a
/// non-stationary AR(1) with Var(z_1) = s1sq and unit innovation variance:
///   gamma_{t,t}  = phi^{2(t-1)} s1sq + sum_{k=1}^{t-1} phi^{2(k-1)}
///   gamma_{t,t'} = phi^{t+t'-2} s1sq + I(t>=2) sum_{k=0}^{t-2} phi^{t'-t+2k}, t < t'.
MatrixXd covariance_longitudinal(double phi, double s1sq, const VectorXd& sigma_u_sq, int T);

/// Structural covariance implied by theta under the spec's family.
MatrixXd psi_matrix(const ParameterVector& theta, const ModelSpec& spec);

/// Bijection between the constrained parameters and an unconstrained real
/// vector: identity on intercepts/loadings, hyperspherical angles for the
/// correlation block (SPD with unit diagonal for every input), log for
/// variances, identity for phi. unpack never fails; unpack(pack(theta))
/// round-trips to 1e-12.
VectorXd pack(const ParameterVector& theta, const ModelSpec& spec);
ParameterVector unpack(const VectorXd& x, const ModelSpec& spec);

/// Jacobian d(flat constrained)/d(unconstrained) at x, for the delta method.
/// Identity and exp blocks are analytic; the correlation block is a central
/// finite difference.
MatrixXd transform_jacobian(const VectorXd& x, const ModelSpec& spec);

/// Draw b ~ N(0, Psi) per subject, then y_j ~ Bernoulli(logistic(eta_j))
/// independently. Deterministic given seed.
ResponseData simulate_responses(const ParameterVector& theta, const ModelSpec& spec,
                                int n, uint64_t seed);

}  // namespace drml
