#include "drml/quadrature.hpp"

#include <Eigen/Eigenvalues>

namespace drml {

namespace {

// Orthonormal Hermite polynomials for weight exp(-x^2):
// p_{k+1} = x sqrt(2/(k+1)) p_k - sqrt(k/(k+1)) p_{k-1}, p_0 = pi^{-1/4}.
// Returns p_n(x) and p_{n-1}(x).
void ortho_hermite(int n, double x, double& pn, double& pnm1) {
  double p0 = std::pow(M_PI, -0.25);
  if (n == 0) {
    pn = p0;
    pnm1 = 0.0;
    return;
  }
  double pm1 = 0.0, p = p0;
  for (int k = 0; k < n; ++k) {
    double pnew = x * std::sqrt(2.0 / (k + 1)) * p - std::sqrt(double(k) / (k + 1)) * pm1;
    pm1 = p;
    p = pnew;
  }
  pn = p;
  pnm1 = pm1;
}

}  // namespace

GaussHermiteRule gh_rule(int n_q) {
  if (n_q < 1 || n_q > 64)
    throw std::invalid_argument("gh_rule: order must be in [1, 64], got " + std::to_string(n_q));

  GaussHermiteRule rule;
  rule.order = n_q;
  rule.nodes.resize(n_q);
  rule.weights.resize(n_q);
  rule.log_weights.resize(n_q);

  if (n_q == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = std::sqrt(M_PI);
    rule.log_weights[0] = 0.5 * std::log(M_PI);
    return rule;
  }

  // Jacobi matrix of the recurrence: zero diagonal, off-diagonal sqrt(k/2).
  MatrixXd J = MatrixXd::Zero(n_q, n_q);
  for (int k = 1; k < n_q; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(J);
  VectorXd x = es.eigenvalues();  // ascending

  // Eigenvalues are accurate to ~eps*||J|| absolutely, which is not enough
  // relative accuracy for the extreme weights at high order. Polish each
  // root with Newton on the orthonormal recurrence, then take the weight
  // from the derivative identity.
  for (int i = 0; i < n_q; ++i) {
    double z = x[i];
    for (int it = 0; it < 4; ++it) {
      double pn, pnm1;
      ortho_hermite(n_q, z, pn, pnm1);
      double dp = std::sqrt(2.0 * n_q) * pnm1;
      double step = pn / dp;
      z -= step;
      if (std::abs(step) < 1e-15 * (1.0 + std::abs(z))) break;
    }
    double pn, pnm1;
    ortho_hermite(n_q, z, pn, pnm1);
    x[i] = z;
    rule.weights[i] = 1.0 / (n_q * pnm1 * pnm1);
  }

  // Enforce exact symmetry: nodes mirrored, mirror weights averaged.
  for (int k = 0; k < n_q / 2; ++k) {
    int m = n_q - 1 - k;
    double t = 0.5 * (x[m] - x[k]);
    x[m] = t;
    x[k] = -t;
    double w = 0.5 * (rule.weights[k] + rule.weights[m]);
    rule.weights[k] = rule.weights[m] = w;
  }
  if (n_q % 2 == 1) x[n_q / 2] = 0.0;

  rule.nodes = x;
  for (int i = 0; i < n_q; ++i) rule.log_weights[i] = std::log(rule.weights[i]);
  return rule;
}

std::vector<EmbeddedPoint> subset_points(const GaussHermiteRule& rule, int q,
                                         const std::vector<int>& subset) {
  const int i = int(subset.size());
  if (i < 1 || i > q)
    throw std::invalid_argument("subset_points: subset size must be in [1, q]");
  for (int j = 0; j < i; ++j) {
    if (subset[j] < 0 || subset[j] >= q)
      throw std::invalid_argument("subset_points: index " + std::to_string(subset[j]) +
                                  " out of range [0, " + std::to_string(q) + ")");
    if (j > 0 && subset[j] <= subset[j - 1])
      throw std::invalid_argument("subset_points: indices must be strictly ascending");
  }

  const int n = rule.order;
  long count = 1;
  for (int j = 0; j < i; ++j) count *= n;

  std::vector<EmbeddedPoint> out;
  out.reserve(count);
  std::vector<int> t(i, 0);  // odometer over node indices, last fastest
  for (long c = 0; c < count; ++c) {
    EmbeddedPoint pt;
    pt.coordinates = VectorXd::Zero(q);
    double logw = 0.0, sq = 0.0;
    for (int j = 0; j < i; ++j) {
      double b = rule.nodes[t[j]];
      pt.coordinates[subset[j]] = b;
      logw += rule.log_weights[t[j]];
      sq += b * b;
    }
    pt.log_weight = logw;
    pt.node_sqnorm = sq;
    pt.weight_product = std::exp(logw + sq);
    out.push_back(std::move(pt));
    for (int j = i - 1; j >= 0; --j) {
      if (++t[j] < n) break;
      t[j] = 0;
    }
  }
  return out;
}

}  // namespace drml
