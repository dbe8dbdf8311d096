#pragma once

#include <vector>

#include "drml/common.hpp"

namespace drml {

/// Gauss-Hermite rule for the weight function exp(-x^2).
/// Nodes ascending, weights paired positionally, all strictly positive.
struct GaussHermiteRule {
  int order = 0;
  VectorXd nodes;
  VectorXd weights;
  VectorXd log_weights;
};

/// n_q-point Gauss-Hermite rule, 1 <= n_q <= 64. Nodes from the symmetric
/// tridiagonal (Golub-Welsch) eigenproblem on the Hermite recurrence,
/// polished by Newton steps on the orthonormal recurrence; weights from the
/// derivative identity w = 1 / (n * p_{n-1}(x)^2). Deterministic; exactly
/// symmetric about zero.
GaussHermiteRule gh_rule(int n_q);

/// One node of a reduced-dimension grid: a q-vector that is zero outside a
/// coordinate subset, with its modified-weight product w* = w exp(b^2)
/// accumulated over the occupied coordinates.
struct EmbeddedPoint {
  VectorXd coordinates;
  double weight_product = 0.0;  // prod_j w_j exp(b_j^2)
  double log_weight = 0.0;      // sum_j log w_j
  double node_sqnorm = 0.0;     // sum_j b_j^2
};

/// Tensor grid of the rule restricted to `subset` (ascending 0-based indices
/// into [0, q)), all other coordinates exactly zero. Returns order^|subset|
/// points in odometer order (last index fastest). weight_product is computed
/// in log space and exponentiated once.
std::vector<EmbeddedPoint> subset_points(const GaussHermiteRule& rule, int q,
                                         const std::vector<int>& subset);

}  // namespace drml
