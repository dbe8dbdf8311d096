#pragma once

#include "drml/inner.hpp"
#include "drml/quadrature.hpp"

namespace drml {

/// What to do when the signed quadrature bracket comes out nonpositive:
/// substitute the Laplace value and flag the subject, or raise.
enum class FallbackPolicy { Laplace, Strict };

/// Approximation order: s = 0 is the Laplace approximation, 0 < s < q the
/// dimension-reduced expansion, s = q the full adaptive tensor grid.
struct ApproxConfig {
  int s = 0;
  int n_q = 5;  // nodes per dimension, ignored when s = 0
  FallbackPolicy fallback = FallbackPolicy::Laplace;
  long long grid_budget = 200000;  // max integrand evaluations per subject
};

/// Expansion coefficient (-1)^{s-i} C(q-i-1, s-i), with C(m,0) = 1 for all
/// integer m and C(m,k) = 0 for 0 <= m < k.
long long hdmr_coefficient(int q, int s, int i);

/// Integrand evaluations per subject per likelihood evaluation:
/// sum_{j=0}^{s} C(q,j) n_q^j for s < q, and n_q^q for s = q.
long long eval_count(int q, int s, int n_q);

/// Throws std::invalid_argument if the config is out of range for q or the
/// per-subject evaluation count exceeds the grid budget.
void validate_config(const ApproxConfig& config, int q);

struct SubjectLogLik {
  double value = 0.0;
  bool bracket_nonpositive = false;
  long long eval_count = 0;
};

/// Approximated per-subject marginal log density
///   log f(y) ~= (q/2) log 2pi + (1/2) log|Sigma_hat| + L(b_hat) + log B,
/// where B is the signed bracket over reduced-dimension quadrature grids.
/// Each term is exp(L(b_t) - L(b_hat) + |t|^2 + sum log w), accumulated with
/// compensated summation; levels with zero coefficient are skipped.
SubjectLogLik marginal_loglik_subject(const ModelAtTheta& model,
                                      const Eigen::Ref<const Eigen::VectorXi>& y,
                                      const ApproxConfig& config,
                                      const GaussHermiteRule& rule,
                                      const SubjectMode& mode);

/// Per-subject warm starts for the inner Newton solver, indexed by row.
struct ModeCache {
  std::vector<VectorXd> modes;
  bool filled = false;
  void reset(int n) {
    modes.assign(n, VectorXd());
    filled = false;
  }
};

struct LogLikResult {
  double value = 0.0;
  std::vector<double> per_subject;
  long long eval_count = 0;
  int bracket_fallbacks = 0;
};

/// Sum of per-subject marginal log densities. Per-subject work may run in
/// parallel; the reduction sorts values first, so the total is bit-identical
/// under subject reordering and any thread count. Throws ModeFailure
/// (lowest failing row) if any inner solve fails.
LogLikResult total_loglik(const ResponseData& data, const ParameterVector& theta,
                          const ModelSpec& spec, const ApproxConfig& config,
                          ModeCache* cache = nullptr,
                          const InnerOptions& inner = InnerOptions{}, int threads = 1);

}  // namespace drml
