#include "drml/approx.hpp"

#include <limits>

namespace drml {

namespace {

long long binom_ll(int m, int k) {
  // C(m, 0) = 1 for all integer m (including negative); C(m, k) = 0 when
  // 0 <= m < k; unreachable combinations (m < 0, k > 0) return 0.
  if (k == 0) return 1;
  if (m < 0) return 0;
  if (m < k) return 0;
  k = std::min(k, m - k);
  long long r = 1;
  for (int j = 1; j <= k; ++j) r = r * (m - k + j) / j;
  return r;
}

}  // namespace

long long hdmr_coefficient(int q, int s, int i) {
  if (i < 0 || i > s || s > q)
    throw std::invalid_argument("hdmr_coefficient: need 0 <= i <= s <= q");
  long long c = binom_ll(q - i - 1, s - i);
  return ((s - i) % 2 == 0) ? c : -c;
}

long long eval_count(int q, int s, int n_q) {
  if (s < 0 || s > q) throw std::invalid_argument("eval_count: need 0 <= s <= q");
  const long long cap = std::numeric_limits<long long>::max();
  auto powll = [&](long long base, int e) {
    long long r = 1;
    for (int j = 0; j < e; ++j) {
      if (r > cap / base) return cap;
      r *= base;
    }
    return r;
  };
  if (s == q) return powll(n_q, q);
  long long total = 0;
  for (int j = 0; j <= s; ++j) {
    long long term = binom_ll(q, j);
    long long pw = powll(n_q, j);
    if (term > 0 && pw > cap / term) return cap;
    total += term * pw;
  }
  return total;
}

void validate_config(const ApproxConfig& config, int q) {
  if (config.s < 0 || config.s > q)
    throw std::invalid_argument("approx: truncation order s must be in [0, q = " +
                                std::to_string(q) + "], got " + std::to_string(config.s));
  if (config.s >= 1 && config.n_q < 1)
    throw std::invalid_argument("approx: n_q must be >= 1 when s >= 1");
  if (config.s >= 1) {
    long long ec = eval_count(q, config.s, config.n_q);
    if (ec > config.grid_budget)
      throw std::invalid_argument(
          "approx: configuration needs " + std::to_string(ec) +
          " integrand evaluations per subject, above the budget of " +
          std::to_string(config.grid_budget) + "; reduce s or n_q");
  }
}

SubjectLogLik marginal_loglik_subject(const ModelAtTheta& model,
                                      const Eigen::Ref<const Eigen::VectorXi>& y,
                                      const ApproxConfig& config,
                                      const GaussHermiteRule& rule,
                                      const SubjectMode& mode) {
  const int q = model.spec->q;
  const int s = config.s;

  double logdet_sigma = 0.0;
  for (int k = 0; k < q; ++k) logdet_sigma += 2.0 * std::log(mode.chol(k, k));
  const double laplace = 0.5 * q * std::log(2.0 * M_PI) + 0.5 * logdet_sigma +
                         mode.log_density;

  SubjectLogLik out;
  if (s == 0) {
    out.value = laplace;
    out.eval_count = 1;  // the mode evaluation
    return out;
  }

  const int n = rule.order;
  const double sqrt2 = std::sqrt(2.0);
  long long evals = 0;

  KahanSum bracket;
  bracket.add(double(hdmr_coefficient(q, s, 0)));

  VectorXd b_t(q);
  for (int i = 1; i <= s; ++i) {
    const long long coeff = hdmr_coefficient(q, s, i);
    if (coeff == 0) continue;  // i < s = q: those levels drop out exactly

    KahanSum level;
    std::vector<int> t(i, 0);
    for (const auto& subset : combinations(q, i)) {
      std::fill(t.begin(), t.end(), 0);
      long long grid = 1;
      for (int j = 0; j < i; ++j) grid *= n;
      for (long long c = 0; c < grid; ++c) {
        double logw = 0.0, sq = 0.0;
        b_t = mode.mode;
        for (int j = 0; j < i; ++j) {
          const double node = rule.nodes[t[j]];
          logw += rule.log_weights[t[j]];
          sq += node * node;
          b_t.noalias() += (sqrt2 * node) * mode.chol.col(subset[j]);
        }
        const double lt = model.joint_logdensity(y, b_t);
        ++evals;
        level.add(std::exp(lt - mode.log_density + sq + logw));
        for (int j = i - 1; j >= 0; --j) {
          if (++t[j] < n) break;
          t[j] = 0;
        }
      }
    }
    bracket.add(double(coeff) * std::pow(M_PI, -0.5 * i) * level.value());
  }
  if (s < q) ++evals;  // the mode evaluation feeding the constant term

  out.eval_count = evals;
  const double b_val = bracket.value();
  if (!(b_val > 0.0)) {
    if (config.fallback == FallbackPolicy::Strict)
      throw std::domain_error("marginal_loglik_subject: nonpositive bracket (" +
                              std::to_string(b_val) + ") under strict fallback policy");
    out.bracket_nonpositive = true;
    out.value = laplace;  // B := 1
    return out;
  }
  out.value = laplace + std::log(b_val);
  return out;
}

LogLikResult total_loglik(const ResponseData& data, const ParameterVector& theta,
                          const ModelSpec& spec, const ApproxConfig& config,
                          ModeCache* cache, const InnerOptions& inner, int threads) {
  validate_config(config, spec.q);
  if (data.y.cols() != spec.n_responses)
    throw std::invalid_argument("total_loglik: data has " + std::to_string(data.y.cols()) +
                                " columns, model expects " +
                                std::to_string(spec.n_responses));

  const ModelAtTheta model(theta, spec);
  GaussHermiteRule rule;
  if (config.s >= 1) rule = gh_rule(config.n_q);

  const int n = data.n;
  if (cache && int(cache->modes.size()) != n) cache->reset(n);

  std::vector<double> values(n);
  std::vector<long long> counts(n, 0);
  std::vector<char> fallbacks(n, 0);
  std::vector<std::exception_ptr> errors(n);

  parallel_for(n, threads, [&](int l) {
    try {
      const VectorXd* warm =
          (cache && cache->filled && cache->modes[l].size() == spec.q) ? &cache->modes[l]
                                                                       : nullptr;
      SubjectMode mode = find_mode(model, data.y.row(l), warm, inner);
      if (cache) cache->modes[l] = mode.mode;
      SubjectLogLik s = marginal_loglik_subject(model, data.y.row(l), config, rule, mode);
      values[l] = s.value;
      counts[l] = s.eval_count;
      fallbacks[l] = s.bracket_nonpositive ? 1 : 0;
    } catch (...) {
      errors[l] = std::current_exception();
    }
  });

  for (int l = 0; l < n; ++l)
    if (errors[l]) std::rethrow_exception(errors[l]);
  if (cache) cache->filled = true;

  LogLikResult result;
  result.per_subject = values;
  result.value = stable_sum(values);
  for (int l = 0; l < n; ++l) {
    result.eval_count += counts[l];
    result.bracket_fallbacks += fallbacks[l];
  }
  return result;
}

}  // namespace drml
