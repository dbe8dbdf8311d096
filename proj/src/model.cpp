#include "drml/model.hpp"

#include <Eigen/Cholesky>
#include <algorithm>

namespace drml {

namespace {

int pair_count(int q) { return q * (q - 1) / 2; }

// Correlation vector ordering: (0,1),(0,2),...,(0,q-1),(1,2),... matching
// the usual psi_{12}, psi_{13}, ... listing.
int pair_index(int q, int k1, int k2) {
  int idx = 0;
  for (int a = 0; a < k1; ++a) idx += q - 1 - a;
  return idx + (k2 - k1 - 1);
}

double logit(double u) { return std::log(u / (1.0 - u)); }

}  // namespace

ModelSpec ModelSpec::correlation(int p, int q,
                                 const std::vector<std::vector<LoadingCell>>& pattern) {
  if (p < 1 || q < 1) throw std::invalid_argument("correlation: p and q must be positive");
  if (int(pattern.size()) != p)
    throw std::invalid_argument("correlation: pattern must have p rows");

  ModelSpec spec;
  spec.family = CovarianceFamily::Correlation;
  spec.p = p;
  spec.q = q;
  spec.T = 1;
  spec.n_responses = p;
  spec.cells.assign(p, std::vector<LoadingCell>(q));
  spec.intercept_index.resize(p);

  int n_fixed = 0;
  int next_free = 0;
  std::vector<double> starts;
  for (int j = 0; j < p; ++j) {
    if (int(pattern[j].size()) != q)
      throw std::invalid_argument("correlation: pattern row " + std::to_string(j + 1) +
                                  " must have q cells");
    spec.intercept_index[j] = j;
    for (int k = 0; k < q; ++k) {
      LoadingCell c = pattern[j][k];
      if (c.free_index < 0) {
        ++n_fixed;
        spec.cells[j][k] = c;
      } else {
        spec.cells[j][k].free_index = next_free++;
        starts.push_back(c.fixed_value);  // free cells carry their start here
        spec.cells[j][k].fixed_value = 0.0;
      }
    }
  }
  if (q + n_fixed < q * q)
    throw std::invalid_argument(
        "correlation: pattern under-identified; need at least q^2 = " +
        std::to_string(q * q) + " constraints, have " + std::to_string(q + n_fixed));

  spec.n_intercepts = p;
  spec.n_free_loadings = next_free;
  spec.n_cov_params = pair_count(q);
  spec.intercept_starts = VectorXd::Zero(p);
  spec.loading_starts = Eigen::Map<VectorXd>(starts.data(), starts.size());
  spec.cov_starts = VectorXd::Zero(spec.n_cov_params);
  return spec;
}

ModelSpec ModelSpec::longitudinal(int p, int T) {
  if (p < 1 || T < 1) throw std::invalid_argument("longitudinal: p and T must be positive");

  ModelSpec spec;
  spec.family = CovarianceFamily::LongitudinalAR1;
  spec.p = p;
  spec.T = T;
  spec.q = p + T;
  spec.n_responses = p * T;
  spec.cells.assign(spec.n_responses, std::vector<LoadingCell>(spec.q));
  spec.intercept_index.resize(spec.n_responses);

  // Row (item j, time t) = j*T + t. Latents: z_1..z_T then u_1..u_p.
  for (int j = 0; j < p; ++j) {
    for (int t = 0; t < T; ++t) {
      int r = j * T + t;
      spec.intercept_index[r] = j;
      // time factor: loading alpha_j, tied over time, alpha_1 fixed to 1
      if (j == 0)
        spec.cells[r][t] = LoadingCell{-1, 1.0};
      else
        spec.cells[r][t] = LoadingCell{j - 1, 0.0};
      // own random effect: coefficient 1
      spec.cells[r][T + j] = LoadingCell{-1, 1.0};
    }
  }

  spec.n_intercepts = p;
  spec.n_free_loadings = p - 1;
  spec.n_cov_params = 2 + p;  // phi, s1sq, sigma_u^2
  spec.intercept_starts = VectorXd::Zero(p);
  spec.loading_starts = VectorXd::Constant(std::max(0, p - 1), 0.5);
  spec.cov_starts = VectorXd::Ones(spec.n_cov_params);
  spec.cov_starts[0] = 0.5;  // phi
  return spec;
}

std::vector<std::string> ModelSpec::parameter_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < n_intercepts; ++i) names.push_back("a0[" + std::to_string(i + 1) + "]");
  if (family == CovarianceFamily::Correlation) {
    // name each free loading by its (item, factor) cell
    std::vector<std::string> by_index(n_free_loadings);
    for (int j = 0; j < n_responses; ++j)
      for (int k = 0; k < q; ++k)
        if (cells[j][k].free_index >= 0)
          by_index[cells[j][k].free_index] =
              "alpha[" + std::to_string(j + 1) + "," + std::to_string(k + 1) + "]";
    for (auto& s : by_index) names.push_back(s);
    for (int k1 = 0; k1 < q; ++k1)
      for (int k2 = k1 + 1; k2 < q; ++k2)
        names.push_back("psi[" + std::to_string(k1 + 1) + "," + std::to_string(k2 + 1) + "]");
  } else {
    for (int j = 1; j < p; ++j) names.push_back("alpha[" + std::to_string(j + 1) + "]");
    names.push_back("phi");
    names.push_back("sigma1sq");
    for (int j = 0; j < p; ++j) names.push_back("sigmau2[" + std::to_string(j + 1) + "]");
  }
  return names;
}

VectorXd ParameterVector::flat() const {
  VectorXd v(intercepts.size() + loadings.size() + covariance.size());
  v << intercepts, loadings, covariance;
  return v;
}

ParameterVector ParameterVector::from_flat(const VectorXd& v, const ModelSpec& spec) {
  if (v.size() != spec.n_free())
    throw std::invalid_argument("from_flat: expected " + std::to_string(spec.n_free()) +
                                " parameters, got " + std::to_string(v.size()));
  ParameterVector theta;
  theta.intercepts = v.segment(0, spec.n_intercepts);
  theta.loadings = v.segment(spec.n_intercepts, spec.n_free_loadings);
  theta.covariance = v.segment(spec.n_intercepts + spec.n_free_loadings, spec.n_cov_params);
  return theta;
}

MatrixXd loading_matrix(const ParameterVector& theta, const ModelSpec& spec) {
  MatrixXd A(spec.n_responses, spec.q);
  for (int j = 0; j < spec.n_responses; ++j)
    for (int k = 0; k < spec.q; ++k) {
      const LoadingCell& c = spec.cells[j][k];
      A(j, k) = c.free_index < 0 ? c.fixed_value : theta.loadings[c.free_index];
    }
  return A;
}

VectorXd expanded_intercepts(const ParameterVector& theta, const ModelSpec& spec) {
  VectorXd a0(spec.n_responses);
  for (int j = 0; j < spec.n_responses; ++j) a0[j] = theta.intercepts[spec.intercept_index[j]];
  return a0;
}

VectorXd linear_predictor(const ParameterVector& theta, const ModelSpec& spec,
                          const VectorXd& b) {
  if (b.size() != spec.q)
    throw std::invalid_argument("linear_predictor: b must have length q = " +
                                std::to_string(spec.q));
  return expanded_intercepts(theta, spec) + loading_matrix(theta, spec) * b;
}

double log_measurement(const Eigen::Ref<const Eigen::VectorXi>& y, const VectorXd& eta) {
  if (y.size() != eta.size())
    throw std::invalid_argument("log_measurement: y and eta lengths differ");
  double s = 0.0;
  for (int j = 0; j < y.size(); ++j) s += y[j] * eta[j] - log1pexp(eta[j]);
  return s;
}

double log_structural(const VectorXd& b, const MatrixXd& psi) {
  const int q = int(b.size());
  if (psi.rows() != q || psi.cols() != q)
    throw std::invalid_argument("log_structural: dimension mismatch");
  Eigen::LLT<MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("log_structural: covariance not positive definite");
  double logdet = 0.0;
  for (int k = 0; k < q; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
  VectorXd z = llt.matrixL().solve(b);
  return -0.5 * q * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * z.squaredNorm();
}

MatrixXd covariance_longitudinal(double phi, double s1sq, const VectorXd& sigma_u_sq, int T) {
  if (T < 1) throw std::invalid_argument("covariance_longitudinal: T must be >= 1");
  if (!(s1sq > 0.0))
    throw std::invalid_argument("covariance_longitudinal: s1sq must be positive");
  for (int j = 0; j < sigma_u_sq.size(); ++j)
    if (!(sigma_u_sq[j] > 0.0))
      throw std::invalid_argument("covariance_longitudinal: sigma_u^2 must be positive");

  const int p = int(sigma_u_sq.size());
  MatrixXd psi = MatrixXd::Zero(T + p, T + p);
  for (int t = 1; t <= T; ++t) {
    double var = std::pow(phi, 2 * (t - 1)) * s1sq;
    for (int k = 1; k <= t - 1; ++k) var += std::pow(phi, 2 * (k - 1));
    psi(t - 1, t - 1) = var;
    for (int tp = t + 1; tp <= T; ++tp) {
      double cov = std::pow(phi, t + tp - 2) * s1sq;
      if (t >= 2)
        for (int k = 0; k <= t - 2; ++k) cov += std::pow(phi, tp - t + 2 * k);
      psi(t - 1, tp - 1) = psi(tp - 1, t - 1) = cov;
    }
  }
  for (int j = 0; j < p; ++j) psi(T + j, T + j) = sigma_u_sq[j];
  return psi;
}

MatrixXd psi_matrix(const ParameterVector& theta, const ModelSpec& spec) {
  if (spec.family == CovarianceFamily::LongitudinalAR1) {
    return covariance_longitudinal(theta.covariance[0], theta.covariance[1],
                                   theta.covariance.segment(2, spec.p), spec.T);
  }
  MatrixXd psi = MatrixXd::Identity(spec.q, spec.q);
  for (int k1 = 0; k1 < spec.q; ++k1)
    for (int k2 = k1 + 1; k2 < spec.q; ++k2)
      psi(k1, k2) = psi(k2, k1) = theta.covariance[pair_index(spec.q, k1, k2)];
  return psi;
}

namespace {

// Unit-row lower Cholesky factor from row-wise angles in (0, pi).
MatrixXd cholesky_from_angles(const VectorXd& angles, int q) {
  MatrixXd L = MatrixXd::Zero(q, q);
  L(0, 0) = 1.0;
  int a = 0;
  for (int j = 1; j < q; ++j) {
    double sin_prod = 1.0;
    for (int k = 0; k < j; ++k) {
      double th = angles[a++];
      L(j, k) = std::cos(th) * sin_prod;
      sin_prod *= std::sin(th);
    }
    L(j, j) = sin_prod;
  }
  return L;
}

VectorXd corr_from_unconstrained(const VectorXd& x, int q) {
  VectorXd angles(x.size());
  for (int i = 0; i < x.size(); ++i) angles[i] = M_PI * logistic(x[i]);
  MatrixXd L = cholesky_from_angles(angles, q);
  MatrixXd psi = L * L.transpose();
  VectorXd rho(pair_count(q));
  for (int k1 = 0; k1 < q; ++k1)
    for (int k2 = k1 + 1; k2 < q; ++k2) rho[pair_index(q, k1, k2)] = psi(k1, k2);
  return rho;
}

VectorXd corr_to_unconstrained(const VectorXd& rho, int q) {
  MatrixXd psi = MatrixXd::Identity(q, q);
  for (int k1 = 0; k1 < q; ++k1)
    for (int k2 = k1 + 1; k2 < q; ++k2)
      psi(k1, k2) = psi(k2, k1) = rho[pair_index(q, k1, k2)];
  Eigen::LLT<MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("pack: correlation matrix not positive definite");
  MatrixXd L = llt.matrixL();
  VectorXd x(pair_count(q));
  int a = 0;
  for (int j = 1; j < q; ++j) {
    double sin_prod = 1.0;
    for (int k = 0; k < j; ++k) {
      double c = L(j, k) / sin_prod;
      c = std::clamp(c, -1.0 + 1e-15, 1.0 - 1e-15);
      double th = std::acos(c);
      x[a++] = logit(th / M_PI);
      sin_prod *= std::sin(th);
    }
  }
  return x;
}

}  // namespace

VectorXd pack(const ParameterVector& theta, const ModelSpec& spec) {
  VectorXd x(spec.n_free());
  x.segment(0, spec.n_intercepts) = theta.intercepts;
  x.segment(spec.n_intercepts, spec.n_free_loadings) = theta.loadings;
  int off = spec.n_intercepts + spec.n_free_loadings;
  if (spec.family == CovarianceFamily::Correlation) {
    x.segment(off, spec.n_cov_params) = corr_to_unconstrained(theta.covariance, spec.q);
  } else {
    x[off] = theta.covariance[0];  // phi unconstrained
    for (int j = 1; j < spec.n_cov_params; ++j) x[off + j] = std::log(theta.covariance[j]);
  }
  return x;
}

ParameterVector unpack(const VectorXd& x, const ModelSpec& spec) {
  if (x.size() != spec.n_free())
    throw std::invalid_argument("unpack: expected " + std::to_string(spec.n_free()) +
                                " parameters, got " + std::to_string(x.size()));
  ParameterVector theta;
  theta.intercepts = x.segment(0, spec.n_intercepts);
  theta.loadings = x.segment(spec.n_intercepts, spec.n_free_loadings);
  int off = spec.n_intercepts + spec.n_free_loadings;
  if (spec.family == CovarianceFamily::Correlation) {
    theta.covariance = corr_from_unconstrained(x.segment(off, spec.n_cov_params), spec.q);
  } else {
    theta.covariance.resize(spec.n_cov_params);
    theta.covariance[0] = x[off];
    for (int j = 1; j < spec.n_cov_params; ++j) theta.covariance[j] = std::exp(x[off + j]);
  }
  return theta;
}

MatrixXd transform_jacobian(const VectorXd& x, const ModelSpec& spec) {
  const int d = spec.n_free();
  MatrixXd J = MatrixXd::Zero(d, d);
  int off = spec.n_intercepts + spec.n_free_loadings;
  for (int i = 0; i < off; ++i) J(i, i) = 1.0;
  if (spec.family == CovarianceFamily::LongitudinalAR1) {
    J(off, off) = 1.0;
    for (int j = 1; j < spec.n_cov_params; ++j) J(off + j, off + j) = std::exp(x[off + j]);
    return J;
  }
  const int m = spec.n_cov_params;
  const double h = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / 3.0);
  VectorXd xc = x.segment(off, m);
  for (int k = 0; k < m; ++k) {
    double hk = h * std::max(1.0, std::abs(xc[k]));
    VectorXd xp = xc, xm = xc;
    xp[k] += hk;
    xm[k] -= hk;
    VectorXd rp = corr_from_unconstrained(xp, spec.q);
    VectorXd rm = corr_from_unconstrained(xm, spec.q);
    J.block(off, off + k, m, 1) = (rp - rm) / (2.0 * hk);
  }
  return J;
}

ResponseData simulate_responses(const ParameterVector& theta, const ModelSpec& spec,
                                int n, uint64_t seed) {
  MatrixXd psi = psi_matrix(theta, spec);
  Eigen::LLT<MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("simulate_responses: covariance not positive definite");
  MatrixXd L = llt.matrixL();
  MatrixXd A = loading_matrix(theta, spec);
  VectorXd a0 = expanded_intercepts(theta, spec);

  ResponseData data;
  data.n = n;
  data.y.resize(n, spec.n_responses);
  Rng rng(seed);
  VectorXd z(spec.q);
  for (int l = 0; l < n; ++l) {
    rng.fill_normal(z);
    VectorXd eta = a0 + A * (L * z);
    for (int j = 0; j < spec.n_responses; ++j)
      data.y(l, j) = rng.bernoulli(logistic(eta[j])) ? 1 : 0;
  }
  return data;
}

}  // namespace drml
