#include "drml/estimate.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <sstream>

namespace drml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double grad_step(double xk) {
  static const double h0 = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / 3.0);
  return h0 * std::max(1.0, std::abs(xk));
}

double hess_step(double xk) {
  static const double h0 = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / 4.0);
  return h0 * std::max(1.0, std::abs(xk));
}

// -total_loglik on the unconstrained scale. Inner-solver failures surface
// as +inf so the line search rejects the trial point.
class Objective {
public:
  Objective(const ResponseData& data, const ModelSpec& spec, const ApproxConfig& config,
            const InnerOptions& inner, int threads)
      : data_(data), spec_(spec), config_(config), inner_(inner), threads_(threads) {}

  double operator()(const VectorXd& x) {
    try {
      ParameterVector theta = unpack(x, spec_);
      LogLikResult r = total_loglik(data_, theta, spec_, config_, &cache_, inner_, threads_);
      last_fallbacks = r.bracket_fallbacks;
      return -r.value;
    } catch (const ModeFailure&) {
      return kInf;
    } catch (const std::domain_error&) {
      return kInf;
    }
  }

  int last_fallbacks = 0;

private:
  const ResponseData& data_;
  const ModelSpec& spec_;
  const ApproxConfig& config_;
  InnerOptions inner_;
  int threads_;
  ModeCache cache_;
};

}  // namespace

VectorXd numerical_gradient(const std::function<double(const VectorXd&)>& f,
                            const VectorXd& x) {
  const int d = int(x.size());
  VectorXd g(d);
  VectorXd probe = x;
  for (int k = 0; k < d; ++k) {
    double h = grad_step(x[k]);
    double fp = 0.0, fm = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt <= 5; ++attempt) {
      probe[k] = x[k] + h;
      fp = f(probe);
      probe[k] = x[k] - h;
      fm = f(probe);
      probe[k] = x[k];
      if (std::isfinite(fp) && std::isfinite(fm)) {
        ok = true;
        break;
      }
      h *= 0.5;
    }
    if (!ok)
      throw std::runtime_error("numerical_gradient: non-finite value near coordinate " +
                               std::to_string(k) + " after 5 step halvings");
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

MatrixXd numerical_hessian(const std::function<double(const VectorXd&)>& f,
                           const VectorXd& x) {
  const int d = int(x.size());
  MatrixXd H(d, d);
  VectorXd h(d);
  for (int k = 0; k < d; ++k) h[k] = hess_step(x[k]);

  const double f0 = f(x);
  VectorXd probe = x;
  for (int i = 0; i < d; ++i) {
    probe[i] = x[i] + h[i];
    double fp = f(probe);
    probe[i] = x[i] - h[i];
    double fm = f(probe);
    probe[i] = x[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      probe[i] = x[i] + h[i];
      probe[j] = x[j] + h[j];
      double fpp = f(probe);
      probe[j] = x[j] - h[j];
      double fpm = f(probe);
      probe[i] = x[i] - h[i];
      double fmm = f(probe);
      probe[j] = x[j] + h[j];
      double fmp = f(probe);
      probe[i] = x[i];
      probe[j] = x[j];
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
    }
  }
  return H;
}

MinimizeResult bfgs_minimize(const std::function<double(const VectorXd&)>& f,
                             const VectorXd& x0, const FitOptions& options,
                             const std::function<void(const VectorXd&)>& on_accept) {
  const int d = int(x0.size());
  MinimizeResult result;
  long long n_calls = 0;
  auto fc = [&](const VectorXd& v) {
    ++n_calls;
    return f(v);
  };

  VectorXd x = x0;
  double fx = fc(x);
  result.x = x;
  result.value = fx;
  result.gradient_norm = kInf;
  if (!std::isfinite(fx)) {
    result.n_calls = n_calls;
    return result;
  }
  if (on_accept) on_accept(x);

  const long long grad_cost = 2LL * d;
  if (n_calls + grad_cost > options.max_feval) {
    result.n_calls = n_calls;
    return result;
  }
  VectorXd g;
  try {
    g = numerical_gradient(fc, x);
  } catch (const std::runtime_error&) {
    result.n_calls = n_calls;
    return result;
  }

  MatrixXd Hinv = MatrixXd::Identity(d, d);
  bool tolerances_met = g.lpNorm<Eigen::Infinity>() < options.grad_tol;

  for (int iter = 0; iter < options.max_iterations && !tolerances_met; ++iter) {
    if (n_calls >= options.max_feval) break;

    VectorXd dir = -(Hinv * g);
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      dir = -g;
      slope = g.dot(dir);
      if (!(slope < 0.0)) break;  // gradient numerically zero
    }

    double t = 1.0;
    double f_new = kInf;
    VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40 && n_calls < options.max_feval; ++ls) {
      x_new = x + t * dir;
      f_new = fc(x_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    if (on_accept) on_accept(x_new);

    if (n_calls + grad_cost > options.max_feval) {
      x = x_new;
      fx = f_new;
      break;
    }
    VectorXd g_new;
    try {
      g_new = numerical_gradient(fc, x_new);
    } catch (const std::runtime_error&) {
      x = x_new;
      fx = f_new;
      break;
    }

    const double rel_change = std::abs(f_new - fx) / std::max(1.0, std::abs(f_new));
    VectorXd step = x_new - x;
    VectorXd dg = g_new - g;
    x = x_new;
    fx = f_new;
    g = g_new;
    if (rel_change < options.loglik_rel_tol &&
        g.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      tolerances_met = true;
      break;
    }

    double sy = step.dot(dg);
    if (sy > 1e-10 * step.norm() * dg.norm()) {
      double rho = 1.0 / sy;
      MatrixXd left = MatrixXd::Identity(d, d) - rho * step * dg.transpose();
      Hinv = left * Hinv * left.transpose() + rho * step * step.transpose();
    }
  }

  if (tolerances_met) {
    result.hessian = numerical_hessian(fc, x);
    MatrixXd sym = 0.5 * (result.hessian + result.hessian.transpose());
    Eigen::LLT<MatrixXd> llt(sym);
    result.hessian_pd = (llt.info() == Eigen::Success);
  }

  result.x = x;
  result.value = fx;
  result.tolerances_met = tolerances_met;
  result.gradient_norm = g.size() == d ? g.lpNorm<Eigen::Infinity>() : kInf;
  result.n_calls = n_calls;
  return result;
}

FitResult fit(const ResponseData& data, const ModelSpec& spec, const ApproxConfig& config,
              const ParameterVector& start, const FitOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  validate_config(config, spec.q);
  if (data.y.cols() != spec.n_responses)
    throw std::invalid_argument("fit: data has " + std::to_string(data.y.cols()) +
                                " columns, model expects " +
                                std::to_string(spec.n_responses));

  // Items with no variation leave their intercept and loadings weakly
  // identified; warn and continue so replication harnesses keep counting.
  for (int j = 0; j < spec.n_responses; ++j) {
    int s = data.y.col(j).sum();
    if (s == 0 || s == data.n)
      std::fprintf(stderr,
                   "warning: response column %d is constant (%s); weakly identified\n",
                   j + 1, s == 0 ? "all 0" : "all 1");
  }

  Objective obj(data, spec, config, options.inner, options.threads);
  int fallbacks_at_best = 0;
  MinimizeResult min = bfgs_minimize(
      [&obj](const VectorXd& v) { return obj(v); }, pack(start, spec), options,
      [&](const VectorXd&) { fallbacks_at_best = obj.last_fallbacks; });

  FitResult result;
  result.theta_unconstrained = min.x;
  result.theta_hat = unpack(min.x, spec);
  result.loglik = -min.value;
  result.converged = min.tolerances_met && min.hessian_pd;
  result.n_feval = min.n_calls;
  result.gradient_norm = min.gradient_norm;
  result.bracket_fallback_count = fallbacks_at_best;
  result.hessian_pd = min.hessian_pd;
  result.hessian_unconstrained = min.hessian;
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

VectorXd sandwich_se(const ResponseData& data, const ParameterVector& theta_hat,
                     const ModelSpec& spec, const ApproxConfig& config,
                     const FitOptions& options) {
  const int d = spec.n_free();
  const int n = data.n;
  VectorXd x = pack(theta_hat, spec);

  ModeCache cache;
  auto loglik_vec = [&](const VectorXd& v) {
    ParameterVector th = unpack(v, spec);
    return total_loglik(data, th, spec, config, &cache, options.inner, options.threads);
  };
  auto objfn = [&](const VectorXd& v) { return -loglik_vec(v).value; };

  // H: per-subject expected negative Hessian, empirical plug-in.
  MatrixXd H = numerical_hessian(objfn, x) / double(n);

  // Per-subject score contributions by central differences.
  MatrixXd scores(n, d);
  VectorXd probe = x;
  for (int k = 0; k < d; ++k) {
    double h = grad_step(x[k]);
    probe[k] = x[k] + h;
    std::vector<double> up = loglik_vec(probe).per_subject;
    probe[k] = x[k] - h;
    std::vector<double> dn = loglik_vec(probe).per_subject;
    probe[k] = x[k];
    for (int l = 0; l < n; ++l) scores(l, k) = (up[l] - dn[l]) / (2.0 * h);
  }
  MatrixXd U = scores.transpose() * scores / double(n);

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (H + H.transpose()));
  const VectorXd evals = es.eigenvalues();
  const double scale = evals.cwiseAbs().maxCoeff();
  for (int k = 0; k < d; ++k) {
    if (std::abs(evals[k]) <= 1e-10 * std::max(scale, 1e-300)) {
      std::ostringstream msg;
      msg << "sandwich_se: Hessian singular along direction [";
      const auto names = spec.parameter_names();
      VectorXd dir = es.eigenvectors().col(k);
      int lead;
      dir.cwiseAbs().maxCoeff(&lead);
      msg << names[lead] << "-dominated eigenvector, eigenvalue " << evals[k] << "]";
      throw std::domain_error(msg.str());
    }
  }

  MatrixXd Hinv =
      es.eigenvectors() * evals.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  MatrixXd cov_unc = Hinv * U * Hinv / double(n);

  MatrixXd J = transform_jacobian(x, spec);
  MatrixXd cov_con = J * cov_unc * J.transpose();
  VectorXd se(d);
  for (int k = 0; k < d; ++k) se[k] = std::sqrt(std::max(0.0, cov_con(k, k)));
  return se;
}

}  // namespace drml
