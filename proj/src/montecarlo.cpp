#include "drml/montecarlo.hpp"

#include <Eigen/Cholesky>
#include <cstdio>
#include <sstream>

namespace drml {

ParameterVector draw_start(const ModelSpec& spec, const StartBox& box, uint64_t seed) {
  Rng rng(seed);
  ParameterVector theta;
  theta.intercepts.resize(spec.n_intercepts);
  for (int i = 0; i < spec.n_intercepts; ++i)
    theta.intercepts[i] = rng.uniform(box.intercept_lo, box.intercept_hi);
  theta.loadings.resize(spec.n_free_loadings);
  for (int i = 0; i < spec.n_free_loadings; ++i)
    theta.loadings[i] = rng.uniform(box.loading_lo, box.loading_hi);
  theta.covariance.resize(spec.n_cov_params);
  if (spec.family == CovarianceFamily::Correlation) {
    for (int i = 0; i < spec.n_cov_params; ++i)
      theta.covariance[i] = rng.uniform(box.corr_lo, box.corr_hi);
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::LLT<MatrixXd> llt(psi_matrix(theta, spec));
      if (llt.info() == Eigen::Success) break;
      theta.covariance *= 0.9;
    }
  } else {
    theta.covariance[0] = rng.uniform(box.phi_lo, box.phi_hi);
    for (int i = 1; i < spec.n_cov_params; ++i)
      theta.covariance[i] = rng.uniform(box.var_lo, box.var_hi);
  }
  return theta;
}

VectorXd sign_align(const ParameterVector& theta, const ModelSpec& spec) {
  if (spec.family != CovarianceFamily::Correlation) return theta.flat();
  ParameterVector out = theta;
  for (int k = 0; k < spec.q; ++k) {
    bool any = false, all_negative = true;
    for (int j = 0; j < spec.n_responses; ++j) {
      int idx = spec.cells[j][k].free_index;
      if (idx < 0) continue;
      any = true;
      if (out.loadings[idx] >= 0.0) all_negative = false;
    }
    if (!any || !all_negative) continue;
    for (int j = 0; j < spec.n_responses; ++j) {
      int idx = spec.cells[j][k].free_index;
      if (idx >= 0) out.loadings[idx] = -out.loadings[idx];
    }
    // flip the correlations touching this factor
    int a = 0;
    for (int k1 = 0; k1 < spec.q; ++k1)
      for (int k2 = k1 + 1; k2 < spec.q; ++k2, ++a)
        if (k1 == k || k2 == k) out.covariance[a] = -out.covariance[a];
  }
  return out.flat();
}

MetricsTable run_scenario(const ScenarioSpec& scenario) {
  const ModelSpec& spec = scenario.model;
  const int R = scenario.replications;
  const int C = int(scenario.configs.size());
  if (R < 1) throw std::invalid_argument("run_scenario: replications must be >= 1");
  if (C < 1) throw std::invalid_argument("run_scenario: no approximation configs given");
  for (const auto& nc : scenario.configs) validate_config(nc.config, spec.q);

  MetricsTable table;
  table.scenario_name = scenario.name;
  table.n = scenario.n;
  table.replications = R;
  table.seed = scenario.seed;
  table.parameter_names = spec.parameter_names();
  table.true_values = scenario.true_theta.flat();
  table.records.resize(size_t(R) * C);

  parallel_for(R, scenario.workers, [&](int r) {
    // Common data and start across configs within a replication.
    uint64_t data_seed = derive_seed(scenario.seed, uint64_t(r), 0);
    uint64_t start_seed = derive_seed(scenario.seed, uint64_t(r), 1);
    ResponseData data = simulate_responses(scenario.true_theta, spec, scenario.n, data_seed);
    ParameterVector start = draw_start(spec, scenario.start_box, start_seed);
    for (int c = 0; c < C; ++c) {
      ReplicationRecord& rec = table.records[size_t(r) * C + c];
      rec.replication = r + 1;
      rec.config_label = scenario.configs[c].label;
      rec.result = fit(data, spec, scenario.configs[c].config, start, scenario.fit_options);
      rec.estimates = sign_align(rec.result.theta_hat, spec);
    }
  });

  for (int c = 0; c < C; ++c) {
    std::vector<const ReplicationRecord*> records;
    records.reserve(R);
    for (int r = 0; r < R; ++r) records.push_back(&table.records[size_t(r) * C + c]);
    table.configs.push_back(
        aggregate_config(scenario.configs[c].label, records, table.true_values));
  }
  return table;
}

ConfigMetrics aggregate_config(const std::string& label,
                               const std::vector<const ReplicationRecord*>& records,
                               const VectorXd& true_values) {
  const int d = int(true_values.size());
  const int R = int(records.size());
  ConfigMetrics m;
  m.label = label;
  VectorXd sum = VectorXd::Zero(d), sumsq = VectorXd::Zero(d);
  double loglik_sum = 0.0, feval_sum = 0.0, time_sum = 0.0;
  int n_conv = 0;
  for (const ReplicationRecord* rec : records) {
    loglik_sum += rec->result.loglik;
    feval_sum += double(rec->result.n_feval);
    time_sum += rec->result.wall_time_s;
    m.total_bracket_fallbacks += rec->result.bracket_fallback_count;
    if (rec->result.converged) {
      ++n_conv;
      sum += rec->estimates;
      sumsq += rec->estimates.cwiseProduct(rec->estimates);
    }
  }
  m.n_converged = n_conv;
  m.pct_converged = 100.0 * n_conv / R;
  m.avg_loglik = loglik_sum / R;
  m.avg_n_feval = feval_sum / R;
  m.avg_time_s = time_sum / R;
  m.mean = VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
  m.rbias = m.mean;
  m.sd = m.mean;
  if (n_conv >= 1) {
    m.mean = sum / n_conv;
    for (int k = 0; k < d; ++k) {
      double tv = true_values[k];
      m.rbias[k] = std::abs(tv) > 1e-12 ? (m.mean[k] - tv) / tv
                                        : std::numeric_limits<double>::quiet_NaN();
      if (n_conv >= 2) {
        double var = (sumsq[k] - n_conv * m.mean[k] * m.mean[k]) / (n_conv - 1);
        m.sd[k] = std::sqrt(std::max(0.0, var));
      }
    }
  }
  return m;
}

ScenarioSpec scenario_preset(const std::string& name) {
  auto free_cell = [](double start) { return LoadingCell{0, start}; };
  auto fixed0 = []() { return LoadingCell{-1, 0.0}; };

  ScenarioSpec sc;
  sc.name = name;
  if (name == "scenario1") {
    // two correlated factors, four items, simple structure
    std::vector<std::vector<LoadingCell>> pattern = {
        {free_cell(1.0), fixed0()},
        {free_cell(1.0), fixed0()},
        {fixed0(), free_cell(1.0)},
        {fixed0(), free_cell(1.0)},
    };
    sc.model = ModelSpec::correlation(4, 2, pattern);
    sc.true_theta.intercepts = VectorXd::Zero(4);
    sc.true_theta.loadings.resize(4);
    sc.true_theta.loadings << 2.697, 0.933, 1.232, 1.634;
    sc.true_theta.covariance.resize(1);
    sc.true_theta.covariance << 0.469;
    sc.n = 500;
    sc.replications = 100;
    sc.configs = {{"Laplace", ApproxConfig{0, 5}},
                  {"DRM5(s=1)", ApproxConfig{1, 5}},
                  {"AGH5", ApproxConfig{2, 5}}};
  } else if (name == "scenario2") {
    // four correlated factors, eight items, two items per factor
    std::vector<std::vector<LoadingCell>> pattern;
    for (int j = 0; j < 8; ++j) {
      std::vector<LoadingCell> row(4, fixed0());
      row[j / 2] = free_cell(1.0);
      pattern.push_back(row);
    }
    sc.model = ModelSpec::correlation(8, 4, pattern);
    sc.true_theta.intercepts = VectorXd::Zero(8);
    sc.true_theta.loadings.resize(8);
    sc.true_theta.loadings << 2.697, 0.933, 1.659, 1.241, 1.486, 1.156, 0.756, 0.884;
    sc.true_theta.covariance.resize(6);
    sc.true_theta.covariance << 0.470, 0.534, 0.480, 0.405, 0.440, 0.571;
    sc.n = 500;
    sc.replications = 100;
    sc.configs = {{"Laplace", ApproxConfig{0, 5}},
                  {"DRM5(s=1)", ApproxConfig{1, 5}},
                  {"DRM5(s=2)", ApproxConfig{2, 5}},
                  {"DRM5(s=3)", ApproxConfig{3, 5}},
                  {"AGH5", ApproxConfig{4, 5}}};
  } else if (name == "longitudinal") {
    // five items over three waves, AR(1) factor plus item random effects
    sc.model = ModelSpec::longitudinal(5, 3);
    sc.true_theta.intercepts = VectorXd::Zero(5);
    sc.true_theta.loadings.resize(4);
    sc.true_theta.loadings << 0.585, 0.531, 0.619, 0.720;
    sc.true_theta.covariance.resize(7);
    sc.true_theta.covariance << 0.994, 5.715, 0.573, 1.370, 0.741, 0.699, 0.404;
    sc.n = 300;
    sc.replications = 10;
    sc.configs = {{"DRM5(s=1)", ApproxConfig{1, 5}}, {"DRM5(s=2)", ApproxConfig{2, 5}}};
  } else {
    std::string names;
    for (const auto& s : scenario_preset_names()) names += (names.empty() ? "" : ", ") + s;
    throw std::invalid_argument("unknown preset '" + name + "'; available: " + names);
  }
  return sc;
}

std::vector<std::string> scenario_preset_names() {
  return {"scenario1", "scenario2", "longitudinal"};
}

std::string format_metrics_table(const MetricsTable& table, bool show_timings) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "Scenario %s: n=%d, replications=%d, seed=%llu\n\n",
                table.scenario_name.c_str(), table.n, table.replications,
                (unsigned long long)table.seed);
  os << buf;

  std::snprintf(buf, sizeof buf, "%-14s %9s", "parameter", "true");
  os << buf;
  for (const auto& c : table.configs) {
    std::snprintf(buf, sizeof buf, " | %27s", c.label.c_str());
    os << buf;
  }
  os << "\n";
  std::snprintf(buf, sizeof buf, "%-14s %9s", "", "");
  os << buf;
  for (size_t c = 0; c < table.configs.size(); ++c) {
    std::snprintf(buf, sizeof buf, " | %8s %9s %8s", "mean", "rbias", "s.d.");
    os << buf;
  }
  os << "\n";

  auto num = [&](double v, const char* fmt) {
    static char cell[64];
    if (std::isnan(v))
      std::snprintf(cell, sizeof cell, "%8s", "-");
    else
      std::snprintf(cell, sizeof cell, fmt, v);
    return std::string(cell);
  };

  for (size_t k = 0; k < table.parameter_names.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%-14s %9.3f", table.parameter_names[k].c_str(),
                  table.true_values[int(k)]);
    os << buf;
    for (const auto& c : table.configs) {
      os << " | " << num(c.mean[int(k)], "%8.3f") << " " << num(c.rbias[int(k)], "%9.3f")
         << " " << num(c.sd[int(k)], "%8.3f");
    }
    os << "\n";
  }

  auto footer = [&](const char* label, auto getter, const char* fmt) {
    std::snprintf(buf, sizeof buf, "%-24s", label);
    os << buf;
    for (const auto& c : table.configs) {
      std::snprintf(buf, sizeof buf, " | %27s", num(getter(c), fmt).c_str());
      os << buf;
    }
    os << "\n";
  };
  os << "\n";
  footer("Avlog-lik", [](const ConfigMetrics& c) { return c.avg_loglik; }, "%8.2f");
  footer("%cv", [](const ConfigMetrics& c) { return c.pct_converged; }, "%8.0f");
  footer("Nrfeval", [](const ConfigMetrics& c) { return c.avg_n_feval; }, "%8.2f");
  if (show_timings)
    footer("Avtime (s)", [](const ConfigMetrics& c) { return c.avg_time_s; }, "%8.2f");
  footer("bracket fallbacks",
         [](const ConfigMetrics& c) { return double(c.total_bracket_fallbacks); }, "%8.0f");
  return os.str();
}

}  // namespace drml
