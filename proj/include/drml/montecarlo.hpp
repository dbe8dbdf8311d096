#pragma once

#include <optional>
#include <string>

#include "drml/estimate.hpp"

namespace drml {

/// Ranges for randomly drawn start values ("randomly chosen in a suitable
/// range"); all draws flow from one seed.
struct StartBox {
  double loading_lo = 0.5, loading_hi = 2.0;
  double corr_lo = 0.0, corr_hi = 0.3;
  double intercept_lo = -0.5, intercept_hi = 0.5;
  double phi_lo = 0.0, phi_hi = 0.9;
  double var_lo = 0.5, var_hi = 2.0;
};

/// Draw a start value from the box. Correlation draws are shrunk toward
/// zero until the implied matrix is positive definite.
ParameterVector draw_start(const ModelSpec& spec, const StartBox& box, uint64_t seed);

struct NamedConfig {
  std::string label;
  ApproxConfig config;
};

struct ScenarioSpec {
  std::string name;
  ModelSpec model;
  ParameterVector true_theta;
  int n = 500;
  int replications = 100;
  std::vector<NamedConfig> configs;
  uint64_t seed = 1;
  StartBox start_box;
  FitOptions fit_options;
  int workers = 1;  // replication-level parallelism
};

struct ReplicationRecord {
  int replication = 0;  // 1-based
  std::string config_label;
  FitResult result;
  VectorXd estimates;  // flat constrained, sign-aligned
};

struct ConfigMetrics {
  std::string label;
  VectorXd mean;   // over converged replications
  VectorXd rbias;  // (mean - true)/true; NaN where true == 0
  VectorXd sd;     // sample s.d. over converged replications
  int n_converged = 0;
  double pct_converged = 0.0;
  double avg_loglik = 0.0;   // over all replications
  double avg_n_feval = 0.0;  // over all replications
  double avg_time_s = 0.0;   // over all replications
  long long total_bracket_fallbacks = 0;
};

struct MetricsTable {
  std::string scenario_name;
  int n = 0;
  int replications = 0;
  uint64_t seed = 0;
  std::vector<std::string> parameter_names;
  VectorXd true_values;
  std::vector<ConfigMetrics> configs;
  std::vector<ReplicationRecord> records;  // raw log, replication-major
};

/// One replication: simulate with a seed derived from (base, rep), draw a
/// common start, fit under every config from the same data and start.
/// Parameter statistics aggregate converged replications only; %cv, eval
/// and time averages cover all. Fully reproducible given the base seed.
MetricsTable run_scenario(const ScenarioSpec& scenario);

/// Column statistics for one config from its replication records:
/// mean/RBias/S.d. over converged replications, the rest over all.
ConfigMetrics aggregate_config(const std::string& label,
                               const std::vector<const ReplicationRecord*>& records,
                               const VectorXd& true_values);

/// Reflect factor-model estimates whose loading columns came out globally
/// negative (the model is identified only up to column sign): flips the
/// column's loadings and the matching correlations. Identity for the
/// longitudinal family. Returns the flat constrained vector.
VectorXd sign_align(const ParameterVector& theta, const ModelSpec& spec);

/// Presets with published true values baked in: "scenario1" (q=2, p=4),
/// "scenario2" (q=4, p=8), "longitudinal" (p=5, T=3, q=8). Throws
/// std::invalid_argument listing the presets for unknown names.
ScenarioSpec scenario_preset(const std::string& name);
std::vector<std::string> scenario_preset_names();

/// Aligned-text rendering of a metrics table (one column block per config).
std::string format_metrics_table(const MetricsTable& table, bool show_timings);

}  // namespace drml
