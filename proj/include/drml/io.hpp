#pragma once

#include <optional>
#include <string>

#include "drml/montecarlo.hpp"

namespace drml {

/// Parsed model configuration: structure, start values and (when given)
/// true parameter values for simulation.
struct ModelConfig {
  ModelSpec spec;
  ParameterVector start;
  std::optional<ParameterVector> true_theta;
};

/// Line-oriented `key = value` format, '#' comments, repeatable `pattern`
/// rows for the correlation family. Unknown keys are rejected.
ModelConfig parse_model_config_text(const std::string& text);
ModelConfig parse_model_config(const std::string& path);

/// Scenario file: model keys plus n / replications / seed / configs
/// (tokens like `s0 s1:5 s2:5`) and start_* box ranges.
ScenarioSpec parse_scenario_config(const std::string& path);

/// Headerless CSV of 0/1 integers, one subject per row. Malformed cells
/// raise std::invalid_argument citing row and column (1-based).
ResponseData read_response_csv(const std::string& path, int expected_cols = -1);
void write_response_csv(const std::string& path, const ResponseData& data);

/// Machine-readable fit results. Doubles round-trip exactly. Timing fields
/// are written as 0 unless with_timings is set, so repeated runs with the
/// same seed produce byte-identical files.
void write_fit_json(const std::string& path, const FitResult& result,
                    const ModelSpec& spec, const ApproxConfig& config, bool with_timings);
FitResult read_fit_json(const std::string& path, const ModelSpec& spec);

void write_metrics_json(const std::string& path, const MetricsTable& table,
                        bool with_timings);

/// Raw per-replication log: one row per (replication, config, parameter).
void write_replication_csv(const std::string& path, const MetricsTable& table,
                           bool with_timings);

}  // namespace drml
