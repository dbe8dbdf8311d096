#include "drml/io.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

using nlohmann::json;

namespace drml {

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (...) {
    throw std::invalid_argument("config: bad number '" + s + "' in " + what);
  }
  if (pos != s.size())
    throw std::invalid_argument("config: bad number '" + s + "' in " + what);
  return v;
}

long to_long(const std::string& s, const std::string& what) {
  size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (...) {
    throw std::invalid_argument("config: bad integer '" + s + "' in " + what);
  }
  if (pos != s.size())
    throw std::invalid_argument("config: bad integer '" + s + "' in " + what);
  return v;
}

struct RawConfig {
  std::map<std::string, std::vector<std::string>> scalar;  // single-use keys
  std::vector<std::vector<std::string>> pattern_rows;
};

RawConfig parse_raw(const std::string& text, const std::vector<std::string>& allowed) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::vector<std::string> vals = tokens(line.substr(eq + 1));
    if (key == "pattern") {
      raw.pattern_rows.push_back(vals);
      continue;
    }
    bool known = false;
    for (const auto& a : allowed)
      if (key == a) known = true;
    if (!known)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
    if (raw.scalar.count(key))
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": duplicate key '" + key + "'");
    raw.scalar[key] = vals;
  }
  return raw;
}

const std::vector<std::string> kModelKeys = {
    "family",          "p",           "q",          "T",
    "intercept_start", "loading_start", "corr_start", "phi_start",
    "sigma1_start",    "sigmau_start",  "intercept_true", "loading_true",
    "corr_true",       "phi_true",      "sigma1_true",    "sigmau_true"};

const std::vector<std::string> kScenarioKeys = {
    "name", "n", "replications", "seed", "configs", "start_loading",
    "start_corr", "start_intercept", "start_phi", "start_var", "max_feval"};

VectorXd vec_from(const std::vector<std::string>& toks, const std::string& what,
                  int expected) {
  if (int(toks.size()) != expected)
    throw std::invalid_argument("config: " + what + " needs " + std::to_string(expected) +
                                " values, got " + std::to_string(toks.size()));
  VectorXd v(expected);
  for (int i = 0; i < expected; ++i) v[i] = to_double(toks[i], what);
  return v;
}

ModelConfig build_model(const RawConfig& raw) {
  auto get = [&](const std::string& k) -> const std::vector<std::string>* {
    auto it = raw.scalar.find(k);
    return it == raw.scalar.end() ? nullptr : &it->second;
  };
  auto require = [&](const std::string& k) -> const std::vector<std::string>& {
    const auto* v = get(k);
    if (!v) throw std::invalid_argument("config: missing required key '" + k + "'");
    return *v;
  };
  auto scalar_of = [&](const std::vector<std::string>& v, const std::string& k) {
    if (v.size() != 1)
      throw std::invalid_argument("config: key '" + k + "' takes one value");
    return v[0];
  };

  std::string family = scalar_of(require("family"), "family");
  ModelConfig mc;

  if (family == "correlation") {
    int p = int(to_long(scalar_of(require("p"), "p"), "p"));
    int q = int(to_long(scalar_of(require("q"), "q"), "q"));
    if (raw.pattern_rows.empty())
      throw std::invalid_argument("config: correlation family needs pattern rows");
    std::vector<std::vector<LoadingCell>> pattern;
    for (const auto& row : raw.pattern_rows) {
      std::vector<LoadingCell> cells;
      for (const auto& tok : row) {
        if (!tok.empty() && (tok[0] == 'F' || tok[0] == 'f'))
          cells.push_back(LoadingCell{-1, to_double(tok.substr(1), "pattern")});
        else
          cells.push_back(LoadingCell{0, to_double(tok, "pattern")});
      }
      pattern.push_back(std::move(cells));
    }
    mc.spec = ModelSpec::correlation(p, q, pattern);
    if (const auto* v = get("intercept_start"))
      mc.spec.intercept_starts = vec_from(*v, "intercept_start", p);
    if (const auto* v = get("corr_start"))
      mc.spec.cov_starts = vec_from(*v, "corr_start", mc.spec.n_cov_params);
    for (const char* k : {"loading_start", "phi_start", "sigma1_start", "sigmau_start",
                          "phi_true", "sigma1_true", "sigmau_true"})
      if (get(k))
        throw std::invalid_argument(std::string("config: key '") + k +
                                    "' does not apply to the correlation family");

    bool have_true = get("loading_true") || get("corr_true") || get("intercept_true");
    if (have_true) {
      ParameterVector t;
      t.intercepts = get("intercept_true")
                         ? vec_from(*get("intercept_true"), "intercept_true", p)
                         : VectorXd::Zero(p);
      t.loadings = vec_from(*(get("loading_true")
                                  ? get("loading_true")
                                  : throw std::invalid_argument(
                                        "config: loading_true required with true values")),
                            "loading_true", mc.spec.n_free_loadings);
      t.covariance = vec_from(*(get("corr_true")
                                    ? get("corr_true")
                                    : throw std::invalid_argument(
                                          "config: corr_true required with true values")),
                              "corr_true", mc.spec.n_cov_params);
      mc.true_theta = std::move(t);
    }
  } else if (family == "longitudinal") {
    int p = int(to_long(scalar_of(require("p"), "p"), "p"));
    int T = int(to_long(scalar_of(require("T"), "T"), "T"));
    if (!raw.pattern_rows.empty())
      throw std::invalid_argument(
          "config: the longitudinal family has a fixed pattern; remove pattern rows");
    if (const auto* v = get("q")) {
      if (to_long(scalar_of(*v, "q"), "q") != p + T)
        throw std::invalid_argument("config: longitudinal family has q = p + T");
    }
    mc.spec = ModelSpec::longitudinal(p, T);
    if (const auto* v = get("intercept_start"))
      mc.spec.intercept_starts = vec_from(*v, "intercept_start", p);
    if (const auto* v = get("loading_start"))
      mc.spec.loading_starts = vec_from(*v, "loading_start", p - 1);
    if (const auto* v = get("phi_start"))
      mc.spec.cov_starts[0] = to_double(scalar_of(*v, "phi_start"), "phi_start");
    if (const auto* v = get("sigma1_start"))
      mc.spec.cov_starts[1] = to_double(scalar_of(*v, "sigma1_start"), "sigma1_start");
    if (const auto* v = get("sigmau_start"))
      mc.spec.cov_starts.segment(2, p) = vec_from(*v, "sigmau_start", p);
    if (get("corr_start") || get("corr_true"))
      throw std::invalid_argument(
          "config: corr_* keys do not apply to the longitudinal family");

    bool have_true = get("loading_true") || get("phi_true") || get("sigma1_true") ||
                     get("sigmau_true") || get("intercept_true");
    if (have_true) {
      auto req_true = [&](const char* k) -> const std::vector<std::string>& {
        const auto* v = get(k);
        if (!v)
          throw std::invalid_argument(std::string("config: '") + k +
                                      "' required with true values");
        return *v;
      };
      ParameterVector t;
      t.intercepts = get("intercept_true")
                         ? vec_from(*get("intercept_true"), "intercept_true", p)
                         : VectorXd::Zero(p);
      t.loadings = vec_from(req_true("loading_true"), "loading_true", p - 1);
      t.covariance.resize(2 + p);
      t.covariance[0] = to_double(scalar_of(req_true("phi_true"), "phi_true"), "phi_true");
      t.covariance[1] =
          to_double(scalar_of(req_true("sigma1_true"), "sigma1_true"), "sigma1_true");
      t.covariance.segment(2, p) = vec_from(req_true("sigmau_true"), "sigmau_true", p);
      mc.true_theta = std::move(t);
    }
  } else {
    throw std::invalid_argument("config: family must be 'correlation' or 'longitudinal'");
  }

  mc.start.intercepts = mc.spec.intercept_starts;
  mc.start.loadings = mc.spec.loading_starts;
  mc.start.covariance = mc.spec.cov_starts;
  return mc;
}

NamedConfig parse_config_token(const std::string& tok, int q) {
  // s0 | s1:5 | s2:11 ...
  if (tok.size() < 2 || tok[0] != 's')
    throw std::invalid_argument("config: bad approximation token '" + tok +
                                "' (expected like s0, s1:5)");
  size_t colon = tok.find(':');
  int s = int(to_long(tok.substr(1, colon == std::string::npos ? std::string::npos
                                                               : colon - 1),
                      "configs"));
  int nq = 5;
  if (colon != std::string::npos) nq = int(to_long(tok.substr(colon + 1), "configs"));
  ApproxConfig cfg;
  cfg.s = s;
  cfg.n_q = nq;
  std::string label = s == 0 ? "Laplace"
                             : (s == q ? "AGH" + std::to_string(nq)
                                       : "DRM" + std::to_string(nq) + "(s=" +
                                             std::to_string(s) + ")");
  return NamedConfig{label, cfg};
}

}  // namespace

ModelConfig parse_model_config_text(const std::string& text) {
  return build_model(parse_raw(text, kModelKeys));
}

ModelConfig parse_model_config(const std::string& path) {
  return parse_model_config_text(slurp(path));
}

ScenarioSpec parse_scenario_config(const std::string& path) {
  std::vector<std::string> allowed = kModelKeys;
  allowed.insert(allowed.end(), kScenarioKeys.begin(), kScenarioKeys.end());
  RawConfig raw = parse_raw(slurp(path), allowed);
  ModelConfig mc = build_model(raw);
  if (!mc.true_theta)
    throw std::invalid_argument("scenario config: true parameter values are required");

  ScenarioSpec sc;
  sc.name = raw.scalar.count("name") ? raw.scalar.at("name").at(0) : path;
  sc.model = mc.spec;
  sc.true_theta = *mc.true_theta;
  auto get1 = [&](const std::string& k) -> std::optional<std::string> {
    auto it = raw.scalar.find(k);
    if (it == raw.scalar.end()) return std::nullopt;
    if (it->second.size() != 1)
      throw std::invalid_argument("config: key '" + k + "' takes one value");
    return it->second[0];
  };
  if (auto v = get1("n")) sc.n = int(to_long(*v, "n"));
  if (auto v = get1("replications")) sc.replications = int(to_long(*v, "replications"));
  if (auto v = get1("seed")) sc.seed = uint64_t(to_long(*v, "seed"));
  if (auto v = get1("max_feval")) sc.fit_options.max_feval = to_long(*v, "max_feval");
  if (raw.scalar.count("configs")) {
    sc.configs.clear();
    for (const auto& tok : raw.scalar.at("configs"))
      sc.configs.push_back(parse_config_token(tok, sc.model.q));
  }
  auto range = [&](const std::string& k, double& lo, double& hi) {
    auto it = raw.scalar.find(k);
    if (it == raw.scalar.end()) return;
    if (it->second.size() != 2)
      throw std::invalid_argument("config: key '" + k + "' takes two values (lo hi)");
    lo = to_double(it->second[0], k);
    hi = to_double(it->second[1], k);
  };
  range("start_loading", sc.start_box.loading_lo, sc.start_box.loading_hi);
  range("start_corr", sc.start_box.corr_lo, sc.start_box.corr_hi);
  range("start_intercept", sc.start_box.intercept_lo, sc.start_box.intercept_hi);
  range("start_phi", sc.start_box.phi_lo, sc.start_box.phi_hi);
  range("start_var", sc.start_box.var_lo, sc.start_box.var_hi);
  if (sc.configs.empty())
    throw std::invalid_argument("scenario config: 'configs' is required (like: s0 s1:5)");
  return sc;
}

ResponseData read_response_csv(const std::string& path, int expected_cols) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open data file: " + path);
  std::vector<std::vector<int>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<int> row;
    std::istringstream ss(t);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      std::string c = trim(cell);
      if (c == "0")
        row.push_back(0);
      else if (c == "1")
        row.push_back(1);
      else
        throw std::invalid_argument("data row " + std::to_string(lineno) + " column " +
                                    std::to_string(col) + ": invalid cell '" + c +
                                    "' (expected 0 or 1)");
    }
    if (!rows.empty() && rows.front().size() != row.size())
      throw std::invalid_argument("data row " + std::to_string(lineno) + ": has " +
                                  std::to_string(row.size()) + " columns, expected " +
                                  std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("data file is empty: " + path);
  if (expected_cols > 0 && int(rows.front().size()) != expected_cols)
    throw std::invalid_argument("data has " + std::to_string(rows.front().size()) +
                                " columns but the model expects " +
                                std::to_string(expected_cols));
  ResponseData data;
  data.n = int(rows.size());
  data.y.resize(data.n, int(rows.front().size()));
  for (int l = 0; l < data.n; ++l)
    for (int j = 0; j < data.y.cols(); ++j) data.y(l, j) = rows[l][j];
  return data;
}

void write_response_csv(const std::string& path, const ResponseData& data) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write data file: " + path);
  for (int l = 0; l < data.n; ++l) {
    for (int j = 0; j < data.y.cols(); ++j) {
      if (j) out << ',';
      out << data.y(l, j);
    }
    out << '\n';
  }
}

namespace {

json fit_to_json(const FitResult& result, const ModelSpec& spec, const ApproxConfig& config,
                 bool with_timings) {
  json j;
  j["family"] =
      spec.family == CovarianceFamily::Correlation ? "correlation" : "longitudinal";
  j["p"] = spec.p;
  j["q"] = spec.q;
  j["T"] = spec.T;
  j["s"] = config.s;
  j["n_q"] = config.n_q;
  j["fallback"] = config.fallback == FallbackPolicy::Laplace ? "laplace" : "strict";
  j["converged"] = result.converged;
  j["loglik"] = result.loglik;
  j["n_feval"] = result.n_feval;
  j["gradient_norm"] = result.gradient_norm;
  j["bracket_fallback_count"] = result.bracket_fallback_count;
  j["hessian_pd"] = result.hessian_pd;
  j["wall_time_s"] = with_timings ? result.wall_time_s : 0.0;
  const auto names = spec.parameter_names();
  VectorXd flat = result.theta_hat.flat();
  json est = json::array();
  for (size_t k = 0; k < names.size(); ++k) {
    json e;
    e["name"] = names[k];
    e["value"] = flat[int(k)];
    if (result.standard_errors.size() == flat.size())
      e["se"] = result.standard_errors[int(k)];
    est.push_back(e);
  }
  j["estimates"] = est;
  j["theta_unconstrained"] = std::vector<double>(
      result.theta_unconstrained.data(),
      result.theta_unconstrained.data() + result.theta_unconstrained.size());
  return j;
}

}  // namespace

void write_fit_json(const std::string& path, const FitResult& result, const ModelSpec& spec,
                    const ApproxConfig& config, bool with_timings) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write results file: " + path);
  out << fit_to_json(result, spec, config, with_timings).dump(2) << "\n";
}

FitResult read_fit_json(const std::string& path, const ModelSpec& spec) {
  json j = json::parse(slurp(path));
  FitResult r;
  // non-finite doubles serialize as null; they only arise with their
  // natural sign (unbounded gradient norm, impossible log likelihood)
  auto num_or = [&](const char* key, double fallback) {
    const auto& v = j.at(key);
    return v.is_null() ? fallback : v.get<double>();
  };
  r.converged = j.at("converged").get<bool>();
  r.loglik = num_or("loglik", -std::numeric_limits<double>::infinity());
  r.n_feval = j.at("n_feval").get<long long>();
  r.gradient_norm = num_or("gradient_norm", std::numeric_limits<double>::infinity());
  r.bracket_fallback_count = j.at("bracket_fallback_count").get<int>();
  r.hessian_pd = j.at("hessian_pd").get<bool>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  std::vector<double> xu = j.at("theta_unconstrained").get<std::vector<double>>();
  r.theta_unconstrained = Eigen::Map<VectorXd>(xu.data(), xu.size());
  VectorXd flat(spec.n_free());
  VectorXd se(spec.n_free());
  bool have_se = false;
  int k = 0;
  for (const auto& e : j.at("estimates")) {
    flat[k] = e.at("value").get<double>();
    if (e.contains("se")) {
      se[k] = e.at("se").get<double>();
      have_se = true;
    }
    ++k;
  }
  r.theta_hat = ParameterVector::from_flat(flat, spec);
  if (have_se) r.standard_errors = se;
  return r;
}

void write_metrics_json(const std::string& path, const MetricsTable& table,
                        bool with_timings) {
  json j;
  j["scenario"] = table.scenario_name;
  j["n"] = table.n;
  j["replications"] = table.replications;
  j["seed"] = table.seed;
  json cfgs = json::array();
  for (const auto& c : table.configs) {
    json jc;
    jc["label"] = c.label;
    jc["pct_converged"] = c.pct_converged;
    jc["avg_loglik"] = c.avg_loglik;
    jc["avg_n_feval"] = c.avg_n_feval;
    jc["avg_time_s"] = with_timings ? c.avg_time_s : 0.0;
    jc["bracket_fallbacks"] = c.total_bracket_fallbacks;
    json params = json::array();
    for (size_t k = 0; k < table.parameter_names.size(); ++k) {
      json p;
      p["name"] = table.parameter_names[k];
      p["true"] = table.true_values[int(k)];
      auto put = [&](const char* key, double v) {
        if (std::isnan(v))
          p[key] = nullptr;
        else
          p[key] = v;
      };
      put("mean", c.mean[int(k)]);
      put("rbias", c.rbias[int(k)]);
      put("sd", c.sd[int(k)]);
      params.push_back(p);
    }
    jc["parameters"] = params;
    cfgs.push_back(jc);
  }
  j["configs"] = cfgs;
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write metrics file: " + path);
  out << j.dump(2) << "\n";
}

void write_replication_csv(const std::string& path, const MetricsTable& table,
                           bool with_timings) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write replication log: " + path);
  out << "replication,config,parameter,estimate,converged,loglik,n_feval,time_s,"
         "bracket_fallbacks\n";
  char buf[64];
  for (const auto& rec : table.records) {
    for (size_t k = 0; k < table.parameter_names.size(); ++k) {
      out << rec.replication << ',' << rec.config_label << ','
          << table.parameter_names[k] << ',';
      std::snprintf(buf, sizeof buf, "%.17g", rec.estimates[int(k)]);
      out << buf << ',' << (rec.result.converged ? 1 : 0) << ',';
      std::snprintf(buf, sizeof buf, "%.17g", rec.result.loglik);
      out << buf << ',' << rec.result.n_feval << ',';
      std::snprintf(buf, sizeof buf, "%.17g", with_timings ? rec.result.wall_time_s : 0.0);
      out << buf << ',' << rec.result.bracket_fallback_count << '\n';
    }
  }
}

}  // namespace drml
