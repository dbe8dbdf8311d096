#include "drml/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>

#include "drml/io.hpp"

namespace drml {

namespace {

StartBox parse_start_box(const std::string& text, StartBox box) {
  // "loading=0.5:2,corr=0:0.3,intercept=-0.5:0.5,phi=0:0.9,var=0.5:2"
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t eq = item.find('=');
    size_t colon = item.find(':', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || colon == std::string::npos)
      throw std::invalid_argument("--start-box: expected entries like loading=0.5:2");
    std::string key = item.substr(0, eq);
    double lo = std::stod(item.substr(eq + 1, colon - eq - 1));
    double hi = std::stod(item.substr(colon + 1));
    if (key == "loading") {
      box.loading_lo = lo;
      box.loading_hi = hi;
    } else if (key == "corr") {
      box.corr_lo = lo;
      box.corr_hi = hi;
    } else if (key == "intercept") {
      box.intercept_lo = lo;
      box.intercept_hi = hi;
    } else if (key == "phi") {
      box.phi_lo = lo;
      box.phi_hi = hi;
    } else if (key == "var") {
      box.var_lo = lo;
      box.var_hi = hi;
    } else {
      throw std::invalid_argument("--start-box: unknown range '" + key + "'");
    }
  }
  return box;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (...) {
      throw std::invalid_argument(what + ": bad integer '" + tok + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument(what + ": empty list");
  return out;
}

FallbackPolicy parse_fallback(const std::string& s) {
  if (s == "laplace") return FallbackPolicy::Laplace;
  if (s == "strict") return FallbackPolicy::Strict;
  throw std::invalid_argument("--fallback must be 'laplace' or 'strict'");
}

int cmd_quadtable(int order) {
  GaussHermiteRule rule = gh_rule(order);
  for (int i = 0; i < rule.order; ++i)
    std::printf("%.17g\t%.17g\n", rule.nodes[i], rule.weights[i]);
  return 0;
}

int cmd_simulate(const std::string& model_path, int n, uint64_t seed,
                 const std::string& out_path) {
  ModelConfig mc = parse_model_config(model_path);
  if (!mc.true_theta)
    throw std::invalid_argument("simulate: model config carries no true parameter values");
  ResponseData data = simulate_responses(*mc.true_theta, mc.spec, n, seed);
  write_response_csv(out_path, data);
  std::printf("wrote %d x %d responses to %s\n", data.n, int(data.y.cols()),
              out_path.c_str());
  return 0;
}

struct FitFlags {
  int s = 0;
  int n_q = 5;
  std::string fallback = "laplace";
  long long max_feval = 500;
  long long grid_budget = 200000;
  double inner_grad_tol = 1e-8;
  int threads = 1;
  uint64_t seed = 1;
  bool start_random = false;
  std::string start_box;
  std::string out_path;
  bool timings = false;
};

int cmd_fit(const std::string& model_path, const std::string& data_path,
            const FitFlags& flags) {
  ModelConfig mc = parse_model_config(model_path);
  ResponseData data = read_response_csv(data_path, mc.spec.n_responses);

  ApproxConfig config;
  config.s = flags.s;
  config.n_q = flags.n_q;
  config.fallback = parse_fallback(flags.fallback);
  config.grid_budget = flags.grid_budget;
  validate_config(config, mc.spec.q);

  FitOptions options;
  options.max_feval = flags.max_feval;
  options.threads = flags.threads;
  options.inner.grad_tol = flags.inner_grad_tol;

  ParameterVector start = mc.start;
  if (flags.start_random) {
    StartBox box = parse_start_box(flags.start_box, StartBox{});
    start = draw_start(mc.spec, box, flags.seed);
  }

  FitResult result = fit(data, mc.spec, config, start, options);
  if (result.converged) {
    try {
      result.standard_errors = sandwich_se(data, result.theta_hat, mc.spec, config, options);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: standard errors unavailable: %s\n", e.what());
    }
  }

  const auto names = mc.spec.parameter_names();
  VectorXd flat = result.theta_hat.flat();
  std::printf("%-14s %12s %12s\n", "parameter", "estimate", "s.e.");
  for (size_t k = 0; k < names.size(); ++k) {
    if (result.standard_errors.size() == flat.size())
      std::printf("%-14s %12.4f %12.4f\n", names[k].c_str(), flat[int(k)],
                  result.standard_errors[int(k)]);
    else
      std::printf("%-14s %12.4f %12s\n", names[k].c_str(), flat[int(k)], "-");
  }
  std::printf("\nloglik        %.6f\nconverged     %s\nn_feval       %lld\n"
              "gradient_norm %.3g\nbracket_fallbacks %d\nwall_time_s   %.3f\n",
              result.loglik, result.converged ? "yes" : "no", result.n_feval,
              result.gradient_norm, result.bracket_fallback_count, result.wall_time_s);

  if (!flags.out_path.empty())
    write_fit_json(flags.out_path, result, mc.spec, config, flags.timings);
  return result.converged ? 0 : 2;
}

struct BenchFlags {
  std::string preset;
  std::string scenario_path;
  int replications = -1;
  int n = -1;
  std::string s_list, nq_list;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  long long max_feval = -1;
  long long grid_budget = 200000;
  std::string out_json, out_csv;
  std::string start_box;
  bool timings = false;
};

int cmd_bench(const BenchFlags& flags) {
  ScenarioSpec sc;
  if (!flags.preset.empty())
    sc = scenario_preset(flags.preset);
  else if (!flags.scenario_path.empty())
    sc = parse_scenario_config(flags.scenario_path);
  else
    throw std::invalid_argument("bench: give --preset or --scenario");

  if (flags.replications > 0) sc.replications = flags.replications;
  if (flags.n > 0) sc.n = flags.n;
  if (flags.seed_set) sc.seed = flags.seed;
  if (flags.max_feval > 0) sc.fit_options.max_feval = flags.max_feval;
  sc.workers = flags.threads;
  if (!flags.start_box.empty()) sc.start_box = parse_start_box(flags.start_box, sc.start_box);

  if (!flags.s_list.empty()) {
    std::vector<int> ss = parse_int_list(flags.s_list, "--s-list");
    std::vector<int> nqs = flags.nq_list.empty()
                               ? std::vector<int>{5}
                               : parse_int_list(flags.nq_list, "--nq-list");
    sc.configs.clear();
    for (int s : ss) {
      if (s == 0) {
        sc.configs.push_back({"Laplace", ApproxConfig{0, 5}});
        continue;
      }
      for (int nq : nqs) {
        std::string label = s == sc.model.q
                                ? "AGH" + std::to_string(nq)
                                : "DRM" + std::to_string(nq) + "(s=" + std::to_string(s) + ")";
        sc.configs.push_back({label, ApproxConfig{s, nq}});
      }
    }
  }
  for (auto& nc : sc.configs) nc.config.grid_budget = flags.grid_budget;

  MetricsTable table = run_scenario(sc);
  std::fputs(format_metrics_table(table, true).c_str(), stdout);
  if (!flags.out_json.empty()) write_metrics_json(flags.out_json, table, flags.timings);
  if (!flags.out_csv.empty()) write_replication_csv(flags.out_csv, table, flags.timings);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"maximum likelihood estimation for latent variable models with "
               "dimension-reduced integral approximation"};
  app.require_subcommand(1);

  // quadtable
  auto* quad = app.add_subcommand("quadtable", "print a Gauss-Hermite rule");
  int quad_order = 5;
  quad->add_option("order", quad_order, "number of nodes (1..64)")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate binary responses");
  std::string sim_model, sim_out = "data.csv";
  int sim_n = 500;
  uint64_t sim_seed = 1;
  sim->add_option("--model", sim_model, "model config file")->required();
  sim->add_option("--n", sim_n, "number of subjects");
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out", sim_out, "output CSV path");

  // fit
  auto* fitcmd = app.add_subcommand("fit", "fit a model to response data");
  std::string fit_model, fit_data;
  FitFlags ff;
  fitcmd->add_option("--model", fit_model, "model config file")->required();
  fitcmd->add_option("--data", fit_data, "response CSV")->required();
  fitcmd->add_option("--s", ff.s, "truncation order (0 = Laplace, q = adaptive GH)");
  fitcmd->add_option("--nq", ff.n_q, "quadrature nodes per dimension");
  fitcmd->add_option("--fallback", ff.fallback, "nonpositive-bracket policy: laplace|strict");
  fitcmd->add_option("--max-feval", ff.max_feval, "likelihood evaluation budget");
  fitcmd->add_option("--grid-budget", ff.grid_budget,
                     "max integrand evaluations per subject");
  fitcmd->add_option("--inner-grad-tol", ff.inner_grad_tol, "inner Newton tolerance");
  fitcmd->add_option("--threads", ff.threads, "subject-level worker threads");
  fitcmd->add_option("--seed", ff.seed, "seed for --start-random");
  fitcmd->add_flag("--start-random", ff.start_random, "draw the start from the start box");
  fitcmd->add_option("--start-box", ff.start_box,
                     "start ranges, like loading=0.5:2,corr=0:0.3");
  fitcmd->add_option("--out", ff.out_path, "write machine-readable results (JSON)");
  fitcmd->add_flag("--timings", ff.timings, "include wall times in machine output");

  // bench
  auto* bench = app.add_subcommand("bench", "run a replication study");
  BenchFlags bf;
  bench->add_option("--preset", bf.preset, "scenario1 | scenario2 | longitudinal");
  bench->add_option("--scenario", bf.scenario_path, "scenario config file");
  bench->add_option("--replications", bf.replications, "number of replications");
  bench->add_option("--n", bf.n, "subjects per replication");
  bench->add_option("--s-list", bf.s_list, "truncation orders, like 0,1,2");
  bench->add_option("--nq-list", bf.nq_list, "node counts, like 5,7");
  bench->add_option("--seed", bf.seed, "base seed")->each([&](const std::string&) {
    bf.seed_set = true;
  });
  bench->add_option("--threads", bf.threads, "replication-level workers");
  bench->add_option("--max-feval", bf.max_feval, "likelihood evaluation budget per fit");
  bench->add_option("--grid-budget", bf.grid_budget,
                    "max integrand evaluations per subject");
  bench->add_option("--start-box", bf.start_box, "start ranges override");
  bench->add_option("--out-json", bf.out_json, "aggregate table (JSON)");
  bench->add_option("--out-csv", bf.out_csv, "raw per-replication log (CSV)");
  bench->add_flag("--timings", bf.timings, "include wall times in machine output");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      app.exit(e);
      return 0;
    }
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    if (*quad) return cmd_quadtable(quad_order);
    if (*sim) return cmd_simulate(sim_model, sim_n, sim_seed, sim_out);
    if (*fitcmd) return cmd_fit(fit_model, fit_data, ff);
    if (*bench) return cmd_bench(bf);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace drml
