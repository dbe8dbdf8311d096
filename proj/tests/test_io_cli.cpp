#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "drml/cli.hpp"
#include "drml/io.hpp"

using namespace drml;
namespace fs = std::filesystem;

namespace {

const char* kTwoFactorConfig = R"(# two-factor binary model
family = correlation
p = 4
q = 2
pattern = 1.0  F0
pattern = 1.0  F0
pattern = F0   1.0
pattern = F0   1.0
intercept_start = 0 0 0 0
corr_start = 0.1
loading_true = 2.697 0.933 1.232 1.634
corr_true = 0.469
)";

const char* kLongitudinalConfig = R"(family = longitudinal
p = 3
T = 2
loading_start = 0.6 0.6
phi_start = 0.8
sigma1_start = 2.0
sigmau_start = 0.5 0.5 0.5
loading_true = 0.5 0.7
phi_true = 0.9
sigma1_true = 3.0
sigmau_true = 0.6 0.8 0.4
)";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("drml_test_" + std::to_string(uint64_t(::getpid())) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("model config parses structure, starts and true values") {
  ModelConfig mc = parse_model_config_text(kTwoFactorConfig);
  CHECK(mc.spec.p == 4);
  CHECK(mc.spec.q == 2);
  CHECK(mc.spec.n_free_loadings == 4);
  CHECK(mc.spec.cells[0][0].free_index == 0);
  CHECK(mc.spec.cells[0][1].free_index == -1);
  CHECK(mc.start.loadings[0] == 1.0);
  CHECK(mc.start.covariance[0] == doctest::Approx(0.1));
  REQUIRE(mc.true_theta.has_value());
  CHECK(mc.true_theta->loadings[0] == 2.697);
  CHECK(mc.true_theta->covariance[0] == 0.469);
  CHECK(mc.true_theta->intercepts.isZero(0.0));

  ModelConfig lc = parse_model_config_text(kLongitudinalConfig);
  CHECK(lc.spec.family == CovarianceFamily::LongitudinalAR1);
  CHECK(lc.spec.q == 5);
  CHECK(lc.start.covariance[0] == doctest::Approx(0.8));
  REQUIRE(lc.true_theta.has_value());
  CHECK(lc.true_theta->covariance[1] == 3.0);
}

TEST_CASE("model config rejects malformed input") {
  CHECK_THROWS_WITH_AS(parse_model_config_text("family = correlation\np = 4\nq = 2\n"
                                               "pattern = 1.0 F0\nwhatever = 3\n"),
                       doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_AS(parse_model_config_text("family = nope\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_model_config_text("family = correlation\np = 4\nq = 2\n"),
                  std::invalid_argument);  // no pattern
  CHECK_THROWS_AS(
      parse_model_config_text("family = correlation\np = 2\nq = 1\n"
                              "pattern = 1.0\npattern = 1.0\npattern = 1.0\n"),
      std::invalid_argument);  // row count mismatch
  CHECK_THROWS_AS(parse_model_config_text(std::string(kTwoFactorConfig) + "p = 4\n"),
                  std::invalid_argument);  // duplicate key
  CHECK_THROWS_AS(
      parse_model_config_text("family = longitudinal\np = 3\nT = 2\nq = 9\n"),
      std::invalid_argument);  // q must be p + T
}

TEST_CASE("response CSV round trip and validation") {
  TempDir tmp;
  ResponseData data;
  data.n = 3;
  data.y.resize(3, 2);
  data.y << 1, 0, 0, 1, 1, 1;
  write_response_csv(tmp.file("d.csv"), data);
  ResponseData back = read_response_csv(tmp.file("d.csv"), 2);
  CHECK((back.y - data.y).cwiseAbs().maxCoeff() == 0);

  write_file(tmp.file("bad.csv"), "1,0\n0,2\n");
  CHECK_THROWS_WITH_AS(read_response_csv(tmp.file("bad.csv")),
                       doctest::Contains("row 2 column 2"), std::invalid_argument);

  write_file(tmp.file("ragged.csv"), "1,0\n0\n");
  CHECK_THROWS_AS(read_response_csv(tmp.file("ragged.csv")), std::invalid_argument);

  write_file(tmp.file("wide.csv"), "1,0,1\n");
  CHECK_THROWS_WITH_AS(read_response_csv(tmp.file("wide.csv"), 2),
                       doctest::Contains("expects 2"), std::invalid_argument);
}

TEST_CASE("fit results JSON round trips exactly") {
  TempDir tmp;
  ModelConfig mc = parse_model_config_text(kTwoFactorConfig);
  FitResult r;
  r.theta_hat = mc.start;
  r.theta_hat.loadings << 2.1234567890123456, 0.9, 1.2, 1.6;
  r.theta_unconstrained = pack(r.theta_hat, mc.spec);
  r.standard_errors = VectorXd::LinSpaced(mc.spec.n_free(), 0.01, 0.09);
  r.loglik = -1234.5678901234567;
  r.converged = true;
  r.n_feval = 321;
  r.gradient_norm = 3.25e-5;
  r.bracket_fallback_count = 2;
  r.hessian_pd = true;
  r.wall_time_s = 12.5;

  ApproxConfig cfg;
  cfg.s = 1;
  cfg.n_q = 7;
  write_fit_json(tmp.file("r.json"), r, mc.spec, cfg, false);
  FitResult back = read_fit_json(tmp.file("r.json"), mc.spec);
  CHECK(back.loglik == r.loglik);
  CHECK(back.n_feval == r.n_feval);
  CHECK(back.converged == r.converged);
  CHECK(back.gradient_norm == r.gradient_norm);
  CHECK((back.theta_hat.flat() - r.theta_hat.flat()).norm() == 0.0);
  CHECK((back.standard_errors - r.standard_errors).norm() == 0.0);
  CHECK((back.theta_unconstrained - r.theta_unconstrained).norm() == 0.0);
  CHECK(back.wall_time_s == 0.0);  // timings excluded by default

  write_fit_json(tmp.file("rt.json"), r, mc.spec, cfg, true);
  CHECK(read_fit_json(tmp.file("rt.json"), mc.spec).wall_time_s == 12.5);
}

TEST_CASE("cli quadtable and argument validation") {
  CHECK(run_cli({"quadtable", "3"}) == 0);
  CHECK(run_cli({"quadtable", "0"}) == 1);
  CHECK(run_cli({"quadtable", "90"}) == 1);
  CHECK(run_cli({"nonsense"}) == 1);
  CHECK(run_cli({}) == 1);
}

TEST_CASE("cli simulate is deterministic per seed") {
  TempDir tmp;
  write_file(tmp.file("model.cfg"), kTwoFactorConfig);
  REQUIRE(run_cli({"simulate", "--model", tmp.file("model.cfg"), "--n", "40", "--seed",
                   "7", "--out", tmp.file("a.csv")}) == 0);
  REQUIRE(run_cli({"simulate", "--model", tmp.file("model.cfg"), "--n", "40", "--seed",
                   "7", "--out", tmp.file("b.csv")}) == 0);
  REQUIRE(run_cli({"simulate", "--model", tmp.file("model.cfg"), "--n", "40", "--seed",
                   "8", "--out", tmp.file("c.csv")}) == 0);
  CHECK(read_file(tmp.file("a.csv")) == read_file(tmp.file("b.csv")));
  CHECK(read_file(tmp.file("a.csv")) != read_file(tmp.file("c.csv")));
}

TEST_CASE("cli fit exit codes and machine output") {
  TempDir tmp;
  write_file(tmp.file("model.cfg"), kTwoFactorConfig);
  REQUIRE(run_cli({"simulate", "--model", tmp.file("model.cfg"), "--n", "300", "--seed",
                   "21", "--out", tmp.file("d.csv")}) == 0);

  // forced non-convergence: budget of one evaluation
  CHECK(run_cli({"fit", "--model", tmp.file("model.cfg"), "--data", tmp.file("d.csv"),
                 "--s", "0", "--max-feval", "1", "--out", tmp.file("nc.json")}) == 2);
  ModelConfig mc = parse_model_config_text(kTwoFactorConfig);
  CHECK_FALSE(read_fit_json(tmp.file("nc.json"), mc.spec).converged);

  // a clean fit converges, writes results, exits 0
  CHECK(run_cli({"fit", "--model", tmp.file("model.cfg"), "--data", tmp.file("d.csv"),
                 "--s", "1", "--nq", "5", "--max-feval", "2000", "--out",
                 tmp.file("ok.json")}) == 0);
  FitResult r = read_fit_json(tmp.file("ok.json"), mc.spec);
  CHECK(r.converged);
  CHECK(r.standard_errors.size() == mc.spec.n_free());

  // malformed data cell: exit 1 with the offending row and column cited
  write_file(tmp.file("bad.csv"), "1,0,1,1\n0,1,2,0\n");
  CHECK(run_cli({"fit", "--model", tmp.file("model.cfg"), "--data",
                 tmp.file("bad.csv")}) == 1);

  // column mismatch: exit 1 before any fitting
  write_file(tmp.file("narrow.csv"), "1,0\n0,1\n");
  CHECK(run_cli({"fit", "--model", tmp.file("model.cfg"), "--data",
                 tmp.file("narrow.csv")}) == 1);

  // infeasible grid: exit 1
  CHECK(run_cli({"fit", "--model", tmp.file("model.cfg"), "--data", tmp.file("d.csv"),
                 "--s", "2", "--nq", "5", "--grid-budget", "10"}) == 1);
}

TEST_CASE("cli fit machine output is byte-identical across runs") {
  TempDir tmp;
  write_file(tmp.file("model.cfg"), kTwoFactorConfig);
  REQUIRE(run_cli({"simulate", "--model", tmp.file("model.cfg"), "--n", "80", "--seed",
                   "5", "--out", tmp.file("d.csv")}) == 0);
  int rc1 = run_cli({"fit", "--model", tmp.file("model.cfg"), "--data", tmp.file("d.csv"),
                     "--s", "1", "--nq", "5", "--max-feval", "600", "--out",
                     tmp.file("f1.json")});
  int rc2 = run_cli({"fit", "--model", tmp.file("model.cfg"), "--data", tmp.file("d.csv"),
                     "--s", "1", "--nq", "5", "--max-feval", "600", "--out",
                     tmp.file("f2.json")});
  CHECK(rc1 == rc2);  // whatever the outcome, it repeats exactly
  CHECK(read_file(tmp.file("f1.json")) == read_file(tmp.file("f2.json")));
}

TEST_CASE("cli bench runs presets and writes deterministic outputs") {
  TempDir tmp;
  for (int round = 0; round < 2; ++round) {
    std::string tag = std::to_string(round);
    REQUIRE(run_cli({"bench", "--preset", "scenario1", "--replications", "2", "--n",
                     "50", "--s-list", "0,1", "--nq-list", "5", "--seed", "11",
                     "--max-feval", "300", "--out-json", tmp.file("m" + tag + ".json"),
                     "--out-csv", tmp.file("r" + tag + ".csv")}) == 0);
  }
  CHECK(read_file(tmp.file("m0.json")) == read_file(tmp.file("m1.json")));
  CHECK(read_file(tmp.file("r0.csv")) == read_file(tmp.file("r1.csv")));

  std::string log = read_file(tmp.file("r0.csv"));
  CHECK(log.find("replication,config,parameter,estimate,converged,loglik,n_feval,"
                 "time_s,bracket_fallbacks") != std::string::npos);
  CHECK(log.find("Laplace") != std::string::npos);
  CHECK(log.find("DRM5(s=1)") != std::string::npos);

  CHECK(run_cli({"bench", "--preset", "unknown"}) == 1);
}

TEST_CASE("scenario config file drives bench") {
  TempDir tmp;
  std::string scenario = std::string(kTwoFactorConfig) +
                         "name = tiny\nn = 40\nreplications = 2\nseed = 3\n"
                         "configs = s0 s1:5\nstart_loading = 0.5 2\nstart_corr = 0 0.3\n";
  write_file(tmp.file("sc.cfg"), scenario);
  ScenarioSpec sc = parse_scenario_config(tmp.file("sc.cfg"));
  CHECK(sc.name == "tiny");
  CHECK(sc.n == 40);
  CHECK(sc.replications == 2);
  CHECK(sc.configs.size() == 2);
  CHECK(sc.configs[0].label == "Laplace");
  CHECK(sc.configs[1].config.s == 1);

  REQUIRE(run_cli({"bench", "--scenario", tmp.file("sc.cfg"), "--max-feval", "200",
                   "--out-json", tmp.file("t.json")}) == 0);
  CHECK(read_file(tmp.file("t.json")).find("\"scenario\": \"tiny\"") != std::string::npos);
}
