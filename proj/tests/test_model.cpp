#include <doctest.h>

#include <Eigen/Cholesky>
#include <cmath>

#include "drml/model.hpp"

using namespace drml;

namespace {

// Two correlated factors, four items, simple structure; the usual test model.
ModelSpec two_factor_spec() {
  LoadingCell free1{0, 1.0};
  LoadingCell fixed0{-1, 0.0};
  return ModelSpec::correlation(4, 2,
                                {{free1, fixed0},
                                 {free1, fixed0},
                                 {fixed0, free1},
                                 {fixed0, free1}});
}

ParameterVector two_factor_truth() {
  ParameterVector t;
  t.intercepts = VectorXd::Zero(4);
  t.loadings.resize(4);
  t.loadings << 2.697, 0.933, 1.232, 1.634;
  t.covariance.resize(1);
  t.covariance << 0.469;
  return t;
}

}  // namespace

TEST_CASE("linear_predictor assembles the loading pattern") {
  ModelSpec spec = two_factor_spec();
  ParameterVector theta = two_factor_truth();

  VectorXd b(2);
  b << 1.0, 0.0;
  VectorXd eta = linear_predictor(theta, spec, b);
  CHECK(eta[0] == doctest::Approx(2.697));
  CHECK(eta[1] == doctest::Approx(0.933));
  CHECK(eta[2] == 0.0);
  CHECK(eta[3] == 0.0);

  b << 0.0, 1.0;
  eta = linear_predictor(theta, spec, b);
  CHECK(eta[0] == 0.0);
  CHECK(eta[1] == 0.0);
  CHECK(eta[2] == doctest::Approx(1.232));
  CHECK(eta[3] == doctest::Approx(1.634));

  VectorXd bad(3);
  CHECK_THROWS_AS(linear_predictor(theta, spec, bad), std::invalid_argument);
}

TEST_CASE("linear_predictor with all loadings fixed to zero") {
  LoadingCell fixed0{-1, 0.0};
  ModelSpec spec = ModelSpec::correlation(2, 1, {{fixed0}, {fixed0}});
  ParameterVector theta;
  theta.intercepts.resize(2);
  theta.intercepts << 1.0, -1.0;
  theta.loadings.resize(0);
  theta.covariance.resize(0);
  VectorXd b(1);
  b << 7.3;
  VectorXd eta = linear_predictor(theta, spec, b);
  CHECK(eta[0] == 1.0);
  CHECK(eta[1] == -1.0);
}

TEST_CASE("log_measurement hand values and overflow safety") {
  Eigen::VectorXi y(2);
  y << 1, 0;
  VectorXd eta = VectorXd::Zero(2);
  CHECK(log_measurement(y, eta) == doctest::Approx(-1.3862943611198906).epsilon(1e-14));

  Eigen::VectorXi y1(1);
  y1 << 1;
  VectorXd e1(1);
  e1 << 2.0;
  CHECK(log_measurement(y1, e1) == doctest::Approx(-0.12692801104297250).epsilon(1e-12));

  y1 << 0;
  e1 << -50.0;
  CHECK(std::abs(log_measurement(y1, e1)) < 1e-20);
  e1 << 1000.0;
  CHECK(std::isfinite(log_measurement(y1, e1)));

  Eigen::VectorXi ybad(2);
  VectorXd ebad(1);
  CHECK_THROWS_AS(log_measurement(ybad, ebad), std::invalid_argument);
}

TEST_CASE("log_structural hand values") {
  VectorXd b1(1);
  b1 << 1.0;
  MatrixXd psi1 = MatrixXd::Identity(1, 1);
  CHECK(log_structural(b1, psi1) == doctest::Approx(-1.4189385332046727).epsilon(1e-14));

  MatrixXd psi2(2, 2);
  psi2 << 1.0, 0.469, 0.469, 1.0;
  CHECK(log_structural(VectorXd::Zero(2), psi2) ==
        doctest::Approx(-1.7136713861351165).epsilon(1e-14));

  VectorXd b2(2);
  b2 << 3.0, 4.0;
  CHECK(log_structural(b2, MatrixXd::Identity(2, 2)) ==
        doctest::Approx(-std::log(2.0 * M_PI) - 12.5).epsilon(1e-14));

  MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // not positive definite
  CHECK_THROWS_AS(log_structural(VectorXd::Zero(2), bad), std::domain_error);
}

TEST_CASE("covariance_longitudinal closed-form cases") {
  VectorXd su = VectorXd::Ones(2);

  MatrixXd psi = covariance_longitudinal(0.0, 1.0, su, 3);
  CHECK(psi.topLeftCorner(3, 3).isApprox(MatrixXd::Identity(3, 3), 1e-15));

  // phi = 1 turns the process into a random walk: var t, cov min(t, t')
  psi = covariance_longitudinal(1.0, 1.0, su, 3);
  for (int t = 1; t <= 3; ++t) {
    CHECK(psi(t - 1, t - 1) == doctest::Approx(double(t)).epsilon(1e-15));
    for (int tp = t + 1; tp <= 3; ++tp)
      CHECK(psi(t - 1, tp - 1) == doctest::Approx(double(t)).epsilon(1e-15));
  }

  psi = covariance_longitudinal(0.5, 2.0, su, 2);
  CHECK(psi(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(psi(1, 1) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(psi(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

  // block structure: off-diagonal blocks zero, random-effect block diagonal
  VectorXd su3(3);
  su3 << 0.4, 1.3, 2.2;
  psi = covariance_longitudinal(0.7, 1.5, su3, 2);
  CHECK(psi.topRightCorner(2, 3).isZero(0.0));
  CHECK(psi.bottomLeftCorner(3, 2).isZero(0.0));
  for (int j = 0; j < 3; ++j) CHECK(psi(2 + j, 2 + j) == su3[j]);

  CHECK_THROWS_AS(covariance_longitudinal(0.5, 0.0, su, 2), std::invalid_argument);
  CHECK_THROWS_AS(covariance_longitudinal(0.5, -1.0, su, 2), std::invalid_argument);
  VectorXd subad(1);
  subad << -0.5;
  CHECK_THROWS_AS(covariance_longitudinal(0.5, 1.0, subad, 2), std::invalid_argument);
  CHECK_THROWS_AS(covariance_longitudinal(0.5, 1.0, su, 0), std::invalid_argument);
}

TEST_CASE("longitudinal Gamma symmetric and positive definite across phi") {
  Rng rng(99);
  for (int rep = 0; rep < 200; ++rep) {
    double phi = rng.uniform(-1.5, 1.5);
    double s1 = rng.uniform(0.1, 5.0);
    int T = 1 + int(rng.uniform01() * 5);
    VectorXd su = VectorXd::Ones(2);
    MatrixXd psi = covariance_longitudinal(phi, s1, su, T);
    CHECK(psi.isApprox(psi.transpose(), 1e-14));
    Eigen::LLT<MatrixXd> llt(MatrixXd(psi.topLeftCorner(T, T)));
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("identifiability guard on the correlation family") {
  LoadingCell free1{0, 1.0};
  LoadingCell fixed0{-1, 0.0};
  // q = 2 with a fully free 4x2 pattern: 2 constraints from the diagonal
  // only, fewer than q^2 = 4
  CHECK_THROWS_AS(ModelSpec::correlation(
                      4, 2, {{free1, free1}, {free1, free1}, {free1, free1}, {free1, free1}}),
                  std::invalid_argument);
  CHECK_NOTHROW(two_factor_spec());
}

TEST_CASE("pack/unpack fixes the origin") {
  ModelSpec spec = two_factor_spec();
  ParameterVector theta = two_factor_truth();
  theta.covariance[0] = 0.0;
  VectorXd x = pack(theta, spec);
  CHECK(x[8] == doctest::Approx(0.0).epsilon(1e-14));  // correlation 0 <-> 0

  ModelSpec lspec = ModelSpec::longitudinal(2, 2);
  ParameterVector lt;
  lt.intercepts = VectorXd::Zero(2);
  lt.loadings = VectorXd::Ones(1);
  lt.covariance.resize(4);
  lt.covariance << 0.3, 1.0, 1.0, 1.0;  // unit variances <-> 0
  // layout: a0[2], alpha[1], phi, log s1sq, log su2[2]
  VectorXd lx = pack(lt, lspec);
  CHECK(lx[3] == doctest::Approx(0.3));  // phi passes through
  CHECK(std::abs(lx[4]) <= 1e-14);
  CHECK(std::abs(lx[5]) <= 1e-14);
  CHECK(std::abs(lx[6]) <= 1e-14);
}

TEST_CASE("pack/unpack round trip over random draws") {
  ModelSpec spec = two_factor_spec();
  Rng rng(4711);
  for (int rep = 0; rep < 1000; ++rep) {
    VectorXd x(spec.n_free());
    for (int k = 0; k < x.size(); ++k) x[k] = rng.uniform(-2.0, 2.0);
    ParameterVector theta = unpack(x, spec);

    // every unconstrained vector maps to a valid correlation matrix
    MatrixXd psi = psi_matrix(theta, spec);
    Eigen::LLT<MatrixXd> llt(psi);
    REQUIRE(llt.info() == Eigen::Success);
    for (int k = 0; k < spec.q; ++k) CHECK(psi(k, k) == doctest::Approx(1.0).epsilon(1e-12));

    ParameterVector back = unpack(pack(theta, spec), spec);
    CHECK((back.flat() - theta.flat()).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  // a larger correlation block
  LoadingCell free1{0, 1.0};
  LoadingCell fixed0{-1, 0.0};
  std::vector<std::vector<LoadingCell>> pattern;
  for (int j = 0; j < 8; ++j) {
    std::vector<LoadingCell> row(4, fixed0);
    row[j / 2] = free1;
    pattern.push_back(row);
  }
  ModelSpec spec4 = ModelSpec::correlation(8, 4, pattern);
  for (int rep = 0; rep < 200; ++rep) {
    VectorXd x(spec4.n_free());
    for (int k = 0; k < x.size(); ++k) x[k] = rng.uniform(-1.5, 1.5);
    ParameterVector theta = unpack(x, spec4);
    ParameterVector back = unpack(pack(theta, spec4), spec4);
    CHECK((back.flat() - theta.flat()).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  ModelSpec lspec = ModelSpec::longitudinal(3, 2);
  for (int rep = 0; rep < 200; ++rep) {
    VectorXd x(lspec.n_free());
    for (int k = 0; k < x.size(); ++k) x[k] = rng.uniform(-2.0, 2.0);
    ParameterVector theta = unpack(x, lspec);
    ParameterVector back = unpack(pack(theta, lspec), lspec);
    CHECK((back.flat() - theta.flat()).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("simulate_responses marginal rates and determinism") {
  LoadingCell fixed0{-1, 0.0};
  ModelSpec spec = ModelSpec::correlation(3, 1, {{fixed0}, {fixed0}, {fixed0}});
  ParameterVector theta;
  theta.intercepts = VectorXd::Zero(3);
  theta.loadings.resize(0);
  theta.covariance.resize(0);

  ResponseData data = simulate_responses(theta, spec, 10000, 2024);
  for (int j = 0; j < 3; ++j) {
    double mean = data.y.col(j).cast<double>().mean();
    CHECK(mean > 0.48);
    CHECK(mean < 0.52);
  }

  ResponseData again = simulate_responses(theta, spec, 10000, 2024);
  CHECK((data.y - again.y).cwiseAbs().maxCoeff() == 0);
  ResponseData other = simulate_responses(theta, spec, 10000, 2025);
  CHECK((data.y - other.y).cwiseAbs().maxCoeff() != 0);
}

TEST_CASE("simulate_responses induces item association through the factor") {
  LoadingCell freeA{0, 1.0};
  ModelSpec spec = ModelSpec::correlation(2, 1, {{freeA}, {freeA}});
  ParameterVector theta;
  theta.intercepts = VectorXd::Zero(2);
  theta.loadings.resize(2);
  theta.loadings << 2.697, 0.933;
  theta.covariance.resize(0);

  ResponseData data = simulate_responses(theta, spec, 10000, 7);
  // population phi correlation ~ 0.274 (2e6-draw pilot)
  VectorXd a = data.y.col(0).cast<double>();
  VectorXd b = data.y.col(1).cast<double>();
  double ma = a.mean(), mb = b.mean();
  double cov = ((a.array() - ma) * (b.array() - mb)).mean();
  double corr = cov / std::sqrt(ma * (1 - ma) * mb * (1 - mb));
  CHECK(corr > 0.15);
}

TEST_CASE("longitudinal spec structure") {
  ModelSpec spec = ModelSpec::longitudinal(5, 3);
  CHECK(spec.q == 8);
  CHECK(spec.n_responses == 15);
  CHECK(spec.n_intercepts == 5);
  CHECK(spec.n_free_loadings == 4);
  CHECK(spec.n_cov_params == 7);

  ParameterVector theta;
  theta.intercepts = VectorXd::Zero(5);
  theta.loadings.resize(4);
  theta.loadings << 0.5, 0.6, 0.7, 0.8;
  theta.covariance.resize(7);
  theta.covariance << 0.9, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0;

  MatrixXd A = loading_matrix(theta, spec);
  // first item fixed to 1 on each wave factor, own random effect 1
  for (int t = 0; t < 3; ++t) {
    CHECK(A(t, t) == 1.0);
    CHECK(A(t, 3) == 1.0);
  }
  // item 3 at time 2 (row 2*3+1): loading on z_2 and on u_3
  CHECK(A(7, 1) == doctest::Approx(0.6));
  CHECK(A(7, 3 + 2) == 1.0);
  CHECK(A(7, 0) == 0.0);

  auto names = spec.parameter_names();
  CHECK(names.size() == size_t(spec.n_free()));
  CHECK(names[5] == "alpha[2]");
  CHECK(names[9] == "phi");
  CHECK(names[10] == "sigma1sq");
}
