#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "treenet/pln.hpp"

using treenet::conditional_moments;
using treenet::elbo;
using treenet::fit_pln;
using treenet::IntMatrix;
using treenet::Matrix;
using treenet::PlnConfig;
using treenet::PlnFit;
using treenet::Vector;

namespace {

bool trace_nondecreasing(const std::vector<double>& trace) {
  for (size_t i = 1; i < trace.size(); ++i) {
    if (trace[i] < trace[i - 1] - 1e-6 * (std::abs(trace[i - 1]) + 1e-12))
      return false;
  }
  return true;
}

PlnFit make_state(const Matrix& theta, const Matrix& sigma, const Matrix& m,
                  const Matrix& s_common) {
  PlnFit fit;
  fit.theta = theta;
  fit.sigma = sigma;
  fit.vmean = m;
  fit.vcov.assign(static_cast<size_t>(m.rows()), s_common);
  return fit;
}

// Small local PLN data generator for self-consistency checks.
struct SimData {
  IntMatrix y;
  Matrix x;
  Matrix o;
};

SimData simulate_pln(int n, int p, const Matrix& theta, const Matrix& sigma,
                     unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int d = static_cast<int>(theta.rows());
  SimData out;
  out.x = Matrix::Ones(n, d);
  for (int i = 0; i < n; ++i)
    for (int c = 1; c < d; ++c) out.x(i, c) = gauss(rng);
  out.o = Matrix::Zero(n, p);
  out.y = IntMatrix::Zero(n, p);
  const Matrix chol = Eigen::LLT<Matrix>(sigma).matrixL();
  for (int i = 0; i < n; ++i) {
    Vector eps(p);
    for (int j = 0; j < p; ++j) eps(j) = gauss(rng);
    const Vector z = chol * eps;
    for (int j = 0; j < p; ++j) {
      const double rate = std::exp(out.x.row(i) * theta.col(j) + z(j));
      std::poisson_distribution<int> pois(rate);
      out.y(i, j) = pois(rng);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("elbo KL term vanishes when the posterior equals the prior") {
  const int n = 4, p = 3;
  Matrix sigma(p, p);
  sigma << 1.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 0.8;
  IntMatrix y(n, p);
  y << 1, 0, 2, 3, 1, 0, 0, 0, 5, 2, 2, 2;
  Matrix x = Matrix::Ones(n, 1);
  Matrix o = Matrix::Zero(n, p);
  Matrix theta = Matrix::Zero(1, p);
  theta << 0.2, -0.1, 0.4;

  PlnFit fit = make_state(theta, sigma, Matrix::Zero(n, p), sigma);
  // With m = 0 and S_i = Sigma only the Poisson part remains.
  double expected = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      const double z = theta(0, j);
      expected += y(i, j) * z - std::exp(z + 0.5 * sigma(j, j)) -
                  std::lgamma(y(i, j) + 1.0);
    }
  }
  CHECK(elbo(y, x, o, fit) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("elbo never exceeds the exact p=1 log-likelihood") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 1 + static_cast<int>(unif(rng) * 6);
    const double theta = -0.5 + 2.0 * unif(rng);
    const double sigma2 = 0.3 + 1.5 * unif(rng);
    IntMatrix y(n, 1);
    Matrix o = Matrix::Zero(n, 1);
    for (int i = 0; i < n; ++i)
      y(i, 0) = static_cast<int>(unif(rng) * 8);
    if (rep == 0) {  // the spec's minimal instance
      y = IntMatrix::Constant(1, 1, 3);
      o = Matrix::Zero(1, 1);
    }
    const double exact = oracles::pln_loglik_1d_total(
        y, theta, o, sigma2);

    Matrix x = Matrix::Ones(y.rows(), 1);
    Matrix theta_m(1, 1);
    theta_m << theta;
    Matrix sigma_m(1, 1);
    sigma_m << sigma2;
    for (int vp = 0; vp < 5; ++vp) {
      Matrix m(y.rows(), 1);
      for (int i = 0; i < y.rows(); ++i) m(i, 0) = -1.0 + 2.0 * unif(rng);
      Matrix s(1, 1);
      s << 0.05 + 2.0 * unif(rng);
      const PlnFit fit = make_state(theta_m, sigma_m, m, s);
      CHECK(elbo(y, x, o, fit) <= exact + 1e-8);
    }
  }
}

TEST_CASE("offsets and intercept enter the bound only through their sum") {
  const int n = 6, p = 4;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  IntMatrix y(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) y(i, j) = static_cast<int>(unif(rng) * 6);
  Matrix x = Matrix::Ones(n, 1);
  Matrix o = Matrix::Zero(n, p);
  Matrix theta(1, p);
  theta << 0.3, -0.2, 0.1, 0.5;
  Matrix sigma = Matrix::Identity(p, p);
  Matrix m(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = unif(rng) - 0.5;
  const PlnFit fit = make_state(theta, sigma, m, (0.2 * sigma).eval());

  const double base = elbo(y, x, o, fit);
  const double c = 0.73;
  PlnFit shifted = fit;
  shifted.theta.array() -= c;
  const double moved = elbo(y, x, (o.array() + c).matrix(), shifted);
  CHECK(moved == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("fit recovers the generating coefficients") {
  const int p = 5, d = 2;
  Matrix theta(d, p);
  theta << 1.0, 0.6, 1.2, 0.8, 1.0,
           0.5, -0.4, 0.3, -0.2, 0.6;
  Matrix sigma = Matrix::Identity(p, p);
  sigma(0, 1) = sigma(1, 0) = 0.4;
  sigma(2, 3) = sigma(3, 2) = -0.3;

  double total_err = 0.0;
  std::vector<double> errs;
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const SimData data = simulate_pln(1000, p, theta, sigma, seed);
    PlnConfig cfg;
    cfg.tol = 1e-5;
    const PlnFit fit = fit_pln(data.y, data.x, data.o, cfg);
    CHECK(trace_nondecreasing(fit.elbo_trace));
    const double err = (fit.theta - theta).cwiseAbs().maxCoeff();
    errs.push_back(err);
    total_err += err;
  }
  CHECK(total_err / 10.0 <= 0.15);
}

TEST_CASE("constant counts pin the fitted mean") {
  const int n = 40, p = 3, c = 7;
  IntMatrix y = IntMatrix::Constant(n, p, c);
  Matrix x = Matrix::Ones(n, 1);
  Matrix o = Matrix::Zero(n, p);
  const PlnFit fit = fit_pln(y, x, o, {});
  CHECK(trace_nondecreasing(fit.elbo_trace));
  for (int j = 0; j < p; ++j) {
    const double mean = std::exp(fit.theta(0, j) + 0.5 * fit.sigma(j, j));
    CHECK(mean == doctest::Approx(c).epsilon(0.05));
  }
}

TEST_CASE("degenerate designs are rejected with the aliased columns") {
  IntMatrix y = IntMatrix::Constant(5, 3, 1);
  Matrix x(5, 2);
  x.col(0).setOnes();
  x.col(1) = 2.0 * x.col(0);  // aliased with the intercept
  Matrix o = Matrix::Zero(5, 3);
  CHECK_THROWS_WITH_AS(fit_pln(y, x, o, {}),
                       doctest::Contains("aliased"),
                       treenet::ValidationError);
}

TEST_CASE("elbo rejects a non-PD covariance") {
  IntMatrix y = IntMatrix::Constant(2, 2, 1);
  Matrix x = Matrix::Ones(2, 1);
  Matrix o = Matrix::Zero(2, 2);
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  PlnFit fit = make_state(Matrix::Zero(1, 2), bad, Matrix::Zero(2, 2),
                          Matrix::Identity(2, 2));
  CHECK_THROWS_AS(elbo(y, x, o, fit), treenet::ValidationError);
}

TEST_CASE("conditional moments") {
  const int n = 5, p = 3;
  SUBCASE("identity posterior gives unit variances, no correlation") {
    PlnFit fit = make_state(Matrix::Zero(1, p), Matrix::Identity(p, p),
                            Matrix::Zero(n, p), Matrix::Identity(p, p));
    const auto est = conditional_moments(fit);
    CHECK((est.sigma2 - Vector::Ones(p)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((est.rho - Matrix::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(est.clamped.empty());
  }
  SUBCASE("shared covariance reproduces its correlation matrix") {
    Matrix s0(p, p);
    s0 << 2.0, 0.6, -0.4, 0.6, 1.0, 0.2, -0.4, 0.2, 0.5;
    PlnFit fit = make_state(Matrix::Zero(1, p), Matrix::Identity(p, p),
                            Matrix::Zero(n, p), s0);
    const auto est = conditional_moments(fit);
    for (int j = 0; j < p; ++j) {
      CHECK(est.sigma2(j) == doctest::Approx(s0(j, j)).epsilon(1e-12));
      for (int k = 0; k < p; ++k) {
        const double expect = s0(j, k) / std::sqrt(s0(j, j) * s0(k, k));
        CHECK(est.rho(j, k) == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  SUBCASE("collinear means hit the clamp") {
    Matrix m(n, p);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      m(i, 0) = gauss(rng);
      m(i, 1) = m(i, 0);  // duplicated species signal
      m(i, 2) = gauss(rng);
    }
    PlnFit fit = make_state(Matrix::Zero(1, p), Matrix::Identity(p, p), m,
                            (1e-12 * Matrix::Identity(p, p)).eval());
    const auto est = conditional_moments(fit);
    CHECK(est.rho(0, 1) == doctest::Approx(1.0 - treenet::kRhoClamp));
    REQUIRE(est.clamped.size() == 1);
    CHECK(est.clamped[0] == std::make_pair(0, 1));
  }
  SUBCASE("all-zero species is reported by index") {
    PlnFit fit = make_state(Matrix::Zero(1, p), Matrix::Identity(p, p),
                            Matrix::Zero(n, p),
                            (1e-14 * Matrix::Identity(p, p)).eval());
    CHECK_THROWS_WITH_AS(conditional_moments(fit),
                         doctest::Contains("species 0"),
                         treenet::ValidationError);
  }
}
