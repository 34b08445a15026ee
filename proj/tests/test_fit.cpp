#include <catch_amalgamated.hpp>

#include <cmath>

#include "esag/density.hpp"
#include "esag/fit.hpp"
#include "esag/sampling.hpp"
#include "oracles.hpp"

using namespace esag;
using Catch::Approx;

namespace {

Vector make_vector(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

OmegaParams reference_omega() {
  return OmegaParams(make_vector({2, -2, -1, -3}), make_vector({-2, 5, 3, 5, -8}));
}

Matrix reference_sample(std::size_t n, std::uint64_t seed) {
  const EsagMoments m = omega_to_moments(reference_omega());
  SeededRng rng(seed);
  return sample_esag(m, n, rng);
}

}  // namespace

TEST_CASE("optimizer gradient matches a higher-order oracle", "[fit]") {
  const Matrix data = reference_sample(40, 1001);
  const auto objective = [&data](const Vector& x) {
    return -detail::sample_log_likelihood(
        data, omega_to_moments(OmegaParams::from_flat(4, x)));
  };
  SeededRng rng(1002);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(9);
    for (Index i = 0; i < 9; ++i) x(i) = 2.0 * rng.normal();
    if (x.head(4).norm() < 0.3) x(0) += 1.0;
    const Vector grad = detail::fd_gradient(objective, x, 1e-6);
    const Vector reference = oracle::fd_gradient_highorder(objective, x);
    REQUIRE((grad - reference).norm() <= 1e-4 * (1.0 + reference.norm()));
  }
}

TEST_CASE("fit recovers simulated parameters", "[fit]") {
  const OmegaParams truth = reference_omega();
  const EsagMoments m = omega_to_moments(truth);
  const Matrix data = reference_sample(800, 2001);

  const FitResult fit = fit_mle(data);
  CHECK(fit.converged);
  CHECK(fit.loglik >= log_likelihood(data, truth) - 1e-6);
  CHECK((fit.moments.mu - truth.mu).norm() <= 0.2 * truth.mu.norm());
  CHECK((fit.moments.V - m.V).norm() <= 1.0);

  // trace is nondecreasing in likelihood
  for (std::size_t i = 1; i < fit.trace.size(); ++i)
    CHECK(fit.trace[i].second >= fit.trace[i - 1].second);
}

TEST_CASE("starting at the truth converges and keeps the ascent property", "[fit]") {
  const OmegaParams truth = reference_omega();
  const Matrix data = reference_sample(400, 2002);
  FitOptions options;
  options.start = truth;
  const FitResult fit = fit_mle(data, options);
  CHECK(fit.converged);
  CHECK(fit.loglik >= log_likelihood(data, truth) - 1e-9);
}

TEST_CASE("truth start and far start agree on V-hat", "[fit]") {
  const OmegaParams truth = reference_omega();
  const Matrix data = reference_sample(1000, 2003);

  FitOptions from_truth;
  from_truth.start = truth;
  const FitResult a = fit_mle(data, from_truth);

  FitOptions from_far;
  from_far.start = OmegaParams(Vector::Ones(4), Vector::Zero(5));
  const FitResult b = fit_mle(data, from_far);

  CHECK(a.converged);
  CHECK(b.converged);
  CHECK((a.moments.V - b.moments.V).norm() <= 1e-3);
}

TEST_CASE("fit consumes only directions", "[fit]") {
  // raw Gaussian draws vs the same rows normalized: identical result
  const EsagMoments m = omega_to_moments(reference_omega());
  SeededRng rng(2004);
  Matrix raw(60, 4);
  for (Index i = 0; i < raw.rows(); ++i) {
    const Vector z = rng.normal_vector(4);
    raw.row(i) = (m.mu + m.eigvecs *
                             (m.lambda.cwiseSqrt().asDiagonal() *
                              (m.eigvecs.transpose() * z)))
                     .transpose();
  }
  Matrix unit = raw;
  for (Index i = 0; i < unit.rows(); ++i) unit.row(i) /= unit.row(i).norm();

  const FitResult from_raw = fit_mle(raw);
  const FitResult from_unit = fit_mle(unit);
  CHECK(from_raw.loglik == from_unit.loglik);
  CHECK((from_raw.omega.flat() - from_unit.omega.flat()).norm() == 0.0);
}

TEST_CASE("fit input validation", "[fit]") {
  CHECK_THROWS_AS(fit_mle(Matrix(0, 4)), data_error);
  CHECK_THROWS_AS(fit_mle(reference_sample(5, 9)), data_error);  // n < p
  Matrix with_zero_row = reference_sample(20, 10);
  with_zero_row.row(3).setZero();
  CHECK_THROWS_AS(fit_mle(with_zero_row), data_error);
  FitOptions bad;
  bad.grad_tol = 0.0;
  CHECK_THROWS_AS(fit_mle(reference_sample(20, 11), bad),
                  invalid_parameter_error);
}

TEST_CASE("fit is deterministic", "[fit]") {
  const Matrix data = reference_sample(200, 2005);
  const FitResult a = fit_mle(data);
  const FitResult b = fit_mle(data);
  CHECK(a.loglik == b.loglik);
  CHECK((a.omega.flat() - b.omega.flat()).norm() == 0.0);
}

TEST_CASE("bootstrap summary of identical replicates is zero", "[fit]") {
  // with B = 2 identical replicates the mean is exact, so the SEs vanish
  // exactly rather than to rounding
  const EsagMoments m = omega_to_moments(reference_omega());
  std::vector<Vector> mus(2, m.mu);
  std::vector<Vector> lambdas(2, m.lambda);
  std::vector<Matrix> vs(2, m.V);
  const BootstrapSummary summary =
      detail::summarize_bootstrap(mus, lambdas, vs, 2, 0);
  CHECK(summary.mu_se.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(summary.lambda_se.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(summary.v_frobenius_se == 0.0);
}

TEST_CASE("bootstrap standard errors", "[fit]") {
  const Matrix data = reference_sample(150, 2006);
  const SeededRng rng(31);
  const BootstrapSummary summary = bootstrap_se(data, 12, rng);
  CHECK(summary.replicates == 12);
  CHECK(summary.dropped <= 2);
  CHECK(summary.mu_se.minCoeff() > 0.0);
  CHECK(summary.lambda_se.size() == 3);
  CHECK(summary.lambda_se.minCoeff() > 0.0);
  CHECK(summary.v_frobenius_se > 0.0);

  const BootstrapSummary replay = bootstrap_se(data, 12, rng);
  CHECK((summary.mu_se - replay.mu_se).norm() == 0.0);
  CHECK(summary.v_frobenius_se == replay.v_frobenius_se);

  const BootstrapSummary threaded = bootstrap_se(data, 12, rng, FitOptions{}, 3);
  CHECK((summary.mu_se - threaded.mu_se).norm() == 0.0);
  CHECK((summary.lambda_se - threaded.lambda_se).norm() == 0.0);
  CHECK(summary.v_frobenius_se == threaded.v_frobenius_se);

  CHECK_THROWS_AS(bootstrap_se(data, 1, rng), invalid_parameter_error);
}

TEST_CASE("bootstrap errors out when too many replicates fail", "[fit]") {
  const Matrix data = reference_sample(150, 2007);
  FitOptions strangled;
  strangled.max_iterations = 1;
  strangled.restarts = 0;
  CHECK_THROWS_AS(bootstrap_se(data, 4, SeededRng(32), strangled),
                  convergence_error);
}

TEST_CASE("far-start agreement holds across replicates", "[fit][slow]") {
  const OmegaParams truth = reference_omega();
  std::size_t agreements = 0;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const Matrix data = reference_sample(500, 3000 + rep);
    FitOptions from_truth;
    from_truth.start = truth;
    FitOptions from_far;
    from_far.start = OmegaParams(Vector::Ones(4), Vector::Zero(5));
    const FitResult a = fit_mle(data, from_truth);
    const FitResult b = fit_mle(data, from_far);
    if ((a.moments.V - b.moments.V).norm() <= 1e-3) ++agreements;
  }
  CHECK(agreements >= 4);
}
