#include <catch_amalgamated.hpp>

#include <cmath>

#include "esag/fit.hpp"
#include "esag/simstudy.hpp"

using namespace esag;
using Catch::Approx;

namespace {

template <class A, class B>
bool exact_equal(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a - b).norm() == 0.0;
}

}  // namespace

TEST_CASE("scenario validation", "[simstudy]") {
  CHECK_THROWS_AS(Scenario::m2(0.0, 100).validate(), invalid_parameter_error);
  CHECK_THROWS_AS(Scenario::m2(1.0, 100).validate(), invalid_parameter_error);
  CHECK_THROWS_AS(Scenario::m3(1.0, 100).validate(), invalid_parameter_error);
  CHECK_THROWS_AS(Scenario::m4(-2.0, 100).validate(), invalid_parameter_error);
  CHECK_THROWS_AS(Scenario::m1(0).validate(), invalid_parameter_error);
  CHECK_NOTHROW(Scenario::m3(0.05, 100).validate());
  CHECK_NOTHROW(Scenario::m4(5.0, 100).validate());
}

TEST_CASE("M3 breaks the determinant constraint only", "[simstudy]") {
  for (double alpha : {0.05, 0.1, 5.0, 10.0}) {
    const Scenario s = Scenario::m3(alpha, 100);
    const Matrix v = scenario_covariance(s);
    CHECK(v.determinant() == Approx(alpha).margin(1e-10 * std::max(1.0, alpha)));
    CHECK((v * s.base_mu - s.base_mu).norm() <= 1e-10 * s.base_mu.norm());
  }
}

TEST_CASE("M4 breaks the eigenvalue constraint only", "[simstudy]") {
  for (double alpha : {0.1, 0.5, 2.5, 5.0}) {
    const Scenario s = Scenario::m4(alpha, 100);
    const Matrix v = scenario_covariance(s);
    CHECK(v.determinant() == Approx(1.0).margin(1e-10));
    CHECK((v * s.base_mu - alpha * s.base_mu).norm() <=
          1e-10 * s.base_mu.norm() * std::max(1.0, alpha));
  }
}

TEST_CASE("M1 sampling is reproducible and fits recover mu", "[simstudy]") {
  const Scenario s = Scenario::m1(1000);
  SeededRng rng(801);
  const Matrix data = make_scenario_sample(s, rng);
  SeededRng rng2(801);
  const Matrix replay = make_scenario_sample(s, rng2);
  CHECK(exact_equal(data, replay));

  const FitResult fit = fit_mle(data);
  CHECK(fit.converged);
  CHECK((fit.moments.mu - s.base_mu).norm() <= 0.25 * s.base_mu.norm());
}

TEST_CASE("M2 sampling mixes the two sources", "[simstudy]") {
  const Scenario s = Scenario::m2(0.2, 400);
  SeededRng rng(802);
  const Matrix data = make_scenario_sample(s, rng);
  CHECK(data.rows() == 400);
  for (Index i = 0; i < data.rows(); ++i)
    REQUIRE(std::abs(data.row(i).norm() - 1.0) <= 1e-12);
}

TEST_CASE("rejection study smoke", "[simstudy]") {
  const Scenario strong = Scenario::m4(5.0, 150);
  const std::vector<double> levels{0.05, 0.25};
  const StudyReport report =
      rejection_study(strong, 6, 10, levels, SeededRng(803));
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].level == 0.05);
  CHECK(report.rows[0].reps == 6);
  for (const StudyRow& row : report.rows) {
    CHECK(row.rate >= 0.0);
    CHECK(row.rate <= 1.0);
    CHECK(row.drops <= 6);
  }
  // M4 with alpha = 5 is a severe violation: should reject essentially always
  CHECK(report.rows[0].rate >= 0.5);

  const StudyReport replay =
      rejection_study(strong, 6, 10, levels, SeededRng(803));
  CHECK(replay.rows[0].rate == report.rows[0].rate);
  const StudyReport threaded =
      rejection_study(strong, 6, 10, levels, SeededRng(803), FitOptions{}, 3);
  CHECK(threaded.rows[0].rate == report.rows[0].rate);
  CHECK(threaded.rows[1].rate == report.rows[1].rate);
}

TEST_CASE("rejection study input validation", "[simstudy]") {
  const Scenario s = Scenario::m1(100);
  CHECK_THROWS_AS(rejection_study(s, 0, 5, {0.05}, SeededRng(1)),
                  invalid_parameter_error);
  CHECK_THROWS_AS(rejection_study(s, 2, 0, {0.05}, SeededRng(1)),
                  invalid_parameter_error);
  CHECK_THROWS_AS(rejection_study(s, 2, 2, {1.5}, SeededRng(1)),
                  invalid_parameter_error);
}

TEST_CASE("M2 power increases with contamination", "[simstudy][slow]") {
  // desk-scale restatement of the published pattern, with binomial slack
  const std::vector<double> levels{0.05};
  const std::size_t reps = 40, B = 40, n = 250;
  double previous = -1.0;
  std::size_t index = 0;
  for (double alpha : {0.05, 0.1, 0.2}) {
    const StudyReport report = rejection_study(
        Scenario::m2(alpha, n), reps, B, levels, SeededRng(804).substream(index++));
    const double rate = report.rows[0].rate;
    INFO("alpha=" << alpha << " rate=" << rate);
    if (previous >= 0.0) {
      const double slack =
          3.0 * std::sqrt(0.25 / static_cast<double>(reps));  // 3 sigma
      CHECK(rate >= previous - slack);
    }
    previous = rate;
  }
}
