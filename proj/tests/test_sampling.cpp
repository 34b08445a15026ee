#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "esag/density.hpp"
#include "esag/param.hpp"
#include "esag/sampling.hpp"

using namespace esag;
using Catch::Approx;

namespace {

Vector make_vector(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}


template <class A, class B>
bool exact_equal(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a - b).norm() == 0.0;
}

EsagMoments isotropic_moments(double scale, Index d) {
  return omega_to_moments(
      OmegaParams(Vector::Constant(d, scale), Vector::Zero(gamma_length_for_dim(d))));
}

}  // namespace

TEST_CASE("seeded rng reproducibility and stream independence", "[sampling]") {
  SeededRng a(123, 5);
  SeededRng b(123, 5);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());

  SeededRng c(123, 6);
  bool all_equal = true;
  SeededRng a2(123, 5);
  for (int i = 0; i < 100; ++i) all_equal &= (a2.normal() == c.normal());
  CHECK_FALSE(all_equal);

  // substream derivation is stable
  CHECK(SeededRng(9, 1).substream(4).stream() ==
        SeededRng(9, 1).substream(4).stream());
  CHECK(SeededRng(9, 1).substream(4).stream() !=
        SeededRng(9, 1).substream(5).stream());
}

TEST_CASE("uniform_index stays in range and covers values", "[sampling]") {
  SeededRng rng(55);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) CHECK(c > 800);
}

TEST_CASE("esag samples are unit norm and reproducible", "[sampling]") {
  const OmegaParams omega(make_vector({2, -2, -1, -3}),
                          make_vector({-2, 5, 3, 5, -8}));
  const EsagMoments m = omega_to_moments(omega);

  SeededRng rng(42, 3);
  const Matrix sample = sample_esag(m, 200, rng);
  for (Index i = 0; i < sample.rows(); ++i)
    REQUIRE(std::abs(sample.row(i).norm() - 1.0) <= 1e-12);

  SeededRng rng2(42, 3);
  const Matrix replay = sample_esag(m, 200, rng2);
  CHECK(exact_equal(sample, replay));

  SeededRng rng3(43, 3);
  CHECK_FALSE(exact_equal(sample, sample_esag(m, 200, rng3)));

  SeededRng rng4(42, 3);
  CHECK_THROWS_AS(sample_esag(m, 0, rng4), invalid_parameter_error);
}

TEST_CASE("larger mu concentrates the sample", "[sampling]") {
  const EsagMoments loose = isotropic_moments(2.0, 3);
  const EsagMoments tight = isotropic_moments(4.0, 3);
  SeededRng rng(77);
  const Matrix a = sample_esag(loose, 4000, rng);
  const Matrix b = sample_esag(tight, 4000, rng);
  const Vector direction = loose.mu / loose.mu.norm();
  const double mean_a = (a * direction).mean();
  const double mean_b = (b * direction).mean();
  CHECK(mean_b > mean_a);
  CHECK(mean_a > 0.5);
}

TEST_CASE("sample mean aligns with mu for concentrated models", "[sampling]") {
  const EsagMoments m = isotropic_moments(4.0, 3);  // ||mu|| = 4 sqrt(3)
  SeededRng rng(78);
  const Matrix sample = sample_esag(m, 100000, rng);
  const Vector mean = sample.colwise().mean().transpose();
  const double angle = std::acos(std::clamp(
      mean.dot(m.mu) / (mean.norm() * m.mu.norm()), -1.0, 1.0));
  CHECK(angle < 0.02);
}

TEST_CASE("angular cauchy has heavier tails than esag", "[sampling]") {
  const Vector mu = make_vector({2, -2, 3, -3});
  const EsagMoments m =
      omega_to_moments(OmegaParams(mu, Vector::Zero(5)));
  SeededRng rng(79);
  const Matrix esag_sample = sample_esag(m, 100000, rng);
  const Matrix cauchy_sample = sample_angular_cauchy(mu, 100000, rng);
  const Vector direction = mu / mu.norm();

  const auto percentile99 = [&direction](const Matrix& sample) {
    std::vector<double> angles(static_cast<std::size_t>(sample.rows()));
    for (Index i = 0; i < sample.rows(); ++i)
      angles[static_cast<std::size_t>(i)] = std::acos(
          std::clamp(sample.row(i).dot(direction), -1.0, 1.0));
    std::nth_element(angles.begin(), angles.begin() + 99000, angles.end());
    return angles[99000];
  };
  CHECK(percentile99(cauchy_sample) > percentile99(esag_sample));

  for (Index i = 0; i < 50; ++i)
    REQUIRE(std::abs(cauchy_sample.row(i).norm() - 1.0) <= 1e-12);

  SeededRng replay(79);
  const Matrix esag_replay = sample_esag(m, 5, replay);
  CHECK_THROWS_AS(sample_angular_cauchy(Vector::Zero(3), 5, replay),
                  invalid_parameter_error);
}

TEST_CASE("angular cauchy accepts an alternative scale matrix", "[sampling]") {
  const OmegaParams omega(make_vector({2, -2, 3, -3}),
                          make_vector({2, 3, 5, 8, 2}));
  const EsagMoments m = omega_to_moments(omega);

  SeededRng rng_a(95);
  const Matrix identity_scale = sample_angular_cauchy(m.mu, 200, rng_a);
  SeededRng rng_b(95);
  const Matrix shaped = sample_angular_cauchy(m.mu, 200, rng_b, m.V);
  CHECK_FALSE(exact_equal(identity_scale, shaped));
  for (Index i = 0; i < shaped.rows(); ++i)
    REQUIRE(std::abs(shaped.row(i).norm() - 1.0) <= 1e-12);

  SeededRng rng_c(95);
  const Matrix replay = sample_angular_cauchy(m.mu, 200, rng_c, m.V);
  CHECK(exact_equal(shaped, replay));

  SeededRng rng_d(95);
  Matrix bad = Matrix::Identity(4, 4);
  bad(0, 0) = -1.0;
  CHECK_THROWS_AS(sample_angular_cauchy(m.mu, 5, rng_d, bad),
                  invalid_parameter_error);
  CHECK_THROWS_AS(sample_angular_cauchy(m.mu, 5, rng_d, Matrix::Identity(3, 3)),
                  invalid_parameter_error);
}

TEST_CASE("mixing proportions", "[sampling]") {
  const EsagMoments m = isotropic_moments(2.0, 3);
  SeededRng rng(80);
  const Matrix a = sample_esag(m, 10000, rng);
  const Matrix b = sample_angular_cauchy(m.mu, 10000, rng);

  SeededRng coin(81);
  CHECK(exact_equal(mix_samples(a, b, 0.0, coin), a));
  CHECK(exact_equal(mix_samples(a, b, 1.0, coin), b));
  const Matrix mixed = mix_samples(a, b, 0.2, coin);
  Index from_contaminant = 0;
  for (Index i = 0; i < mixed.rows(); ++i)
    if ((mixed.row(i) - b.row(i)).norm() == 0.0) ++from_contaminant;
  // 3 sigma around 2000 for Binomial(10000, 0.2)
  CHECK(from_contaminant > 1880);
  CHECK(from_contaminant < 2120);
  CHECK_THROWS_AS(mix_samples(a, b, 1.5, coin), invalid_parameter_error);
}

TEST_CASE("parallel stream generation equals sequential", "[sampling]") {
  const EsagMoments m = isotropic_moments(3.0, 4);
  const SeededRng root(90, 17);

  std::vector<Matrix> sequential(8);
  for (std::size_t i = 0; i < 8; ++i) {
    SeededRng stream = root.substream(i);
    sequential[i] = sample_esag(m, 50, stream);
  }
  std::vector<Matrix> parallel(8);
  detail::parallel_for(8, 4, [&](std::size_t i) {
    SeededRng stream = root.substream(i);
    parallel[i] = sample_esag(m, 50, stream);
  });
  for (std::size_t i = 0; i < 8; ++i) REQUIRE(exact_equal(sequential[i], parallel[i]));
}

TEST_CASE("true parameters beat perturbed ones in likelihood", "[sampling]") {
  const OmegaParams omega(make_vector({2, -2, -1, -3}),
                          make_vector({-2, 5, 3, 5, -8}));
  const EsagMoments m = omega_to_moments(omega);
  SeededRng rng(91);
  const Matrix sample = sample_esag(m, 20000, rng);
  const double at_truth = log_likelihood(sample, omega);

  SeededRng perturb(92);
  for (int trial = 0; trial < 5; ++trial) {
    Vector mu = omega.mu;
    Vector gamma = omega.gamma;
    for (Index i = 0; i < mu.size(); ++i) mu(i) += 0.3 * perturb.normal();
    for (Index i = 0; i < gamma.size(); ++i) gamma(i) += 0.5 * perturb.normal();
    CHECK(log_likelihood(sample, OmegaParams(mu, gamma)) < at_truth);
  }
}
