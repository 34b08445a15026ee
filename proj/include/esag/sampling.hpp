#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

#include "esag/core.hpp"
#include "esag/param.hpp"

namespace esag {

/// Deterministic random source addressed by (seed, stream).  The same pair
/// always yields the same sequence; distinct streams are independent, so
/// parallel code can hand stream b to replicate b and stay reproducible no
/// matter how work is scheduled.  A single instance must not be shared
/// between threads.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::seed_seq sequence{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream),
        static_cast<std::uint32_t>(stream >> 32), 0x45534147u};
    engine_.seed(sequence);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// A derived stream; index i always maps to the same child.
  SeededRng substream(std::uint64_t index) const {
    return SeededRng(seed_, detail::splitmix64(stream_ + 0x9E3779B97F4A7C15ull *
                                                              (index + 1)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return (engine_() >> 11) * 0x1.0p-53; }

  /// Uniform index in {0, ..., n-1} without modulo bias.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % span);
  }

  /// Standard normal via Box-Muller (second value cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = ((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Index n) {
    Vector z(n);
    for (Index i = 0; i < n; ++i) z(i) = normal();
    return z;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Angular Gaussian sampler: rows are X/||X|| with X = mu + P D^{1/2} P' Z.
/// The covariance is supplied through its spectral factors, so scenario
/// generators can pass eigenvalues that do not satisfy the ESAG constraints.
inline Matrix sample_ag(const Vector& mu, const Matrix& eigvecs,
                        const Vector& lambda, std::size_t n, SeededRng& rng) {
  if (n == 0) throw invalid_parameter_error("sample size must be >= 1");
  const Index d = mu.size();
  for (Index j = 0; j < lambda.size(); ++j)
    if (!(lambda(j) > 0.0))
      throw invalid_parameter_error("eigenvalues must be positive");
  const Vector sqrt_lambda = lambda.cwiseSqrt();
  Matrix out(static_cast<Index>(n), d);
  for (Index i = 0; i < out.rows(); ++i) {
    double norm = 0.0;
    Vector x(d);
    do {
      const Vector z = rng.normal_vector(d);
      x = mu + eigvecs * (sqrt_lambda.asDiagonal() * (eigvecs.transpose() * z));
      norm = x.norm();
    } while (norm == 0.0);
    out.row(i) = x.transpose() / norm;
  }
  return out;
}

inline Matrix sample_esag(const EsagMoments& moments, std::size_t n,
                          SeededRng& rng) {
  return sample_ag(moments.mu, moments.eigvecs, moments.lambda, n, rng);
}

/// Angular Cauchy: normalized mu + S^{1/2} Z/|W| with Z ~ N(0, I_d) and
/// W ~ N(0, 1) independent.  The scale matrix S defaults to the identity; a
/// symmetric positive-definite alternative may be supplied.
inline Matrix sample_angular_cauchy(const Vector& mu, std::size_t n,
                                    SeededRng& rng,
                                    const std::optional<Matrix>& scale =
                                        std::nullopt) {
  if (n == 0) throw invalid_parameter_error("sample size must be >= 1");
  if (mu.norm() == 0.0) throw invalid_parameter_error("mu must be nonzero");
  const Index d = mu.size();

  Matrix scale_sqrt;
  if (scale) {
    if (scale->rows() != d || scale->cols() != d)
      throw invalid_parameter_error("scale matrix must be d x d");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(*scale);
    if (solver.info() != Eigen::Success ||
        solver.eigenvalues().minCoeff() <= 0.0)
      throw invalid_parameter_error("scale matrix must be positive definite");
    scale_sqrt = solver.eigenvectors() *
                 solver.eigenvalues().cwiseSqrt().asDiagonal() *
                 solver.eigenvectors().transpose();
  }

  Matrix out(static_cast<Index>(n), d);
  for (Index i = 0; i < out.rows(); ++i) {
    double norm = 0.0;
    Vector c(d);
    do {
      Vector z = rng.normal_vector(d);
      if (scale) z = scale_sqrt * z;
      double w = rng.normal();
      while (w == 0.0) w = rng.normal();
      c = mu + z / std::abs(w);
      norm = c.norm();
    } while (norm == 0.0);
    out.row(i) = c.transpose() / norm;
  }
  return out;
}

/// Row-wise mixture: row i comes from the contaminant with probability alpha,
/// otherwise from the base sample.
inline Matrix mix_samples(const Matrix& base, const Matrix& contaminant,
                          double alpha, SeededRng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw invalid_parameter_error("mixing proportion must lie in [0, 1]");
  if (base.rows() != contaminant.rows() || base.cols() != contaminant.cols())
    throw invalid_parameter_error("mixture inputs must have matching shapes");
  Matrix out(base.rows(), base.cols());
  for (Index i = 0; i < base.rows(); ++i)
    out.row(i) = (rng.uniform() < alpha) ? contaminant.row(i) : base.row(i);
  return out;
}

}  // namespace esag
