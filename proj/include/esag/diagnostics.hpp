#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "esag/core.hpp"
#include "esag/fit.hpp"
#include "esag/param.hpp"
#include "esag/sampling.hpp"

// Residual-based model diagnostics.
//
// With Y-hat = mu/||mu||, the directional residual is r_i = (I - YY')Y_i and
// its quadratic form Q_i = r_i' V^{-1} r_i.  T0 = ||mu||^2 Q and
// T1 = (||mu||^2 + sum_j lambda_j) Q; T1 is approximately chi^2_{d-1} already
// at moderate concentration.  The goodness-of-fit test compares the observed
// T1 sample with a reference T1 sample simulated from the fitted ESAG via a
// two-sample KS test, and calibrates the resulting p-value (the test
// statistic KS_p) with a parametric bootstrap.

namespace esag {

struct ResidualSet {
  Matrix residuals;
  Vector q;
  Vector t0;
  Vector t1;
};

inline ResidualSet residuals(const Matrix& data, const EsagMoments& m) {
  const Index d = m.dim();
  if (data.cols() != d)
    throw invalid_parameter_error("data and moments dimensions differ");
  const Vector direction = m.mu / m.mu.norm();
  const double mu_sq = m.mu.squaredNorm();
  const double t1_scale = mu_sq + m.lambda.sum();

  ResidualSet out;
  out.residuals.resize(data.rows(), d);
  out.q.resize(data.rows());
  out.t0.resize(data.rows());
  out.t1.resize(data.rows());
  for (Index i = 0; i < data.rows(); ++i) {
    const Vector y = data.row(i).transpose();
    const Vector r = y - direction * direction.dot(y);
    double q = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double proj = m.eigvecs.col(j).dot(r);
      q += proj * proj / m.lambda(j);
    }
    out.residuals.row(i) = r.transpose();
    out.q(i) = q;
    out.t0(i) = mu_sq * q;
    out.t1(i) = t1_scale * q;
  }
  return out;
}

/// Evaluates both sides of the quadratic-form identity
/// Q = ||U_{-d}||^2 / ||X||^2 for X = V^{1/2} Z + mu, U = P' Z.
/// Returns (Q computed from the residual definition, right-hand side).
inline std::pair<double, double> appendix_b_identity(const Vector& z,
                                                     const EsagMoments& m) {
  const Index d = m.dim();
  if (z.size() != d)
    throw invalid_parameter_error("draw and moments dimensions differ");
  const Vector x =
      m.mu + m.eigvecs * (m.lambda.cwiseSqrt().asDiagonal() *
                          (m.eigvecs.transpose() * z));
  const double x_sq = x.squaredNorm();
  if (x_sq == 0.0) throw invalid_parameter_error("degenerate draw: X = 0");

  const Vector y = x / std::sqrt(x_sq);
  const Vector direction = m.mu / m.mu.norm();
  const Vector r = y - direction * direction.dot(y);
  double q = 0.0;
  for (Index j = 0; j < d; ++j) {
    const double proj = m.eigvecs.col(j).dot(r);
    q += proj * proj / m.lambda(j);
  }

  Vector u = m.eigvecs.transpose() * z;
  u(d - 1) = 0.0;
  return {q, u.squaredNorm() / x_sq};
}

/// Survival function of the asymptotic Kolmogorov distribution,
/// Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2), with the theta-function
/// form on the left where that series converges slowly.
inline double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 1.18) {
    const double w = std::exp(-9.8696044010893586188 / (8.0 * x * x));  // e^{-pi^2/(8x^2)}
    const double cdf = detail::kSqrtTwoPi / x *
                       (w + std::pow(w, 9.0) + std::pow(w, 25.0) + std::pow(w, 49.0));
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  const double u = std::exp(-2.0 * x * x);
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 24; ++k) {
    const double term = std::pow(u, static_cast<double>(k) * k);
    sum += sign * term;
    if (term < 1e-18) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test; p-value from the asymptotic
/// distribution with effective size n_a n_b / (n_a + n_b).  ECDFs are
/// right-continuous and the sup is taken over the pooled sorted points.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw invalid_parameter_error("KS test requires nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());

  double d_stat = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    double value;
    if (i < a.size() && j < b.size())
      value = std::min(a[i], b[j]);
    else if (i < a.size())
      value = a[i];
    else
      value = b[j];
    while (i < a.size() && a[i] == value) ++i;
    while (j < b.size() && b[j] == value) ++j;
    d_stat = std::max(d_stat, std::abs(i / na - j / nb));
  }

  KsResult out;
  out.statistic = d_stat;
  const double effective = na * nb / (na + nb);
  out.p_value = kolmogorov_sf(std::sqrt(effective) * d_stat);
  return out;
}

inline double chi_squared_cdf(double x, int dof) {
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

/// One-sample KS distance between a sample and the chi^2_dof CDF.
inline double ks_distance_to_chi_squared(std::vector<double> sample, int dof) {
  if (sample.empty())
    throw invalid_parameter_error("KS distance requires a nonempty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d_stat = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double cdf = chi_squared_cdf(sample[i], dof);
    d_stat = std::max(d_stat, std::max(cdf - i / n, (i + 1) / n - cdf));
  }
  return d_stat;
}

struct GofResult {
  double ks_p = 1.0;                  // observed KS p-value (the test statistic)
  std::vector<double> boot_ks_p;      // bootstrap null draws of KS_p
  double p_value = 1.0;               // estimated p-value s / B
  std::vector<double> t1_observed;
  std::vector<double> t1_reference;
  std::size_t dropped = 0;
  OmegaParams omega_hat;
  EsagMoments moments_hat;
  double loglik = 0.0;
  bool converged = false;

  /// Sorted (observed, reference) columns for a QQ plot.
  std::pair<std::vector<double>, std::vector<double>> qq_pairs() const {
    auto obs = t1_observed;
    auto ref = t1_reference;
    std::sort(obs.begin(), obs.end());
    std::sort(ref.begin(), ref.end());
    return {std::move(obs), std::move(ref)};
  }
};

namespace detail {

inline std::vector<double> t1_sample(const Matrix& data, const EsagMoments& m) {
  const Vector t1 = residuals(data, m).t1;
  return std::vector<double>(t1.data(), t1.data() + t1.size());
}

/// Steps 2-7 of the GOF procedure: fit, observed T1, reference T1 simulated
/// from the fit (no refit for the reference), KS p-value.
struct GofRound {
  FitResult fit;
  std::vector<double> t1_observed;
  std::vector<double> t1_reference;
  double ks_p;
};

inline GofRound gof_round(const Matrix& rows, SeededRng rng,
                          const FitOptions& options) {
  GofRound round{fit_mle(rows, options), {}, {}, 1.0};
  if (!round.fit.converged)
    throw convergence_error("GOF round: fit did not converge");
  round.t1_observed = t1_sample(rows, round.fit.moments);
  const Matrix reference =
      sample_esag(round.fit.moments, static_cast<std::size_t>(rows.rows()), rng);
  round.t1_reference = t1_sample(reference, round.fit.moments);
  round.ks_p = ks_two_sample(round.t1_observed, round.t1_reference).p_value;
  return round;
}

}  // namespace detail

/// Parametric-bootstrap goodness-of-fit test for the ESAG model.
///
/// The observed KS_p compares the fitted-model T1 residual statistics against
/// a reference sample of equal size simulated from the fit.  Each of the B
/// bootstrap replicates simulates a dataset from the fitted model, repeats
/// the whole round (including refitting), and the estimated p-value is the
/// fraction of replicates with KS_p^{(b)} strictly below the observed KS_p.
/// Replicates whose refit fails are dropped; more than 20% drops is an error.
inline GofResult gof_test(const Matrix& data, std::size_t B,
                          const SeededRng& rng, const FitOptions& options = {},
                          unsigned threads = 1) {
  if (B < 1) throw invalid_parameter_error("gof_test requires B >= 1");
  const Matrix rows = detail::normalized_rows(data);
  const std::size_t n = static_cast<std::size_t>(rows.rows());

  detail::GofRound observed = detail::gof_round(rows, rng.substream(0), options);

  std::vector<char> ok(B, 0);
  std::vector<double> draws(B, 0.0);
  detail::parallel_for(B, threads, [&](std::size_t b) {
    SeededRng replicate = rng.substream(b + 1);
    SeededRng data_rng = replicate.substream(0);
    const Matrix boot = sample_esag(observed.fit.moments, n, data_rng);
    try {
      draws[b] = detail::gof_round(boot, replicate.substream(1), options).ks_p;
      ok[b] = 1;
    } catch (const convergence_error&) {
    }
  });

  GofResult result{observed.ks_p,
                   {},
                   1.0,
                   std::move(observed.t1_observed),
                   std::move(observed.t1_reference),
                   0,
                   observed.fit.omega,
                   observed.fit.moments,
                   observed.fit.loglik,
                   observed.fit.converged};
  for (std::size_t b = 0; b < B; ++b)
    if (ok[b]) result.boot_ks_p.push_back(draws[b]);
  result.dropped = B - result.boot_ks_p.size();
  if (5 * result.dropped > B)
    throw convergence_error("more than 20% of GOF bootstrap replicates failed");

  std::size_t below = 0;
  for (double draw : result.boot_ks_p)
    if (draw < result.ks_p) ++below;
  result.p_value =
      static_cast<double>(below) / static_cast<double>(result.boot_ks_p.size());
  return result;
}

/// Simulates n draws with exact parameters and returns the one-sample KS
/// distances of the T0 and T1 samples to chi^2_{d-1}.
inline std::pair<double, double> t1_pivot_quality(const EsagMoments& m,
                                                  std::size_t n, SeededRng rng) {
  if (n < 100) throw invalid_parameter_error("t1_pivot_quality requires n >= 100");
  const Matrix sample = sample_esag(m, n, rng);
  const ResidualSet rs = residuals(sample, m);
  const int dof = static_cast<int>(m.dim()) - 1;
  std::vector<double> t0(rs.t0.data(), rs.t0.data() + rs.t0.size());
  std::vector<double> t1(rs.t1.data(), rs.t1.data() + rs.t1.size());
  return {ks_distance_to_chi_squared(std::move(t0), dof),
          ks_distance_to_chi_squared(std::move(t1), dof)};
}

}  // namespace esag
