#pragma once

#include <cmath>
#include <limits>

#include "esag/core.hpp"
#include "esag/param.hpp"

// ESAG density
//
//   f(y | mu, V) = (2 pi)^{-(d-1)/2} (y' V^{-1} y)^{-d/2}
//                  exp[ {(y'mu)^2 / (y'V^{-1}y) - mu'mu} / 2 ]
//                  M_{d-1}( y'mu / sqrt(y'V^{-1}y) ),
//
// with the normal-moment integral
//   M_k(t) = (2 pi)^{-1/2} int_0^inf x^k exp{-(x-t)^2/2} dx.
//
// M_k satisfies M_0 = Phi(t), M_1 = phi(t) + t Phi(t) and the three-term
// recursion M_k = t M_{k-1} + (k-1) M_{k-2}.  For t >= 0 all recursion terms
// are positive and the forward pass is stable.  For t < 0 the wanted solution
// is the minimal one and forward recursion loses digits rapidly (its relative
// error grows like t^{2k}/k!), so we run the recursion downward from a high
// trial order and rescale against Phi(t) (Miller's algorithm).  Far in the
// left tail, where Phi underflows, log M_k switches to the Watson expansion
//   M_k(-a) = phi(a) k! a^{-(k+1)} { 1 - (k+1)(k+2)/(2a^2) + ... }.

namespace esag {

namespace detail {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kSqrtTwoPi = 2.5066282746310005024157652848110;

inline double norm_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }
inline double norm_pdf(double t) { return std::exp(-0.5 * t * t) / kSqrtTwoPi; }

inline double mfun_forward(int k, double t) {
  const double m0 = norm_cdf(t);
  if (k == 0) return m0;
  const double m1 = norm_pdf(t) + t * m0;
  if (k == 1) return m1;
  double prev = m0, cur = m1;
  for (int i = 2; i <= k; ++i) {
    const double next = t * cur + (i - 1) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

inline double mfun_miller(int k, double t) {
  // downward pass: x_{i-2} = (x_i - t x_{i-1}) / (i - 1); with t < 0 every
  // term is positive, then normalize so that x_0 matches Phi(t).  The wrong-
  // solution component decays like exp(-2|t| (sqrt(start) - sqrt(k))), which
  // sets the required head room above k.
  const double span = std::sqrt(static_cast<double>(k)) + 20.0 / std::abs(t);
  const int buffer =
      std::max(60, static_cast<int>(span * span) - k + 10);
  const int start = k + buffer;
  double above = 0.0;  // x_i, entering iteration i
  double cur = 1.0;    // x_{i-1}
  double at_k = 0.0;
  for (int i = start + 1; i >= 2; --i) {
    const double below = (above - t * cur) / static_cast<double>(i - 1);
    above = cur;
    cur = below;
    if (i - 2 == k) at_k = cur;
    if (cur > 1e250) {
      above *= 1e-250;
      cur *= 1e-250;
      at_k *= 1e-250;
    } else if (cur < 1e-250) {
      above *= 1e250;
      cur *= 1e250;
      at_k *= 1e250;
    }
  }
  return at_k * (norm_cdf(t) / cur);
}

/// log of the Watson expansion of M_k(-a) for large a > 0; truncated at the
/// smallest term of the (asymptotic) series.
inline double mfun_log_left_tail(int k, double a) {
  double series = 1.0;
  double term = 1.0;
  for (int m = 1; m <= 12; ++m) {
    const double next =
        term * (k + 2 * m - 1) * (k + 2 * m) / (2.0 * m * a * a);
    if (next >= term) break;
    term = next;
    series += ((m % 2) ? -term : term);
    if (term < 1e-15 * series) break;
  }
  return std::lgamma(k + 1.0) - 0.5 * kLogTwoPi - 0.5 * a * a -
         (k + 1) * std::log(a) + std::log(series);
}

}  // namespace detail

/// M_k(t).  Positive and finite over the double range of the integral
/// (roughly t > -37; beyond that the value underflows).
inline double mfun(int k, double t) {
  if (k < 0) throw invalid_parameter_error("mfun order must be >= 0");
  if (!std::isfinite(t)) throw invalid_parameter_error("mfun argument must be finite");
  if (t >= -3.5) return detail::mfun_forward(k, t);
  if (t >= -37.0) return detail::mfun_miller(k, t);
  return std::exp(detail::mfun_log_left_tail(k, -t));
}

/// log M_k(t), finite for all finite t (left tail via the Watson expansion).
inline double log_mfun(int k, double t) {
  if (k < 0) throw invalid_parameter_error("mfun order must be >= 0");
  if (!std::isfinite(t)) throw invalid_parameter_error("mfun argument must be finite");
  if (t > 1e8) return k * std::log(t);  // M_k = t^k (1 + O(k^2/t^2))
  if (t < -33.0) return detail::mfun_log_left_tail(k, -t);
  return std::log(t >= -3.5 ? detail::mfun_forward(k, t)
                            : detail::mfun_miller(k, t));
}

namespace detail {

/// log f for a row known to be unit norm; moments trusted.  Returns -inf
/// instead of throwing when the quadratic form degenerates, which the
/// optimizer treats as a rejected step.
inline double log_density_unit(const Vector& y, const EsagMoments& m) {
  const Index d = m.dim();
  double q = 0.0;
  for (Index j = 0; j < d; ++j) {
    const double proj = m.eigvecs.col(j).dot(y);
    q += proj * proj / m.lambda(j);
  }
  if (!(q > 0.0) || !std::isfinite(q))
    return -std::numeric_limits<double>::infinity();
  const double s = m.mu.dot(y);
  return -0.5 * (d - 1) * kLogTwoPi - 0.5 * d * std::log(q) +
         0.5 * (s * s / q - m.mu.squaredNorm()) +
         log_mfun(static_cast<int>(d) - 1, s / std::sqrt(q));
}

/// Sample log-likelihood for pre-normalized rows; -inf on degenerate moments.
inline double sample_log_likelihood(const Matrix& y, const EsagMoments& m) {
  const Index d = m.dim();
  for (Index j = 0; j < d; ++j)
    if (!(m.lambda(j) > 0.0) || !std::isfinite(m.lambda(j)))
      return -std::numeric_limits<double>::infinity();
  const Matrix proj = y * m.eigvecs;
  const Vector dots = y * m.mu;
  const double mu_sq = m.mu.squaredNorm();
  const double c0 = -0.5 * (d - 1) * kLogTwoPi;
  double total = 0.0;
  for (Index i = 0; i < y.rows(); ++i) {
    double q = 0.0;
    for (Index j = 0; j < d; ++j) q += proj(i, j) * proj(i, j) / m.lambda(j);
    if (!(q > 0.0) || !std::isfinite(q))
      return -std::numeric_limits<double>::infinity();
    const double s = dots(i);
    total += c0 - 0.5 * d * std::log(q) + 0.5 * (s * s / q - mu_sq) +
             log_mfun(static_cast<int>(d) - 1, s / std::sqrt(q));
    if (!std::isfinite(total)) return -std::numeric_limits<double>::infinity();
  }
  return total;
}

}  // namespace detail

/// log f(y | moments).  y must be unit norm within 1e-8 unless renormalize
/// is set, in which case it is scaled to unit length first.
inline double log_density(const Vector& y, const EsagMoments& m,
                          bool renormalize = false) {
  if (y.size() != m.dim())
    throw invalid_parameter_error("dimension mismatch between y and moments");
  if (!y.allFinite()) throw data_error("y must be finite");
  for (Index j = 0; j < m.lambda.size(); ++j)
    if (!(m.lambda(j) > 0.0))
      throw invalid_parameter_error("moments are not positive definite");
  const double n = y.norm();
  if (renormalize) {
    if (n == 0.0) throw data_error("cannot renormalize a zero vector");
    return detail::log_density_unit((y / n).eval(), m);
  }
  if (std::abs(n - 1.0) > 1e-8)
    throw data_error("y is not unit norm (|norm - 1| > 1e-8)");
  return detail::log_density_unit(y, m);
}

/// Sum of log densities over the rows of data at the given Omega.
inline double log_likelihood(const Matrix& data, const OmegaParams& omega) {
  if (data.rows() == 0) throw data_error("empty sample");
  if (data.cols() != omega.dim())
    throw invalid_parameter_error("data and Omega dimensions differ");
  const EsagMoments m = omega_to_moments(omega);
  double total = 0.0;
  for (Index i = 0; i < data.rows(); ++i)
    total += log_density(data.row(i).transpose(), m);
  return total;
}

}  // namespace esag
