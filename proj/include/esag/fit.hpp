#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "esag/core.hpp"
#include "esag/density.hpp"
#include "esag/param.hpp"
#include "esag/sampling.hpp"

namespace esag {

struct FitOptions {
  std::size_t max_iterations = 500;
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  std::size_t restarts = 3;
  double fd_step_scale = 1e-6;
  std::optional<OmegaParams> start;

  void validate() const {
    if (!(grad_tol > 0.0) || !(step_tol > 0.0) || !(fd_step_scale > 0.0))
      throw invalid_parameter_error("fit tolerances must be positive");
  }
};

struct FitResult {
  OmegaParams omega;
  EsagMoments moments;
  double loglik = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<std::pair<std::size_t, double>> trace;  // (iteration, loglik)
};

struct BootstrapSummary {
  std::size_t replicates = 0;
  std::size_t dropped = 0;
  Vector mu_se;
  Vector lambda_se;  // for lambda_1 .. lambda_{d-1}; lambda_d is fixed at 1
  double v_frobenius_se = 0.0;
};

namespace detail {

using Objective = std::function<double(const Vector&)>;

/// Central finite differences with per-coordinate step h = scale * (1 + |x|).
inline Vector fd_gradient(const Objective& f, const Vector& x, double scale) {
  Vector grad(x.size());
  Vector probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double h = scale * (1.0 + std::abs(x(i)));
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

struct BfgsOutcome {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<std::pair<std::size_t, double>> trace;
};

/// BFGS (inverse-Hessian update) with backtracking line search.  A trial
/// point with non-finite objective is handled by halving the step.
inline BfgsOutcome minimize_bfgs(const Objective& f, Vector x,
                                 const FitOptions& opt) {
  constexpr double armijo = 1e-4;
  const Index p = x.size();

  BfgsOutcome out;
  double fx = f(x);
  if (!std::isfinite(fx)) {
    out.x = std::move(x);
    return out;
  }
  out.trace.emplace_back(0, fx);

  Matrix h_inv = Matrix::Identity(p, p);
  Vector grad = fd_gradient(f, x, opt.fd_step_scale);
  bool scaled = false;
  std::size_t flat_count = 0;

  for (std::size_t iter = 1; iter <= opt.max_iterations; ++iter) {
    out.iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() <= opt.grad_tol) {
      out.converged = true;
      break;
    }

    Vector direction = -(h_inv * grad);
    double slope = direction.dot(grad);
    if (!direction.allFinite() || slope >= 0.0) {
      h_inv = Matrix::Identity(p, p);
      direction = -grad;
      slope = -grad.squaredNorm();
      scaled = true;
    }

    double alpha = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Vector x_new;
    bool accepted = false;
    for (int halvings = 0; halvings < 45; ++halvings) {
      x_new = x + alpha * direction;
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= fx + armijo * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // no improving point along the descent direction: we are at the
      // resolution limit of the finite-difference objective
      out.converged = grad.lpNorm<Eigen::Infinity>() <= 1e-4 * (1.0 + std::abs(fx));
      break;
    }

    const Vector step = x_new - x;
    const double decrease = fx - f_new;
    x = std::move(x_new);
    fx = f_new;
    out.trace.emplace_back(iter, fx);

    Vector grad_new = fd_gradient(f, x, opt.fd_step_scale);
    const Vector grad_delta = grad_new - grad;
    grad = std::move(grad_new);

    if (decrease <= opt.step_tol * (1.0 + std::abs(fx))) {
      if (++flat_count >= 2) {
        out.converged = true;
        break;
      }
    } else {
      flat_count = 0;
    }

    const double curvature = step.dot(grad_delta);
    if (curvature > 1e-12 * step.norm() * grad_delta.norm()) {
      if (!scaled) {
        h_inv *= curvature / grad_delta.squaredNorm();
        scaled = true;
      }
      const Vector hy = h_inv * grad_delta;
      const double rho = 1.0 / curvature;
      // H <- (I - rho s y') H (I - rho y s') + rho s s'
      h_inv -= rho * (hy * step.transpose() + step * hy.transpose());
      h_inv += rho * rho * (grad_delta.dot(hy) + curvature) *
               (step * step.transpose());
    }
  }

  out.x = std::move(x);
  out.value = fx;
  return out;
}

/// Mean-direction starting point: mu_0 = ybar * d / (||ybar|| + eps), gamma_0 = 0.
inline OmegaParams default_start(const Matrix& data) {
  const Index d = data.cols();
  Vector mean = data.colwise().mean().transpose();
  if (mean.norm() < 1e-12) mean = Vector::Unit(d, 0);
  const Vector mu0 = mean * (static_cast<double>(d) / (mean.norm() + 1e-8));
  return OmegaParams(mu0, Vector::Zero(gamma_length_for_dim(d)));
}

/// Rows scaled to unit length; rejects zero or non-finite rows.  Rows already
/// unit to within a few ulp are left untouched, which makes the operation
/// idempotent: fitting a sample and fitting its normalized copy see
/// bit-identical inputs.
inline Matrix normalized_rows(const Matrix& data) {
  if (!data.allFinite()) throw data_error("data contains non-finite entries");
  Matrix out = data;
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm == 0.0)
      throw data_error("data row " + std::to_string(i) + " is the zero vector");
    if (std::abs(norm - 1.0) > 16.0 * std::numeric_limits<double>::epsilon())
      out.row(i) /= norm;
  }
  return out;
}

inline BootstrapSummary summarize_bootstrap(const std::vector<Vector>& mus,
                                            const std::vector<Vector>& lambdas,
                                            const std::vector<Matrix>& vs,
                                            std::size_t replicates,
                                            std::size_t dropped) {
  const std::size_t kept = mus.size();
  if (kept < 2)
    throw convergence_error("bootstrap needs at least two successful replicates");
  const Index d = mus.front().size();

  Vector mu_mean = Vector::Zero(d);
  Vector lam_mean = Vector::Zero(d - 1);
  Matrix v_mean = Matrix::Zero(d, d);
  for (std::size_t b = 0; b < kept; ++b) {
    mu_mean += mus[b];
    lam_mean += lambdas[b].head(d - 1);
    v_mean += vs[b];
  }
  mu_mean /= static_cast<double>(kept);
  lam_mean /= static_cast<double>(kept);
  v_mean /= static_cast<double>(kept);

  Vector mu_var = Vector::Zero(d);
  Vector lam_var = Vector::Zero(d - 1);
  double v_var = 0.0;
  for (std::size_t b = 0; b < kept; ++b) {
    mu_var += (mus[b] - mu_mean).cwiseAbs2();
    lam_var += (lambdas[b].head(d - 1) - lam_mean).cwiseAbs2();
    v_var += (vs[b] - v_mean).squaredNorm();
  }
  const double denom = static_cast<double>(kept - 1);
  BootstrapSummary summary;
  summary.replicates = replicates;
  summary.dropped = dropped;
  summary.mu_se = (mu_var / denom).cwiseSqrt();
  summary.lambda_se = (lam_var / denom).cwiseSqrt();
  summary.v_frobenius_se = std::sqrt(v_var / denom);
  return summary;
}

}  // namespace detail

/// Maximum likelihood estimate of Omega over R^p.
///
/// Rows of data are normalized to unit length internally.  The optimizer is
/// BFGS on the negative log-likelihood with central finite-difference
/// gradients.  If the first run fails to converge, up to options.restarts
/// further runs are started from the base point with 10% relative noise on
/// mu, and the highest-likelihood solution is returned.
inline FitResult fit_mle(const Matrix& data, const FitOptions& options = {}) {
  options.validate();
  if (data.rows() == 0) throw data_error("empty sample");
  const Index d = data.cols();
  if (d < 3) throw data_error("data must have at least 3 columns");
  const Index p = param_count_for_dim(d);
  if (data.rows() < p)
    throw data_error("insufficient data: need at least " + std::to_string(p) +
                     " observations for d = " + std::to_string(d));

  const Matrix rows = detail::normalized_rows(data);
  const detail::Objective objective = [&rows, d](const Vector& x) {
    if (!x.allFinite() || x.head(d).norm() == 0.0)
      return std::numeric_limits<double>::infinity();
    try {
      return -detail::sample_log_likelihood(
          rows, omega_to_moments(OmegaParams::from_flat(d, x)));
    } catch (const invalid_parameter_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const OmegaParams base =
      options.start ? *options.start : detail::default_start(rows);
  if (base.dim() != d)
    throw invalid_parameter_error("starting value has wrong dimension");

  detail::BfgsOutcome best = detail::minimize_bfgs(objective, base.flat(), options);
  if (!best.converged) {
    for (std::size_t attempt = 1; attempt <= options.restarts; ++attempt) {
      SeededRng noise(0xE5A60001u, attempt);
      Vector start = base.flat();
      for (Index i = 0; i < d; ++i) start(i) *= 1.0 + 0.1 * noise.normal();
      if (start.head(d).norm() == 0.0) start(0) = 1.0;
      detail::BfgsOutcome retry = detail::minimize_bfgs(objective, start, options);
      const bool better = (retry.converged && !best.converged) ||
                          (retry.converged == best.converged &&
                           retry.value < best.value);
      if (better) best = std::move(retry);
      if (best.converged) break;
    }
  }
  if (!std::isfinite(best.value))
    throw convergence_error("log-likelihood is non-finite at every starting value");

  FitResult result{OmegaParams::from_flat(d, best.x),
                   omega_to_moments(OmegaParams::from_flat(d, best.x)),
                   -best.value,
                   best.converged,
                   best.iterations,
                   {}};
  result.trace.reserve(best.trace.size());
  for (const auto& [iter, value] : best.trace)
    result.trace.emplace_back(iter, -value);
  return result;
}

/// Nonparametric bootstrap standard errors: resample rows with replacement,
/// refit, and report the spread of mu-hat coordinates and V-hat eigenvalues.
/// No standard errors are produced for gamma-hat, which can land on either of
/// two equivalent values.  Replicate b draws from stream b of rng; replicates
/// failing to converge are dropped, and more than 20% drops is an error.
inline BootstrapSummary bootstrap_se(const Matrix& data, std::size_t B,
                                     const SeededRng& rng,
                                     const FitOptions& options = {},
                                     unsigned threads = 1) {
  if (B < 2) throw invalid_parameter_error("bootstrap needs B >= 2");
  const Matrix rows = detail::normalized_rows(data);
  const std::size_t n = static_cast<std::size_t>(rows.rows());

  std::vector<char> ok(B, 0);
  std::vector<Vector> mus(B);
  std::vector<Vector> lambdas(B);
  std::vector<Matrix> vs(B);

  detail::parallel_for(B, threads, [&](std::size_t b) {
    SeededRng local = rng.substream(b);
    Matrix resampled(rows.rows(), rows.cols());
    for (std::size_t i = 0; i < n; ++i)
      resampled.row(static_cast<Index>(i)) =
          rows.row(static_cast<Index>(local.uniform_index(n)));
    try {
      FitResult fit = fit_mle(resampled, options);
      if (!fit.converged) return;
      mus[b] = fit.moments.mu;
      lambdas[b] = fit.moments.lambda;
      vs[b] = fit.moments.V;
      ok[b] = 1;
    } catch (const convergence_error&) {
    }
  });

  std::vector<Vector> kept_mus, kept_lambdas;
  std::vector<Matrix> kept_vs;
  for (std::size_t b = 0; b < B; ++b) {
    if (!ok[b]) continue;
    kept_mus.push_back(std::move(mus[b]));
    kept_lambdas.push_back(std::move(lambdas[b]));
    kept_vs.push_back(std::move(vs[b]));
  }
  const std::size_t dropped = B - kept_mus.size();
  if (5 * dropped > B)
    throw convergence_error("more than 20% of bootstrap replicates failed to fit");
  return detail::summarize_bootstrap(kept_mus, kept_lambdas, kept_vs, B, dropped);
}

}  // namespace esag
