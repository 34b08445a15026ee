#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "esag/core.hpp"

// Unconstrained parameterization of the elliptically symmetric angular
// Gaussian (ESAG) distribution on the unit sphere in R^d, d >= 3.
//
// The distribution is indexed by Omega = (mu, gamma) in R^p with
// p = (d-1)(d+2)/2.  mu is the Gaussian mean; gamma holds d-2 groups
// gamma_j in R^{j+1} that are mapped through spherical coordinates to
// radial parameters r_j >= 0 (eigenvalue gaps) and rotation angles
// (theta_j, phi_{j,k}) orienting the eigenvectors of the covariance V.
// V then satisfies V mu = mu and det(V) = 1 by construction.

namespace esag {

inline Index gamma_length_for_dim(Index d) {
  if (d < 3) throw invalid_parameter_error("ESAG requires dimension d >= 3");
  return (d - 2) * (d + 1) / 2;
}

inline Index param_count_for_dim(Index d) {
  if (d < 3) throw invalid_parameter_error("ESAG requires dimension d >= 3");
  return (d - 1) * (d + 2) / 2;
}

/// Inverse of gamma_length_for_dim; throws if no valid d >= 3 matches.
inline Index dim_for_gamma_length(Index len) {
  // (d-2)(d+1)/2 = len  =>  d = (1 + sqrt(9 + 8 len)) / 2
  const double root = std::sqrt(9.0 + 8.0 * static_cast<double>(len));
  const Index d = static_cast<Index>(std::llround((1.0 + root) / 2.0));
  if (d < 3 || gamma_length_for_dim(d) != len)
    throw invalid_parameter_error("gamma length " + std::to_string(len) +
                                  " does not correspond to any dimension d >= 3");
  return d;
}

/// The point Omega = (mu, gamma) in the unconstrained parameter space R^p.
struct OmegaParams {
  Vector mu;
  Vector gamma;

  OmegaParams(Vector mu_in, Vector gamma_in)
      : mu(std::move(mu_in)), gamma(std::move(gamma_in)) {
    const Index d = mu.size();
    if (d < 3) throw invalid_parameter_error("mu must have dimension d >= 3");
    if (!mu.allFinite() || !gamma.allFinite())
      throw invalid_parameter_error("Omega must be finite");
    if (mu.norm() == 0.0)
      throw invalid_parameter_error("mu must be a nonzero vector");
    if (gamma.size() != gamma_length_for_dim(d))
      throw invalid_parameter_error("gamma has length " +
                                    std::to_string(gamma.size()) +
                                    ", expected " +
                                    std::to_string(gamma_length_for_dim(d)));
  }

  Index dim() const { return mu.size(); }

  /// Flat coordinates (mu_1..mu_d, gamma_1..) used by the optimizer.
  Vector flat() const {
    Vector out(mu.size() + gamma.size());
    out << mu, gamma;
    return out;
  }

  static OmegaParams from_flat(Index d, const Vector& x) {
    if (x.size() != param_count_for_dim(d))
      throw invalid_parameter_error("flat parameter vector has wrong length");
    return OmegaParams(x.head(d), x.tail(x.size() - d));
  }
};

/// Radial and orientation parameters obtained from gamma by the grouped
/// spherical transforms.  phi[j-2] holds the group-j latitudes
/// (phi_{j,1}, ..., phi_{j,j-1}) for j = 2..d-2.
struct SphericalGroups {
  Vector r;
  Vector theta;
  std::vector<Vector> phi;

  Index dim() const { return r.size() + 2; }

  /// Latitude angles in their global order phi_1, phi_2, ...
  Vector flat_phi() const {
    Index total = 0;
    for (const auto& g : phi) total += g.size();
    Vector out(total);
    Index at = 0;
    for (const auto& g : phi) {
      out.segment(at, g.size()) = g;
      at += g.size();
    }
    return out;
  }
};

/// Constrained-scale description of an ESAG: mean vector, covariance V with
/// V mu = mu and det(V) = 1, its eigenvalues (last entry fixed at 1) and the
/// matching orthonormal eigenvectors (last column mu/||mu||).
struct EsagMoments {
  Vector mu;
  Matrix V;
  Vector lambda;
  Matrix eigvecs;

  Index dim() const { return mu.size(); }
};

/// Orthonormal basis (v~_1 .. v~_d) of R^d adapted to mu; the last column is
/// mu/||mu||.  A structurally zero column (possible when leading components
/// of mu vanish) is replaced by the corresponding standard basis vector.
inline Matrix orthonormal_basis(const Vector& mu) {
  const Index d = mu.size();
  if (d < 3) throw invalid_parameter_error("orthonormal_basis requires d >= 3");
  if (!mu.allFinite() || mu.norm() == 0.0)
    throw invalid_parameter_error("mu must be nonzero and finite");

  const double zero_tol = 1e-13 * mu.squaredNorm();
  Matrix basis = Matrix::Zero(d, d);

  basis(0, 0) = -mu(1);
  basis(1, 0) = mu(0);

  double sumsq = mu(0) * mu(0) + mu(1) * mu(1);
  for (Index j = 2; j < d; ++j) {
    // column j-1 (1-based column j): (mu_1 mu_{j+1}, ..., mu_j mu_{j+1},
    // -sum_{k<=j} mu_k^2, 0, ...)
    basis.col(j - 1).head(j) = mu.head(j) * mu(j);
    basis(j, j - 1) = -sumsq;
    sumsq += mu(j) * mu(j);
  }
  basis.col(d - 1) = mu;

  for (Index c = 0; c + 1 < d; ++c) {
    const double norm = basis.col(c).norm();
    if (norm == 0.0 || norm <= zero_tol)
      basis.col(c) = Vector::Unit(d, c);
    else
      basis.col(c) /= norm;
  }
  basis.col(d - 1) /= basis.col(d - 1).norm();
  return basis;
}

/// Maps gamma (grouped, total length (d-2)(d+1)/2) to radial and orientation
/// parameters.  Degenerate groups map to zero angles; atan2(0,0) is taken as 0.
inline SphericalGroups gamma_to_groups(const Vector& gamma) {
  if (!gamma.allFinite())
    throw invalid_parameter_error("gamma must be finite");
  const Index d = dim_for_gamma_length(gamma.size());

  SphericalGroups out;
  out.r.resize(d - 2);
  out.theta.resize(d - 2);
  out.phi.clear();

  // group 1: gamma_1 in R^2
  out.r(0) = gamma.head(2).norm();
  if (gamma(0) == 0.0 && gamma(1) == 0.0)
    out.theta(0) = 0.0;
  else
    out.theta(0) = std::atan2(gamma(1), gamma(0));

  Index at = 2;
  for (Index j = 2; j <= d - 2; ++j) {
    const auto group = gamma.segment(at, j + 1);
    at += j + 1;
    out.r(j - 1) = group.norm();

    // longitude from the last two components
    const double x = group(j - 1);
    const double y = group(j);
    if (x == 0.0 && y == 0.0) {
      out.theta(j - 1) = 0.0;
    } else {
      const double ratio = std::clamp(x / std::hypot(x, y), -1.0, 1.0);
      const double angle = std::acos(ratio);
      out.theta(j - 1) = (y >= 0.0) ? angle : -angle;
    }

    // latitudes from suffix norms
    Vector group_phi(j - 1);
    double tail = x * x + y * y;
    for (Index k = j - 1; k >= 1; --k) {
      const double gk = group(k - 1);
      tail += gk * gk;
      group_phi(k - 1) =
          (tail == 0.0)
              ? 0.0
              : std::acos(std::clamp(gk / std::sqrt(tail), -1.0, 1.0));
    }
    out.phi.push_back(std::move(group_phi));
  }
  return out;
}

/// Eigenvalues (lambda_1 <= ... <= lambda_{d-1}, lambda_d = 1) from the radial
/// parameters; the first d-1 eigenvalues multiply to 1.
inline Vector radial_to_eigenvalues(const Vector& r, Index d) {
  if (d < 3) throw invalid_parameter_error("radial_to_eigenvalues requires d >= 3");
  if (r.size() != d - 2)
    throw invalid_parameter_error("radial vector must have length d - 2");
  for (Index j = 0; j < r.size(); ++j)
    if (!(r(j) >= 0.0) || !std::isfinite(r(j)))
      throw invalid_parameter_error("radial parameters must be finite and >= 0");

  double log_lambda1 = 0.0;
  for (Index j = 1; j <= d - 2; ++j)
    log_lambda1 += static_cast<double>(d - j - 1) * std::log1p(r(j - 1));
  log_lambda1 /= -static_cast<double>(d - 1);

  Vector lambda(d);
  lambda(0) = std::exp(log_lambda1);
  for (Index j = 1; j <= d - 2; ++j) lambda(j) = lambda(j - 1) * (1.0 + r(j - 1));
  lambda(d - 1) = 1.0;
  return lambda;
}

/// Plane rotation: identity except for the 2x2 block in 1-based coordinates
/// (j, k), with entries (j,j)=cos, (j,k)=-sin, (k,j)=sin, (k,k)=cos.
inline Matrix plane_rotation(Index j, Index k, double angle, Index dim) {
  if (j < 1 || k <= j || k > dim)
    throw invalid_parameter_error("plane_rotation requires 1 <= j < k <= dim");
  Matrix rot = Matrix::Identity(dim, dim);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  rot(j - 1, j - 1) = c;
  rot(j - 1, k - 1) = -s;
  rot(k - 1, j - 1) = s;
  rot(k - 1, k - 1) = c;
  return rot;
}

/// The (d-1) x (d-1) rotation assembled as the ordered product of plane
/// rotations over the longitude and latitude angles.  For d = 3 the outer
/// product is empty and the result is the single 2x2 rotation by theta_1.
inline Matrix assemble_rotation(const SphericalGroups& groups) {
  const Index d = groups.dim();
  const Vector phi = groups.flat_phi();
  Matrix rot = Matrix::Identity(d - 1, d - 1);
  for (Index m = 1; m <= d - 3; ++m) {
    rot *= plane_rotation(1, 2, groups.theta(d - m - 2), d - 1);
    for (Index j = 1; j <= d - m - 2; ++j) {
      const Index idx = (d - m - 1) * (d - m - 2) / 2 + 1 - j;  // 1-based
      rot *= plane_rotation(j + 1, j + 2, phi(idx - 1), d - 1);
    }
  }
  rot *= plane_rotation(1, 2, groups.theta(0), d - 1);
  return rot;
}

/// Full pipeline Omega -> (mu, V, eigenvalues, eigenvectors).
///
/// Before applying the rotation, the sign of each of the first d-1 basis
/// columns is fixed so its first nonzero entry is positive; V is unaffected
/// but the reported eigenvectors become a deterministic choice.
inline EsagMoments omega_to_moments(const OmegaParams& omega) {
  const Index d = omega.dim();
  const SphericalGroups groups = gamma_to_groups(omega.gamma);
  const Vector lambda = radial_to_eigenvalues(groups.r, d);

  Matrix basis = orthonormal_basis(omega.mu);
  for (Index c = 0; c + 1 < d; ++c) {
    for (Index i = 0; i < d; ++i) {
      if (basis(i, c) != 0.0) {
        if (basis(i, c) < 0.0) basis.col(c) = -basis.col(c);
        break;
      }
    }
  }

  const Matrix rot = assemble_rotation(groups);
  Matrix eigvecs = basis;
  eigvecs.leftCols(d - 1) = basis.leftCols(d - 1) * rot;

  Matrix v = eigvecs * lambda.asDiagonal() * eigvecs.transpose();
  v = ((v + v.transpose()) / 2.0).eval();

  return EsagMoments{omega.mu, std::move(v), lambda, std::move(eigvecs)};
}

}  // namespace esag
