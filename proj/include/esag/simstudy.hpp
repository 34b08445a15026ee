#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "esag/core.hpp"
#include "esag/diagnostics.hpp"
#include "esag/fit.hpp"
#include "esag/param.hpp"
#include "esag/sampling.hpp"

// Monte Carlo study of the GOF test under four data generating processes:
//   M1  the ESAG itself (size of the test),
//   M2  ESAG contaminated by an angular Cauchy with proportion alpha,
//   M3  angular Gaussian with det(V~) = alpha (determinant constraint broken),
//   M4  angular Gaussian with V~ mu = alpha mu (eigenvalue constraint broken).

namespace esag {

enum class ScenarioKind { M1, M2, M3, M4 };

inline std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::M1: return "M1";
    case ScenarioKind::M2: return "M2";
    case ScenarioKind::M3: return "M3";
    case ScenarioKind::M4: return "M4";
  }
  return "?";
}

inline ScenarioKind scenario_kind_from_string(const std::string& name) {
  if (name == "M1") return ScenarioKind::M1;
  if (name == "M2") return ScenarioKind::M2;
  if (name == "M3") return ScenarioKind::M3;
  if (name == "M4") return ScenarioKind::M4;
  throw invalid_parameter_error("unknown scenario kind: " + name);
}

inline Vector study_base_mu() {
  Vector mu(4);
  mu << 2.0, -2.0, 3.0, -3.0;
  return mu;
}

inline Vector study_base_gamma() {
  Vector gamma(5);
  gamma << 2.0, 3.0, 5.0, 8.0, 2.0;
  return gamma;
}

struct Scenario {
  ScenarioKind kind = ScenarioKind::M1;
  double alpha = 0.0;  // unused for M1
  std::size_t n = 250;
  Vector base_mu = study_base_mu();
  Vector base_gamma = study_base_gamma();

  void validate() const {
    if (n == 0) throw invalid_parameter_error("scenario needs n >= 1");
    OmegaParams check(base_mu, base_gamma);  // validates the base parameters
    (void)check;
    switch (kind) {
      case ScenarioKind::M1:
        break;
      case ScenarioKind::M2:
        if (!(alpha > 0.0 && alpha < 1.0))
          throw invalid_parameter_error("M2 requires alpha in (0, 1)");
        break;
      case ScenarioKind::M3:
      case ScenarioKind::M4:
        if (!(alpha > 0.0) || alpha == 1.0)
          throw invalid_parameter_error("M3/M4 require alpha > 0, alpha != 1");
        break;
    }
  }

  static Scenario m1(std::size_t n) { return Scenario{ScenarioKind::M1, 0.0, n}; }
  static Scenario m2(double alpha, std::size_t n) {
    return Scenario{ScenarioKind::M2, alpha, n};
  }
  static Scenario m3(double alpha, std::size_t n) {
    return Scenario{ScenarioKind::M3, alpha, n};
  }
  static Scenario m4(double alpha, std::size_t n) {
    return Scenario{ScenarioKind::M4, alpha, n};
  }
};

namespace detail {

/// Eigenvalues of the scenario's sampling covariance (M3/M4 rescale the
/// ESAG eigenvalues; the eigenvectors are shared with the base model).
inline Vector scenario_lambda(const Scenario& s, const Vector& base_lambda) {
  const Index d = base_lambda.size();
  Vector lambda = base_lambda;
  switch (s.kind) {
    case ScenarioKind::M1:
    case ScenarioKind::M2:
      break;
    case ScenarioKind::M3:
      lambda.head(d - 1) *= std::pow(s.alpha, 1.0 / (d - 1));
      lambda(d - 1) = 1.0;
      break;
    case ScenarioKind::M4:
      lambda.head(d - 1) *= std::pow(s.alpha, -1.0 / (d - 1));
      lambda(d - 1) = s.alpha;
      break;
  }
  return lambda;
}

}  // namespace detail

/// The covariance matrix the scenario actually samples from.
inline Matrix scenario_covariance(const Scenario& s) {
  s.validate();
  const EsagMoments base = omega_to_moments(OmegaParams(s.base_mu, s.base_gamma));
  const Vector lambda = detail::scenario_lambda(s, base.lambda);
  Matrix v = base.eigvecs * lambda.asDiagonal() * base.eigvecs.transpose();
  return ((v + v.transpose()) / 2.0).eval();
}

inline Matrix make_scenario_sample(const Scenario& s, SeededRng& rng) {
  s.validate();
  const EsagMoments base = omega_to_moments(OmegaParams(s.base_mu, s.base_gamma));
  switch (s.kind) {
    case ScenarioKind::M1:
      return sample_esag(base, s.n, rng);
    case ScenarioKind::M2: {
      const Matrix clean = sample_esag(base, s.n, rng);
      const Matrix heavy = sample_angular_cauchy(s.base_mu, s.n, rng);
      return mix_samples(clean, heavy, s.alpha, rng);
    }
    case ScenarioKind::M3:
    case ScenarioKind::M4: {
      const Vector lambda = detail::scenario_lambda(s, base.lambda);
      return sample_ag(s.base_mu, base.eigvecs, lambda, s.n, rng);
    }
  }
  throw invalid_parameter_error("unreachable scenario kind");
}

struct StudyRow {
  ScenarioKind kind = ScenarioKind::M1;
  double alpha = 0.0;
  std::size_t n = 0;
  double level = 0.0;
  double rate = 0.0;
  std::size_t reps = 0;
  std::size_t drops = 0;
};

struct StudyReport {
  std::vector<StudyRow> rows;
  std::size_t replicates = 0;
  std::size_t bootstrap_b = 0;
  double runtime_seconds = 0.0;
};

/// Runs `reps` Monte Carlo replicates of the GOF test under the scenario and
/// reports, per nominal level, the fraction of replicates with estimated
/// p-value strictly below the level.  Replicates where fitting fails are
/// counted in the denominator and reported in `drops`.  Replicate k uses
/// stream k of rng, so the report is reproducible under any thread count.
inline StudyReport rejection_study(const Scenario& s, std::size_t reps,
                                   std::size_t B,
                                   const std::vector<double>& levels,
                                   const SeededRng& rng,
                                   const FitOptions& options = {},
                                   unsigned threads = 1) {
  s.validate();
  if (reps == 0) throw invalid_parameter_error("rejection_study requires reps >= 1");
  if (B == 0) throw invalid_parameter_error("rejection_study requires B >= 1");
  for (double level : levels)
    if (!(level >= 0.0 && level <= 1.0))
      throw invalid_parameter_error("nominal levels must lie in [0, 1]");

  const auto started = std::chrono::steady_clock::now();
  std::vector<char> ok(reps, 0);
  std::vector<double> p_values(reps, 1.0);
  detail::parallel_for(reps, threads, [&](std::size_t k) {
    SeededRng root = rng.substream(k);
    SeededRng data_rng = root.substream(0);
    try {
      const Matrix data = make_scenario_sample(s, data_rng);
      p_values[k] = gof_test(data, B, root.substream(1), options, 1).p_value;
      ok[k] = 1;
    } catch (const convergence_error&) {
    }
  });

  std::size_t drops = 0;
  for (std::size_t k = 0; k < reps; ++k)
    if (!ok[k]) ++drops;

  StudyReport report;
  report.replicates = reps;
  report.bootstrap_b = B;
  for (double level : levels) {
    std::size_t rejections = 0;
    for (std::size_t k = 0; k < reps; ++k)
      if (ok[k] && p_values[k] < level) ++rejections;
    StudyRow row;
    row.kind = s.kind;
    row.alpha = s.alpha;
    row.n = s.n;
    row.level = level;
    row.rate = static_cast<double>(rejections) / static_cast<double>(reps);
    row.reps = reps;
    row.drops = drops;
    report.rows.push_back(row);
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

}  // namespace esag
