#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "esag/core.hpp"
#include "esag/diagnostics.hpp"
#include "esag/fit.hpp"
#include "esag/simstudy.hpp"

namespace esag {

using Json = nlohmann::json;

/// Shortest round-trip decimal form of a double; locale independent.
inline std::string format_double(double value) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

inline std::vector<double> to_std_vector(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline std::vector<double> row_major(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

struct DataTable {
  Matrix values;
  std::vector<std::string> header;  // empty when the file had none
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream stream(line);
  while (std::getline(stream, field, ',')) {
    const auto first = field.find_first_not_of(" \t");
    const auto last = field.find_last_not_of(" \t");
    fields.push_back(first == std::string::npos
                         ? std::string()
                         : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, out);
  return result.ec == std::errc{} && result.ptr == end;
}

}  // namespace detail

/// Reads a numeric CSV ('.' decimal separator, optional single header line).
inline DataTable read_csv(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw data_error("cannot open file: " + path);

  DataTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!detail::parse_double(fields[j], row[j])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        table.header = fields;
        first = false;
        continue;
      }
      throw data_error(path + ":" + std::to_string(line_no) +
                       ": non-numeric field");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw data_error(path + ":" + std::to_string(line_no) +
                       ": inconsistent column count");
    for (double v : row)
      if (!std::isfinite(v))
        throw data_error(path + ":" + std::to_string(line_no) +
                         ": non-finite value");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw data_error(path + ": no data rows");

  table.values.resize(static_cast<Index>(rows.size()),
                      static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return table;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw data_error("cannot write file: " + path);
  file << body;
}

inline void write_csv(const std::string& path, const Matrix& values,
                      const std::vector<std::string>& header = {}) {
  std::string body;
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j) body += ',';
      body += header[j];
    }
    body += '\n';
  }
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) body += ',';
      body += format_double(values(i, j));
    }
    body += '\n';
  }
  write_text_file(path, body);
}

/// Component-wise square root, mapping compositional rows (nonnegative,
/// summing to 1) onto the unit sphere.
inline Matrix sqrt_compose(const Matrix& rows) {
  for (Index i = 0; i < rows.rows(); ++i)
    for (Index j = 0; j < rows.cols(); ++j)
      if (rows(i, j) < 0.0)
        throw data_error("negative entry at row " + std::to_string(i) +
                         ": not compositional data");
  return rows.cwiseSqrt();
}

/// Verifies rows are unit length within tol (or rescales them when normalize
/// is set) and returns normalized rows.  Rows within a few ulp of unit length
/// are passed through untouched so the operation is idempotent.
inline Matrix ensure_unit_rows(const Matrix& rows, bool normalize,
                               double tol = 1e-6) {
  Matrix out = rows;
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm == 0.0)
      throw data_error("row " + std::to_string(i) + " is the zero vector");
    if (!normalize && std::abs(norm - 1.0) > tol)
      throw data_error("row " + std::to_string(i) +
                       " is not unit norm (use --normalize to rescale)");
    if (std::abs(norm - 1.0) > 16.0 * std::numeric_limits<double>::epsilon())
      out.row(i) /= norm;
  }
  return out;
}

inline Json to_json(const BootstrapSummary& summary) {
  return Json{{"B", summary.replicates},
              {"dropped", summary.dropped},
              {"mu_se", to_std_vector(summary.mu_se)},
              {"lambda_se", to_std_vector(summary.lambda_se)},
              {"v_frobenius_se", summary.v_frobenius_se}};
}

inline Json to_json(const FitResult& fit) {
  return Json{{"d", fit.omega.dim()},
              {"mu", to_std_vector(fit.omega.mu)},
              {"gamma", to_std_vector(fit.omega.gamma)},
              {"V", row_major(fit.moments.V)},
              {"lambda", to_std_vector(fit.moments.lambda)},
              {"loglik", fit.loglik},
              {"converged", fit.converged},
              {"iterations", fit.iterations}};
}

inline Json to_json(const GofResult& gof) {
  return Json{{"d", gof.omega_hat.dim()},
              {"ks_p", gof.ks_p},
              {"p_value", gof.p_value},
              {"B", gof.boot_ks_p.size() + gof.dropped},
              {"dropped", gof.dropped},
              {"boot_ks_p", gof.boot_ks_p},
              {"mu", to_std_vector(gof.omega_hat.mu)},
              {"lambda", to_std_vector(gof.moments_hat.lambda)},
              {"loglik", gof.loglik},
              {"converged", gof.converged}};
}

inline std::string study_report_csv(const StudyReport& report) {
  std::string body = "scenario,alpha,n,level,rate,reps,drops\n";
  for (const StudyRow& row : report.rows) {
    body += to_string(row.kind);
    body += ',' + format_double(row.alpha);
    body += ',' + std::to_string(row.n);
    body += ',' + format_double(row.level);
    body += ',' + format_double(row.rate);
    body += ',' + std::to_string(row.reps);
    body += ',' + std::to_string(row.drops);
    body += '\n';
  }
  return body;
}

inline Json study_report_json(const StudyReport& report) {
  Json rows = Json::array();
  for (const StudyRow& row : report.rows)
    rows.push_back(Json{{"scenario", to_string(row.kind)},
                        {"alpha", row.alpha},
                        {"n", row.n},
                        {"level", row.level},
                        {"rate", row.rate},
                        {"reps", row.reps},
                        {"drops", row.drops}});
  return Json{{"rows", rows},
              {"replicates", report.replicates},
              {"B", report.bootstrap_b}};
}

/// Parameter file for simulation: ESAG mode carries (mu, gamma); AG mode
/// carries (mu, V) and samples a plain angular Gaussian.
struct SimulateParams {
  bool ag_mode = false;
  Vector mu;
  Vector gamma;  // ESAG mode
  Matrix V;      // AG mode
};

inline SimulateParams parse_simulate_params(const Json& spec) {
  SimulateParams params;
  if (!spec.contains("mu")) throw data_error("parameter file: missing mu");
  const auto mu = spec.at("mu").get<std::vector<double>>();
  params.mu = Eigen::Map<const Vector>(mu.data(), static_cast<Index>(mu.size()));
  if (spec.contains("d") &&
      spec.at("d").get<Index>() != params.mu.size())
    throw data_error("parameter file: d does not match the length of mu");
  const std::string mode = spec.value("mode", std::string("esag"));
  if (mode == "esag") {
    if (!spec.contains("gamma"))
      throw data_error("parameter file: esag mode requires gamma");
    const auto gamma = spec.at("gamma").get<std::vector<double>>();
    params.gamma =
        Eigen::Map<const Vector>(gamma.data(), static_cast<Index>(gamma.size()));
  } else if (mode == "ag") {
    params.ag_mode = true;
    if (!spec.contains("V"))
      throw data_error("parameter file: ag mode requires V (row-major)");
    const auto flat = spec.at("V").get<std::vector<double>>();
    const Index d = params.mu.size();
    if (flat.size() != static_cast<std::size_t>(d * d))
      throw data_error("parameter file: V must have d*d entries");
    params.V.resize(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        params.V(i, j) = flat[static_cast<std::size_t>(i * d + j)];
  } else {
    throw data_error("parameter file: mode must be \"esag\" or \"ag\"");
  }
  return params;
}

struct StudyConfigEntry {
  ScenarioKind kind = ScenarioKind::M1;
  std::vector<double> alphas;  // empty for M1
  std::vector<std::size_t> ns;
};

struct StudyConfig {
  std::uint64_t seed = 0;
  std::size_t reps = 100;
  std::size_t bootstrap_b = 100;
  std::vector<double> levels;
  unsigned threads = 1;
  std::vector<StudyConfigEntry> entries;
};

inline StudyConfig parse_study_config(const Json& spec) {
  StudyConfig config;
  if (!spec.contains("seed")) throw data_error("study config: missing seed");
  config.seed = spec.at("seed").get<std::uint64_t>();
  config.reps = spec.value("reps", std::size_t{100});
  config.bootstrap_b = spec.value("B", std::size_t{100});
  config.levels = spec.value("levels", std::vector<double>{0.01, 0.05, 0.1});
  config.threads = spec.value("threads", 1u);
  if (!spec.contains("scenarios") || !spec.at("scenarios").is_array() ||
      spec.at("scenarios").empty())
    throw data_error("study config: scenarios must be a nonempty array");
  for (const auto& entry : spec.at("scenarios")) {
    StudyConfigEntry parsed;
    parsed.kind = scenario_kind_from_string(entry.at("kind").get<std::string>());
    parsed.ns = entry.value("n", std::vector<std::size_t>{250});
    if (entry.contains("alpha"))
      parsed.alphas = entry.at("alpha").get<std::vector<double>>();
    if (parsed.kind != ScenarioKind::M1 && parsed.alphas.empty())
      throw data_error("study config: " + to_string(parsed.kind) +
                       " requires an alpha list");
    config.entries.push_back(std::move(parsed));
  }
  return config;
}

}  // namespace esag
