// Command line interface for ESAG fitting, simulation, goodness-of-fit
// testing, and Monte Carlo rejection studies.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 convergence failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "esag/esag.hpp"

namespace {

esag::Vector parse_number_list(const std::string& text) {
  std::vector<double> values;
  std::string item;
  std::stringstream stream(text);
  while (std::getline(stream, item, ',')) {
    double value = 0.0;
    if (!esag::detail::parse_double(item, value))
      throw esag::data_error("cannot parse number: '" + item + "'");
    values.push_back(value);
  }
  return Eigen::Map<const esag::Vector>(values.data(),
                                        static_cast<esag::Index>(values.size()));
}

esag::Matrix load_directional_csv(const std::string& path, bool sqrt_compose,
                                  bool normalize) {
  esag::DataTable table = esag::read_csv(path);
  if (table.values.cols() < 3)
    throw esag::data_error(path + ": directional data needs at least 3 columns");
  esag::Matrix rows =
      sqrt_compose ? esag::sqrt_compose(table.values) : table.values;
  return esag::ensure_unit_rows(rows, normalize);
}

std::vector<double> mean_composition(const esag::Vector& mu) {
  const esag::Vector squared = mu.cwiseAbs2();
  const esag::Vector composition = squared / squared.sum();
  return esag::to_std_vector(composition);
}

int run_fit(const std::string& input, const std::string& output,
            bool sqrt_compose, bool normalize, std::size_t bootstrap_b,
            std::uint64_t seed, unsigned threads) {
  const esag::Matrix rows = load_directional_csv(input, sqrt_compose, normalize);
  const esag::FitResult fit = esag::fit_mle(rows);

  esag::Json out = esag::to_json(fit);
  out["n"] = rows.rows();
  if (sqrt_compose) out["mean_composition"] = mean_composition(fit.omega.mu);
  if (bootstrap_b > 0) {
    const esag::BootstrapSummary summary = esag::bootstrap_se(
        rows, bootstrap_b, esag::SeededRng(seed), esag::FitOptions{}, threads);
    out["bootstrap"] = esag::to_json(summary);
    out["seed"] = seed;
  }
  const std::string body = out.dump(2) + "\n";
  if (output.empty())
    std::cout << body;
  else
    esag::write_text_file(output, body);
  if (!fit.converged) {
    std::cerr << "warning: optimizer did not converge\n";
    return 3;
  }
  return 0;
}

int run_simulate(const std::string& params_path, const std::string& mu_text,
                 const std::string& gamma_text, std::size_t n,
                 std::uint64_t seed, std::uint64_t stream,
                 const std::string& output) {
  esag::SimulateParams params;
  if (!params_path.empty()) {
    std::ifstream file(params_path);
    if (!file) throw esag::data_error("cannot open file: " + params_path);
    esag::Json spec;
    try {
      file >> spec;
    } catch (const esag::Json::parse_error& err) {
      throw esag::data_error(params_path + ": " + err.what());
    }
    params = esag::parse_simulate_params(spec);
  } else {
    if (mu_text.empty() || gamma_text.empty())
      throw CLI::ValidationError(
          "simulate needs either --params or both --mu and --gamma");
    params.mu = parse_number_list(mu_text);
    params.gamma = parse_number_list(gamma_text);
  }

  esag::SeededRng rng(seed, stream);
  esag::Matrix sample;
  esag::Json echo;
  if (params.ag_mode) {
    Eigen::SelfAdjointEigenSolver<esag::Matrix> solver(params.V);
    if (solver.info() != Eigen::Success ||
        solver.eigenvalues().minCoeff() <= 0.0)
      throw esag::data_error("AG covariance must be symmetric positive definite");
    sample = esag::sample_ag(params.mu, solver.eigenvectors(),
                             solver.eigenvalues(), n, rng);
    echo = esag::Json{{"mode", "ag"},
                      {"mu", esag::to_std_vector(params.mu)},
                      {"V", esag::row_major(params.V)}};
  } else {
    const esag::EsagMoments moments =
        esag::omega_to_moments(esag::OmegaParams(params.mu, params.gamma));
    sample = esag::sample_esag(moments, n, rng);
    echo = esag::Json{{"mode", "esag"},
                      {"mu", esag::to_std_vector(params.mu)},
                      {"gamma", esag::to_std_vector(params.gamma)}};
  }
  echo["d"] = params.mu.size();
  echo["n"] = n;
  echo["seed"] = seed;
  echo["stream"] = stream;

  esag::write_csv(output, sample);
  esag::write_text_file(output + ".params.json", echo.dump(2) + "\n");
  return 0;
}

int run_gof(const std::string& input, const std::string& output,
            const std::string& qq_output, bool sqrt_compose, bool normalize,
            std::size_t B, std::uint64_t seed, unsigned threads) {
  const esag::Matrix rows = load_directional_csv(input, sqrt_compose, normalize);
  const esag::GofResult gof =
      esag::gof_test(rows, B, esag::SeededRng(seed), esag::FitOptions{}, threads);

  esag::Json out = esag::to_json(gof);
  out["n"] = rows.rows();
  out["seed"] = seed;
  const std::string body = out.dump(2) + "\n";
  if (output.empty())
    std::cout << body;
  else
    esag::write_text_file(output, body);

  if (!qq_output.empty()) {
    const auto [observed, reference] = gof.qq_pairs();
    esag::Matrix qq(static_cast<esag::Index>(observed.size()), 2);
    for (std::size_t i = 0; i < observed.size(); ++i) {
      qq(static_cast<esag::Index>(i), 0) = observed[i];
      qq(static_cast<esag::Index>(i), 1) = reference[i];
    }
    esag::write_csv(qq_output, qq, {"t1_observed", "t1_reference"});
  }
  return 0;
}

int run_simstudy(const std::string& config_path, const std::string& output_dir,
                 unsigned threads_override) {
  std::ifstream file(config_path);
  if (!file) throw esag::data_error("cannot open file: " + config_path);
  esag::Json spec;
  try {
    file >> spec;
  } catch (const esag::Json::parse_error& err) {
    throw esag::data_error(config_path + ": " + err.what());
  }
  const esag::StudyConfig config = esag::parse_study_config(spec);
  std::filesystem::create_directories(output_dir);

  esag::SeededRng master(config.seed);
  std::uint64_t study_index = 0;
  esag::Json summary_rows = esag::Json::array();
  double total_runtime = 0.0;

  for (const esag::StudyConfigEntry& entry : config.entries) {
    esag::StudyReport family;
    family.replicates = config.reps;
    family.bootstrap_b = config.bootstrap_b;
    const std::vector<double> alphas =
        entry.kind == esag::ScenarioKind::M1 ? std::vector<double>{0.0}
                                             : entry.alphas;
    for (double alpha : alphas) {
      for (std::size_t n : entry.ns) {
        esag::Scenario scenario{entry.kind, alpha, n};
        const esag::StudyReport report = esag::rejection_study(
            scenario, config.reps, config.bootstrap_b, config.levels,
            master.substream(study_index++), esag::FitOptions{},
            config.threads);
        family.rows.insert(family.rows.end(), report.rows.begin(),
                           report.rows.end());
        total_runtime += report.runtime_seconds;
      }
    }
    const std::string name = esag::to_string(entry.kind);
    esag::write_text_file(output_dir + "/study_" + name + ".csv",
                          esag::study_report_csv(family));
    for (const auto& row : esag::study_report_json(family)["rows"])
      summary_rows.push_back(row);
    std::cerr << "study " << name << " done\n";
  }

  esag::Json summary{{"seed", config.seed},
                     {"reps", config.reps},
                     {"B", config.bootstrap_b},
                     {"levels", config.levels},
                     {"rows", summary_rows}};
  esag::write_text_file(output_dir + "/summary.json", summary.dump(2) + "\n");
  std::cerr << "total study runtime: " << total_runtime << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elliptically symmetric angular Gaussian distributions: "
               "fitting, simulation, and goodness-of-fit"};
  app.require_subcommand(1);

  std::string input, output, qq_output, params_path, mu_text, gamma_text;
  std::string config_path, output_dir;
  bool sqrt_compose = false, normalize = false;
  std::size_t bootstrap_b = 0, n = 100, gof_b = 200;
  std::uint64_t seed = 0, stream = 0;
  unsigned threads = 1;

  CLI::App* fit = app.add_subcommand("fit", "maximum likelihood fit of a CSV sample");
  fit->add_option("input", input, "CSV of directional data")->required();
  fit->add_option("-o,--output", output, "output JSON path (default: stdout)");
  fit->add_flag("--sqrt-compose", sqrt_compose,
                "apply the component-wise square root to compositional rows");
  fit->add_flag("--normalize", normalize, "rescale rows to unit length");
  fit->add_option("--bootstrap", bootstrap_b, "bootstrap replicates for standard errors");
  fit->add_option("--seed", seed, "bootstrap seed");
  fit->add_option("--threads", threads, "worker threads for the bootstrap");

  CLI::App* simulate = app.add_subcommand("simulate", "draw a sample and write it as CSV");
  simulate->add_option("--params", params_path, "JSON parameter file (mu/gamma or mu/V)");
  simulate->add_option("--mu", mu_text, "comma-separated mu");
  simulate->add_option("--gamma", gamma_text, "comma-separated gamma (grouped order)");
  simulate->add_option("-n", n, "sample size")->required();
  simulate->add_option("--seed", seed, "random seed");
  simulate->add_option("--stream", stream, "random stream id");
  simulate->add_option("-o,--output", output, "output CSV path")->required();

  CLI::App* gof = app.add_subcommand("gof", "bootstrap goodness-of-fit test");
  gof->add_option("input", input, "CSV of directional data")->required();
  gof->add_option("-B,--bootstrap", gof_b, "bootstrap replicates");
  gof->add_option("--seed", seed, "random seed");
  gof->add_option("-o,--output", output, "output JSON path (default: stdout)");
  gof->add_option("--qq", qq_output, "write sorted QQ pairs to this CSV");
  gof->add_flag("--sqrt-compose", sqrt_compose,
                "apply the component-wise square root to compositional rows");
  gof->add_flag("--normalize", normalize, "rescale rows to unit length");
  gof->add_option("--threads", threads, "worker threads for the bootstrap");

  unsigned study_threads = 0;
  CLI::App* study = app.add_subcommand("simstudy", "Monte Carlo rejection-rate study");
  study->add_option("--config", config_path, "JSON study configuration")->required();
  study->add_option("-o,--output", output_dir, "output directory")->required();
  study->add_option("--threads", study_threads, "worker threads (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 1;
  }

  try {
    if (*fit)
      return run_fit(input, output, sqrt_compose, normalize, bootstrap_b, seed,
                     threads);
    if (*simulate)
      return run_simulate(params_path, mu_text, gamma_text, n, seed, stream,
                          output);
    if (*gof)
      return run_gof(input, output, qq_output, sqrt_compose, normalize, gof_b,
                     seed, threads);
    if (*study) return run_simstudy(config_path, output_dir, study_threads);
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const esag::convergence_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  } catch (const esag::data_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const esag::invalid_parameter_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
