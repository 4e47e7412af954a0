// Command-line front end: scenario simulation, single-dataset estimation,
// condition diagnostics, and the small-n enumeration oracle.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime/numerical error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "penace/config.hpp"
#include "penace/penace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace penace;

namespace {

constexpr const char* kToolVersion = "0.1.0";

unsigned worker_count_from_env() {
  const char* env = std::getenv("PENACE_WORKERS");
  if (env == nullptr) return 0;  // library default: hardware concurrency
  const long v = std::strtol(env, nullptr, 10);
  return v > 0 ? static_cast<unsigned>(v) : 0;
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

json estimate_to_json(const AceEstimate& est) {
  return json{{"method", to_string(est.method)},   {"tau_hat", est.tau_hat},
              {"sigma2_hat", est.sigma2_hat},      {"ci_low", est.ci_low},
              {"ci_high", est.ci_high},            {"df_a", est.df_a},
              {"df_b", est.df_b}};
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << text;
}

std::string summary_csv(const MetricsSummary& summary) {
  std::string out =
      "method,bias2_x1000,bias2_se_x1000,var_x1000,var_se_x1000,mse_x1000,mse_se_x1000,"
      "coverage_pct,coverage_se_pct,length,length_se,n_used,n_excluded\n";
  for (const Method method : summary.methods) {
    const MetricsRow& row = summary.rows.at(method);
    out += to_string(method);
    out += ',';
    out += format_double(row.bias2 * 1000.0);
    out += ',';
    out += format_double(row.se_bias2 * 1000.0);
    out += ',';
    out += format_double(row.variance * 1000.0);
    out += ',';
    out += format_double(row.se_variance * 1000.0);
    out += ',';
    out += format_double(row.mse * 1000.0);
    out += ',';
    out += format_double(row.se_mse * 1000.0);
    out += ',';
    out += format_double(row.coverage * 100.0);
    out += ',';
    out += format_double(row.se_coverage * 100.0);
    out += ',';
    out += format_double(row.mean_length);
    out += ',';
    out += format_double(row.se_mean_length);
    out += ',';
    out += std::to_string(row.n_used);
    out += ',';
    out += std::to_string(row.n_excluded);
    out += '\n';
  }
  return out;
}

json summary_json(const MetricsSummary& summary, double tau_true) {
  json methods = json::object();
  for (const Method method : summary.methods) {
    const MetricsRow& row = summary.rows.at(method);
    methods[to_string(method)] = json{{"bias2", row.bias2},
                                      {"bias2_se", row.se_bias2},
                                      {"variance", row.variance},
                                      {"variance_se", row.se_variance},
                                      {"mse", row.mse},
                                      {"mse_se", row.se_mse},
                                      {"coverage", row.coverage},
                                      {"coverage_se", row.se_coverage},
                                      {"mean_length", row.mean_length},
                                      {"mean_length_se", row.se_mean_length},
                                      {"n_used", row.n_used},
                                      {"n_excluded", row.n_excluded}};
  }
  return json{{"tau_true", tau_true}, {"methods", methods}};
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  const ConfigFile cfg = parse_config_file(config_path);
  const Scenario scenario = scenario_from_config(cfg);
  const std::string started = iso_timestamp();

  FinitePopulation pop = scenario.population_csv
                             ? load_population_csv(*scenario.population_csv)
                             : generate(*scenario.example);
  scenario.run.validate(pop.n());

  const auto records = run_replications(pop, scenario.run, worker_count_from_env());
  const double tau = true_ace(pop);
  const std::uint64_t bootstrap_seed = derive_seed(scenario.run.base_seed, 0xb005eedull);
  const MetricsSummary summary = summarize(records, tau, 500, bootstrap_seed);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  {
    std::ofstream os(dir / "records.csv", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write records.csv");
    save_records_csv(records, os);
  }
  write_text_file(dir / "summary.csv", summary_csv(summary));
  write_text_file(dir / "summary.json", summary_json(summary, tau).dump(2) + "\n");

  json manifest{{"config_digest", config_digest(cfg)},
                {"tool_version", kToolVersion},
                {"base_seed", scenario.run.base_seed},
                {"started_at", started},
                {"finished_at", iso_timestamp()},
                {"outputs",
                 {{"records_csv", (dir / "records.csv").string()},
                  {"summary_csv", (dir / "summary.csv").string()},
                  {"summary_json", (dir / "summary.json").string()}}}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "simulate: " << records.size() << " replications, tau = " << format_double(tau)
            << ", outputs in " << out_dir << "\n";
  return 0;
}

/// CSV with columns Y,T,x1..xp; T in {0,1}.
ObservedExperiment load_observed_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open data file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument(path + ": empty data file");
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "Y" || header[1] != "T")
    throw std::invalid_argument(path + ": expected header Y,T,x1,...,xp");
  const std::size_t p = header.size() - 2;
  std::vector<double> yv, xv;
  std::vector<int> treated;
  int row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw std::invalid_argument(path + ": row " + std::to_string(row + 2) +
                                  " has the wrong cell count");
    yv.push_back(parse_double(cells[0], "Y"));
    const long long t = parse_int(cells[1], "T");
    if (t != 0 && t != 1) throw std::invalid_argument(path + ": T must be 0 or 1");
    if (t == 1) treated.push_back(row);
    for (std::size_t j = 0; j < p; ++j) xv.push_back(parse_double(cells[2 + j], "x"));
    ++row;
  }
  const int n = row;
  if (static_cast<int>(treated.size()) == n)
    throw std::invalid_argument(path + ": control group empty");
  if (treated.empty()) throw std::invalid_argument(path + ": treated group empty");
  if (static_cast<int>(treated.size()) < 2 || n - static_cast<int>(treated.size()) < 2)
    throw std::invalid_argument(path + ": each group needs at least 2 units");

  ObservedExperiment obs;
  obs.y = Eigen::Map<Vector>(yv.data(), n);
  Matrix x(n, static_cast<Eigen::Index>(p));
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      x(i, static_cast<Eigen::Index>(j)) = xv[static_cast<std::size_t>(i) * p + j];
  obs.X = p > 0 ? center_covariates(x) : x;
  obs.treated = treated;
  obs.is_treated.assign(static_cast<std::size_t>(n), 0);
  for (const int i : treated) obs.is_treated[static_cast<std::size_t>(i)] = 1;
  obs.n_A = static_cast<int>(treated.size());
  obs.n_B = n - obs.n_A;
  return obs;
}

int cmd_estimate(const std::string& data_path, const std::string& method_name,
                 double ci_level, const CvConfig& cv, bool standardize) {
  const ObservedExperiment obs = load_observed_csv(data_path);
  const Method method = method_from_string(method_name);
  const auto outcomes = estimate_all(obs, {method}, cv, ci_level, standardize);
  if (!outcomes[0].estimate)
    throw std::runtime_error("estimation failed: " + outcomes[0].error);
  std::cout << estimate_to_json(*outcomes[0].estimate).dump(2) << "\n";
  return 0;
}

int cmd_diagnose(const std::optional<std::string>& population_path,
                 const std::optional<int>& example_id, int p, int n, std::uint64_t seed,
                 double lambda1, double lambda2_a, double lambda2_b, double p_A) {
  FinitePopulation pop = population_path ? load_population_csv(*population_path)
                                         : [&] {
                                             ExampleSpec spec =
                                                 ExampleSpec::defaults(*example_id, p, seed);
                                             spec.n = n;
                                             spec.validate();
                                             return generate(spec);
                                           }();
  const auto decomp = project_decomposition(pop);
  const DiagnosticsReport rep = diagnose(pop, decomp, lambda1, lambda2_a, lambda2_b, p_A);
  const json out{{"delta_n", rep.delta_n},
                 {"s_lambda_a", rep.s_lambda_a},
                 {"s_lambda_b", rep.s_lambda_b},
                 {"lambda_min_ridge_a", rep.lambda_min_ridge_a},
                 {"lambda_min_ridge_b", rep.lambda_min_ridge_b},
                 {"lambda_max_gram", rep.lambda_max_gram},
                 {"fourth_moment_x", rep.fourth_moment_x},
                 {"fourth_moment_e_a", rep.fourth_moment_e_a},
                 {"fourth_moment_e_b", rep.fourth_moment_e_b},
                 {"varsigma", rep.varsigma},
                 {"lambda1", lambda1},
                 {"lambda2_a", lambda2_a},
                 {"lambda2_b", lambda2_b},
                 {"p_A", p_A}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_oracle(const std::string& population_path, int n_A,
               const std::string& methods_list, double ci_level) {
  const FinitePopulation pop = load_population_csv(population_path);
  const std::vector<Method> methods = parse_method_list(methods_list);
  const ExactMoments moments = enumerate_assignments(pop, n_A, methods, CvConfig{}, ci_level);
  const double tau = true_ace(pop);
  json per = json::object();
  double identity_residual = -1.0;
  for (const auto& pm : moments.per_method) {
    per[to_string(pm.method)] = json{{"mean", pm.mean},
                                     {"variance", pm.variance},
                                     {"coverage", pm.coverage},
                                     {"failures", pm.failures}};
    if (pm.method == Method::kUnadjust) {
      const int n = static_cast<int>(pop.n());
      const double neyman = variance(pop.a) / n_A + variance(pop.b) / (n - n_A) -
                            variance(pop.a - pop.b) / n;
      identity_residual = std::abs(pm.variance - neyman);
      per[to_string(pm.method)]["neyman_identity_residual"] = identity_residual;
    }
  }
  const json out{{"count", moments.count}, {"tau_true", tau}, {"per_method", per}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"penalized-regression-adjusted average-causal-effect estimation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo scenario from a config file");
  std::string config_path, out_dir;
  sim->add_option("--config", config_path, "scenario config file")->required();
  sim->add_option("--out", out_dir, "output directory")->required();

  // shared CV flags for estimate
  CvConfig cv;
  std::string lambda2_grid_arg;
  bool standardize = false;
  double ci_level = 0.95;

  auto* est = app.add_subcommand("estimate", "analyze one dataset (CSV: Y,T,x1..xp)");
  std::string data_path, method_name = "unadjust";
  est->add_option("--data", data_path, "data CSV")->required();
  est->add_option("--method", method_name, "unadjust|OLS|Lasso|EN|naiveEN|Ada|Ridge");
  est->add_option("--ci-level", ci_level, "confidence level (default 0.95)");
  est->add_option("--cv-folds", cv.folds, "CV folds");
  est->add_option("--cv-n-lambda1", cv.n_lambda1, "lambda1 path length");
  est->add_option("--cv-lambda1-min-ratio", cv.lambda1_min_ratio, "path floor ratio");
  est->add_option("--cv-lambda2-grid", lambda2_grid_arg, "comma-separated lambda2 grid");
  est->add_option("--cv-seed", cv.seed, "fold permutation seed");
  est->add_flag("--standardize", standardize, "unit-variance column scaling");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "report finite-sample condition quantities");
  std::string diag_population;
  int diag_example = 0, diag_p = 50, diag_n = 200;
  std::uint64_t diag_seed = 0;
  double diag_lambda1 = 0.0, diag_l2a = 0.1, diag_l2b = 0.1, diag_pa = 0.5;
  diag->add_option("--population", diag_population, "population CSV (a,b,x1..xp)");
  diag->add_option("--example", diag_example, "generate example 1..4 instead");
  diag->add_option("--p", diag_p, "covariate count for --example");
  diag->add_option("--n", diag_n, "units for --example");
  diag->add_option("--seed", diag_seed, "generation seed for --example");
  diag->add_option("--lambda1", diag_lambda1,
                   "sparsity-measure scale (default sqrt(2 log p / n))");
  diag->add_option("--lambda2-a", diag_l2a, "ridge shift for group a");
  diag->add_option("--lambda2-b", diag_l2b, "ridge shift for group b");
  diag->add_option("--p-A", diag_pa, "treated fraction for varsigma");

  // oracle
  auto* orc = app.add_subcommand("oracle", "exact enumeration over all assignments");
  std::string orc_population, orc_methods = "unadjust";
  int orc_na = 0;
  double orc_level = 0.95;
  orc->add_option("--population", orc_population, "population CSV")->required();
  orc->add_option("--n-A", orc_na, "treated group size")->required();
  orc->add_option("--methods", orc_methods, "comma-separated method list");
  orc->add_option("--ci-level", orc_level, "confidence level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir);
    if (est->parsed()) {
      if (!lambda2_grid_arg.empty()) cv.lambda2_grid = parse_double_list(lambda2_grid_arg);
      cv.validate();
      return cmd_estimate(data_path, method_name, ci_level, cv, standardize);
    }
    if (diag->parsed()) {
      std::optional<std::string> pop_path;
      std::optional<int> example_id;
      if (!diag_population.empty())
        pop_path = diag_population;
      else if (diag_example >= 1)
        example_id = diag_example;
      else
        throw std::invalid_argument("diagnose: give --population or --example");
      if (diag_lambda1 <= 0.0)
        diag_lambda1 = std::sqrt(2.0 * std::log(std::max(2, diag_p)) / std::max(2, diag_n));
      return cmd_diagnose(pop_path, example_id, diag_p, diag_n, diag_seed, diag_lambda1,
                          diag_l2a, diag_l2b, diag_pa);
    }
    if (orc->parsed()) return cmd_oracle(orc_population, orc_na, orc_methods, orc_level);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
