#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "penace/csv.hpp"
#include "penace/estimators.hpp"
#include "penace/population.hpp"
#include "penace/rng.hpp"

namespace penace {

/// Uniform draw over all C(n, n_A) treated subsets via partial Fisher-Yates.
inline Assignment draw_assignment(int n, int n_A, Rng& rng) {
  if (n_A < 2 || n - n_A < 2)
    throw std::invalid_argument("draw_assignment: need 2 <= n_A <= n-2");
  return make_assignment(sample_without_replacement(n, n_A, rng), n);
}

/// Everything that defines a Monte Carlo scenario besides the population
/// itself.
struct ScenarioConfig {
  int n_A = 0;
  std::vector<Method> methods;
  int replications = 1000;
  std::uint64_t base_seed = 0;
  CvConfig cv;
  double ci_level = 0.95;
  bool standardize = false;

  void validate(Eigen::Index n) const {
    if (replications < 1) throw std::invalid_argument("ScenarioConfig: replications >= 1");
    if (n_A < 2 || n_A > static_cast<int>(n) - 2)
      throw std::invalid_argument("ScenarioConfig: need 2 <= n_A <= n-2");
    if (methods.empty()) throw std::invalid_argument("ScenarioConfig: no methods");
    if (!(ci_level > 0.0 && ci_level < 1.0))
      throw std::invalid_argument("ScenarioConfig: ci_level must lie in (0,1)");
    cv.validate();
  }
};

struct ReplicationRecord {
  int rep_index = 0;
  std::vector<MethodOutcome> results;
  std::uint64_t assignment_digest = 0;
};

namespace detail {

inline std::uint64_t digest_assignment(const std::vector<int>& treated) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const int i : treated) {
    std::uint64_t v = static_cast<std::uint64_t>(i);
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xff;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace detail

/// One replication in isolation; rerunning any index reproduces its record
/// because the stream is seeded by mix(base_seed, rep), not sequentially.
inline ReplicationRecord run_one_replication(const FinitePopulation& pop,
                                             const ScenarioConfig& config, int rep_index) {
  ReplicationRecord rec;
  rec.rep_index = rep_index;
  Rng rng(derive_seed(config.base_seed, static_cast<std::uint64_t>(rep_index)));
  const Assignment asg = draw_assignment(static_cast<int>(pop.n()), config.n_A, rng);
  rec.assignment_digest = detail::digest_assignment(asg.treated);
  const ObservedExperiment obs = observe(pop, asg);
  rec.results = estimate_all(obs, config.methods, config.cv, config.ci_level,
                             config.standardize);
  return rec;
}

/// Runs `config.replications` independent replications against the fixed
/// population. Parallel over a worker pool; output is ordered by rep_index
/// and bit-identical for a given (population, config) regardless of the
/// worker count.
inline std::vector<ReplicationRecord> run_replications(const FinitePopulation& pop,
                                                       const ScenarioConfig& config,
                                                       unsigned n_workers = 0) {
  config.validate(pop.n());
  const int R = config.replications;
  std::vector<ReplicationRecord> records(static_cast<std::size_t>(R));
  if (n_workers == 0) n_workers = std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(R));

  std::atomic<int> next{0};
  const auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= R) return;
      try {
        records[static_cast<std::size_t>(r)] = run_one_replication(pop, config, r);
      } catch (const std::exception& e) {
        ReplicationRecord rec;
        rec.rep_index = r;
        for (const Method m : config.methods)
          rec.results.push_back(MethodOutcome{m, std::nullopt, e.what()});
        records[static_cast<std::size_t>(r)] = std::move(rec);
      }
    }
  };
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return records;
}

/// Exact randomization moments of each estimator.
struct ExactMoments {
  double count = 0.0;  // C(n, n_A)
  struct PerMethod {
    Method method = Method::kUnadjust;
    double mean = 0.0;
    double variance = 0.0;  // 1/C convention: the exact randomization variance
    double coverage = 0.0;
    long failures = 0;
  };
  std::vector<PerMethod> per_method;
};

namespace detail {

inline double binomial_count(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

}  // namespace detail

/// Visits every treated subset in lexicographic order and accumulates the
/// exact mean, variance, and CI coverage of each estimator. Refuses budgets
/// above 10^6 subsets.
inline ExactMoments enumerate_assignments(const FinitePopulation& pop, int n_A,
                                          const std::vector<Method>& methods,
                                          const CvConfig& cv = {}, double ci_level = 0.95) {
  const int n = static_cast<int>(pop.n());
  if (n_A < 2 || n - n_A < 2)
    throw std::invalid_argument("enumerate_assignments: need 2 <= n_A <= n-2");
  const double count = detail::binomial_count(n, n_A);
  if (count > 1e6)
    throw std::invalid_argument("enumerate_assignments: C(n, n_A) = " + format_double(count) +
                                " exceeds the 1e6 budget");
  const double tau = true_ace(pop);

  const std::size_t n_methods = methods.size();
  std::vector<std::vector<double>> taus(n_methods);
  std::vector<long> covered(n_methods, 0);
  std::vector<long> failures(n_methods, 0);

  std::vector<int> comb(static_cast<std::size_t>(n_A));
  for (int i = 0; i < n_A; ++i) comb[static_cast<std::size_t>(i)] = i;
  for (;;) {
    const Assignment asg = make_assignment(comb, n);
    const ObservedExperiment obs = observe(pop, asg);
    const auto outcomes = estimate_all(obs, methods, cv, ci_level);
    for (std::size_t k = 0; k < n_methods; ++k) {
      if (!outcomes[k].estimate) {
        ++failures[k];
        continue;
      }
      const AceEstimate& est = *outcomes[k].estimate;
      taus[k].push_back(est.tau_hat);
      if (est.ci_low <= tau && tau <= est.ci_high) ++covered[k];
    }
    // next lexicographic combination
    int i = n_A - 1;
    while (i >= 0 && comb[static_cast<std::size_t>(i)] == n - n_A + i) --i;
    if (i < 0) break;
    ++comb[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n_A; ++j)
      comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
  }

  ExactMoments out;
  out.count = count;
  for (std::size_t k = 0; k < n_methods; ++k) {
    ExactMoments::PerMethod pm;
    pm.method = methods[k];
    pm.failures = failures[k];
    const auto& v = taus[k];
    if (!v.empty()) {
      long double sum = 0.0L;
      for (const double t : v) sum += t;
      const long double mean = sum / static_cast<long double>(v.size());
      long double ss = 0.0L;
      for (const double t : v) ss += (t - mean) * (t - mean);
      pm.mean = static_cast<double>(mean);
      pm.variance = static_cast<double>(ss / static_cast<long double>(v.size()));
      pm.coverage = static_cast<double>(covered[k]) / static_cast<double>(v.size());
    }
    out.per_method.push_back(pm);
  }
  return out;
}

/// Table metrics for one method. The 1/R variance convention makes
/// mse = bias2 + variance an exact identity.
struct MetricsRow {
  double bias2 = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  double coverage = 0.0;
  double mean_length = 0.0;
  double se_bias2 = 0.0;
  double se_variance = 0.0;
  double se_mse = 0.0;
  double se_coverage = 0.0;
  double se_mean_length = 0.0;
  long n_used = 0;
  long n_excluded = 0;
};

struct MetricsSummary {
  std::vector<Method> methods;  // row order
  std::map<Method, MetricsRow> rows;
};

enum class SummaryMetric { kBias2, kVariance, kMse, kCoverage, kMeanLength };

namespace detail {

struct MethodDraws {
  std::vector<double> tau;
  std::vector<double> length;
  std::vector<char> covered;
  long n_excluded = 0;
};

inline MethodDraws collect_draws(const std::vector<ReplicationRecord>& records,
                                 Method method, double tau_true) {
  MethodDraws d;
  for (const ReplicationRecord& rec : records) {
    for (const MethodOutcome& mo : rec.results) {
      if (mo.method != method) continue;
      if (!mo.estimate) {
        ++d.n_excluded;
        continue;
      }
      d.tau.push_back(mo.estimate->tau_hat);
      d.length.push_back(mo.estimate->ci_high - mo.estimate->ci_low);
      d.covered.push_back(mo.estimate->ci_low <= tau_true && tau_true <= mo.estimate->ci_high);
    }
  }
  return d;
}

/// Metric of a (sub)sample of replication draws, by index list.
inline double metric_of(const MethodDraws& d, const std::vector<std::size_t>& idx,
                        double tau_true, SummaryMetric metric) {
  const double r = static_cast<double>(idx.size());
  switch (metric) {
    case SummaryMetric::kBias2: {
      double mean = 0.0;
      for (const std::size_t i : idx) mean += d.tau[i];
      mean /= r;
      return (mean - tau_true) * (mean - tau_true);
    }
    case SummaryMetric::kVariance: {
      double mean = 0.0;
      for (const std::size_t i : idx) mean += d.tau[i];
      mean /= r;
      double ss = 0.0;
      for (const std::size_t i : idx) ss += (d.tau[i] - mean) * (d.tau[i] - mean);
      return ss / r;
    }
    case SummaryMetric::kMse: {
      double ss = 0.0;
      for (const std::size_t i : idx) ss += (d.tau[i] - tau_true) * (d.tau[i] - tau_true);
      return ss / r;
    }
    case SummaryMetric::kCoverage: {
      double c = 0.0;
      for (const std::size_t i : idx) c += d.covered[i];
      return c / r;
    }
    case SummaryMetric::kMeanLength: {
      double l = 0.0;
      for (const std::size_t i : idx) l += d.length[i];
      return l / r;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Bootstrap standard error of one table metric: resamples the per-replication
/// estimates with replacement B times and returns the sd across resamples.
inline double bootstrap_se(const std::vector<ReplicationRecord>& records, Method method,
                           SummaryMetric metric, double tau_true, int B, std::uint64_t seed) {
  if (B < 2) throw std::invalid_argument("bootstrap_se: need B >= 2");
  const auto draws = detail::collect_draws(records, method, tau_true);
  const std::size_t R = draws.tau.size();
  if (R == 0) return std::numeric_limits<double>::quiet_NaN();
  Rng rng(seed);
  std::vector<double> values(static_cast<std::size_t>(B));
  std::vector<std::size_t> idx(R);
  for (int b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < R; ++i) idx[i] = static_cast<std::size_t>(rng.below(R));
    values[static_cast<std::size_t>(b)] = detail::metric_of(draws, idx, tau_true, metric);
  }
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(B);
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(B - 1));
}

/// Bias^2, Var, MSE, coverage, and mean CI length per method, with bootstrap
/// standard errors (B resamples, one resampling shared by the five metrics of
/// a method). Methods that failed in some replications are summarized over
/// their successes with the exclusion count reported.
inline MetricsSummary summarize(const std::vector<ReplicationRecord>& records,
                                double tau_true, int bootstrap_B = 500,
                                std::uint64_t bootstrap_seed = 0) {
  if (records.size() < 2) throw std::invalid_argument("summarize: need >= 2 records");
  MetricsSummary summary;
  for (const MethodOutcome& mo : records.front().results) summary.methods.push_back(mo.method);

  for (std::size_t mi = 0; mi < summary.methods.size(); ++mi) {
    const Method method = summary.methods[mi];
    const auto draws = detail::collect_draws(records, method, tau_true);
    MetricsRow row;
    row.n_used = static_cast<long>(draws.tau.size());
    row.n_excluded = draws.n_excluded;
    if (draws.tau.empty()) {
      row.bias2 = row.variance = row.mse = row.coverage = row.mean_length =
          std::numeric_limits<double>::quiet_NaN();
      summary.rows[method] = row;
      continue;
    }
    std::vector<std::size_t> all(draws.tau.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    row.bias2 = detail::metric_of(draws, all, tau_true, SummaryMetric::kBias2);
    row.variance = detail::metric_of(draws, all, tau_true, SummaryMetric::kVariance);
    row.mse = detail::metric_of(draws, all, tau_true, SummaryMetric::kMse);
    row.coverage = detail::metric_of(draws, all, tau_true, SummaryMetric::kCoverage);
    row.mean_length = detail::metric_of(draws, all, tau_true, SummaryMetric::kMeanLength);

    if (bootstrap_B >= 2 && draws.tau.size() >= 2) {
      Rng rng(derive_seed(bootstrap_seed, mi));
      const std::size_t R = draws.tau.size();
      std::vector<std::size_t> idx(R);
      double mean[5] = {0, 0, 0, 0, 0};
      double ss[5] = {0, 0, 0, 0, 0};
      std::vector<std::array<double, 5>> vals(static_cast<std::size_t>(bootstrap_B));
      for (int b = 0; b < bootstrap_B; ++b) {
        for (std::size_t i = 0; i < R; ++i) idx[i] = static_cast<std::size_t>(rng.below(R));
        for (int k = 0; k < 5; ++k)
          vals[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] =
              detail::metric_of(draws, idx, tau_true, static_cast<SummaryMetric>(k));
      }
      for (int k = 0; k < 5; ++k) {
        for (int b = 0; b < bootstrap_B; ++b) mean[k] += vals[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
        mean[k] /= bootstrap_B;
        for (int b = 0; b < bootstrap_B; ++b) {
          const double dl = vals[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] - mean[k];
          ss[k] += dl * dl;
        }
        ss[k] = std::sqrt(ss[k] / (bootstrap_B - 1));
      }
      row.se_bias2 = ss[0];
      row.se_variance = ss[1];
      row.se_mse = ss[2];
      row.se_coverage = ss[3];
      row.se_mean_length = ss[4];
    }
    summary.rows[method] = row;
  }
  return summary;
}

/// Long-format per-replication dump: the boxplot input.
/// Header: rep,method,tau_hat,sigma2_hat,ci_low,ci_high,df_a,df_b.
/// Failed methods are omitted (they appear in the summary exclusion counts).
inline void save_records_csv(const std::vector<ReplicationRecord>& records, std::ostream& os) {
  os << "rep,method,tau_hat,sigma2_hat,ci_low,ci_high,df_a,df_b\n";
  for (const ReplicationRecord& rec : records) {
    for (const MethodOutcome& mo : rec.results) {
      if (!mo.estimate) continue;
      const AceEstimate& e = *mo.estimate;
      os << rec.rep_index << ',' << to_string(mo.method) << ',' << format_double(e.tau_hat)
         << ',' << format_double(e.sigma2_hat) << ',' << format_double(e.ci_low) << ','
         << format_double(e.ci_high) << ',' << e.df_a << ',' << e.df_b << "\n";
    }
  }
}

}  // namespace penace
