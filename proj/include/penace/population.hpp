#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "penace/csv.hpp"

namespace penace {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kCenteringTol = 1e-10;

/// Sample variance with denominator m-1. The one variance convention of the
/// whole project.
inline double variance(const Vector& v) {
  const auto m = v.size();
  if (m < 2) throw std::invalid_argument("variance: need at least 2 values");
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(m - 1);
}

/// Subtracts the per-column mean from each column.
inline Matrix center_covariates(const Matrix& x_raw) {
  if (x_raw.rows() == 0 || x_raw.cols() == 0)
    throw std::invalid_argument("center_covariates: empty matrix");
  return x_raw.rowwise() - x_raw.colwise().mean();
}

/// Fixed potential outcomes (a, b) and column-centered covariates for n
/// units. Immutable ground truth of an experiment; randomness enters only
/// through treatment assignment.
struct FinitePopulation {
  Vector a;  // outcomes under treatment
  Vector b;  // outcomes under control
  Matrix X;  // n x p, every column mean 0

  Eigen::Index n() const { return a.size(); }
  Eigen::Index p() const { return X.cols(); }
};

/// Validating factory. X must already be column-centered (within 1e-10).
inline FinitePopulation make_population(Vector a, Vector b, Matrix X) {
  if (a.size() != b.size() || a.size() != X.rows())
    throw std::invalid_argument("make_population: a, b, X row counts differ");
  if (a.size() < 2) throw std::invalid_argument("make_population: need n >= 2");
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (std::abs(X.col(j).mean()) > kCenteringTol)
      throw std::invalid_argument("make_population: column " + std::to_string(j + 1) +
                                  " is not centered");
  }
  return FinitePopulation{std::move(a), std::move(b), std::move(X)};
}

/// tau = mean(a) - mean(b).
inline double true_ace(const FinitePopulation& pop) { return pop.a.mean() - pop.b.mean(); }

/// Population projection of both potential-outcome vectors on the covariate
/// columns: z_i = zbar + x_i' beta_z + e_z[i] with X'e_z = 0 and mean(e_z) = 0.
struct Decomposition {
  Vector beta_a;
  Vector beta_b;
  Vector e_a;
  Vector e_b;
  double abar = 0.0;
  double bbar = 0.0;
};

/// Least-squares projection of a and b on all covariate columns. When the
/// Gram matrix is singular (including p >= n) and `allow_rank_deficient` is
/// set, returns the minimum-norm solution; otherwise throws.
inline Decomposition project_decomposition(const FinitePopulation& pop,
                                           bool allow_rank_deficient = true) {
  Decomposition d;
  d.abar = pop.a.mean();
  d.bbar = pop.b.mean();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(pop.X);
  if (!allow_rank_deficient && cod.rank() < pop.p())
    throw std::runtime_error("project_decomposition: rank-deficient covariate matrix");
  d.beta_a = cod.solve((pop.a.array() - d.abar).matrix());
  d.beta_b = cod.solve((pop.b.array() - d.bbar).matrix());
  d.e_a = pop.a.array() - d.abar - (pop.X * d.beta_a).array();
  d.e_b = pop.b.array() - d.bbar - (pop.X * d.beta_b).array();
  return d;
}

/// The finite-n versions of the variance quantities in the asymptotic theory
/// of the penalized-adjusted estimator. All variances use denominator n-1.
struct TheoreticalVariances {
  double p_A = 0.0;
  double sigma2_e_a = 0.0;
  double sigma2_e_b = 0.0;
  double sigma2_e_diff = 0.0;  // variance of e_a - e_b
  double sigma2_pen = 0.0;     // limit variance of sqrt(n)(tau_hat_pen - tau)
  double sigma2_unadj = 0.0;   // same for the difference-in-means estimator
  Vector beta_E;               // (1-p_A) beta_a + p_A beta_b
  double delta = 0.0;          // -variance(X beta_E) <= 0
};

inline TheoreticalVariances theoretical_variances(const Decomposition& decomp,
                                                  const FinitePopulation& pop, double p_A) {
  if (!(p_A > 0.0 && p_A < 1.0))
    throw std::invalid_argument("theoretical_variances: p_A must lie in (0,1)");
  TheoreticalVariances tv;
  tv.p_A = p_A;
  tv.sigma2_e_a = variance(decomp.e_a);
  tv.sigma2_e_b = variance(decomp.e_b);
  tv.sigma2_e_diff = variance(decomp.e_a - decomp.e_b);
  tv.sigma2_pen = tv.sigma2_e_a / p_A + tv.sigma2_e_b / (1.0 - p_A) - tv.sigma2_e_diff;
  tv.sigma2_unadj =
      variance(pop.a) / p_A + variance(pop.b) / (1.0 - p_A) - variance(pop.a - pop.b);
  tv.beta_E = (1.0 - p_A) * decomp.beta_a + p_A * decomp.beta_b;
  tv.delta = -variance(pop.X * tv.beta_E);
  return tv;
}

/// CSV schema: header `a,b,x1,...,xp`, one row per unit, decimal text.
inline void save_population_csv(const FinitePopulation& pop, std::ostream& os) {
  os << "a,b";
  for (Eigen::Index j = 1; j <= pop.p(); ++j) os << ",x" << j;
  os << "\n";
  for (Eigen::Index i = 0; i < pop.n(); ++i) {
    os << format_double(pop.a[i]) << ',' << format_double(pop.b[i]);
    for (Eigen::Index j = 0; j < pop.p(); ++j) os << ',' << format_double(pop.X(i, j));
    os << "\n";
  }
}

inline void save_population_csv(const FinitePopulation& pop, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_population_csv(pop, os);
}

/// Loads the schema above. Covariate columns are recentered unless already
/// centered within tolerance, so files written by save_population_csv reload
/// bit-exactly.
inline FinitePopulation load_population_csv(std::istream& is, const std::string& name = "<stream>") {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(name + ": empty population file");
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "a" || header[1] != "b")
    throw std::runtime_error(name + ": expected header a,b,x1,...,xp");
  const std::size_t p = header.size() - 2;
  std::vector<double> av, bv, xv;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw std::runtime_error(name + ": row " + std::to_string(av.size() + 2) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    av.push_back(parse_double(cells[0], "a"));
    bv.push_back(parse_double(cells[1], "b"));
    for (std::size_t j = 0; j < p; ++j) xv.push_back(parse_double(cells[2 + j], "x"));
  }
  const auto n = static_cast<Eigen::Index>(av.size());
  if (n < 2) throw std::runtime_error(name + ": need at least 2 units");
  Vector a = Eigen::Map<Vector>(av.data(), n);
  Vector b = Eigen::Map<Vector>(bv.data(), n);
  Matrix X(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p); ++j)
      X(i, j) = xv[static_cast<std::size_t>(i) * p + static_cast<std::size_t>(j)];
  bool centered = true;
  for (Eigen::Index j = 0; j < X.cols() && centered; ++j)
    centered = std::abs(X.col(j).mean()) <= kCenteringTol;
  if (!centered && p > 0) X = center_covariates(X);
  return make_population(std::move(a), std::move(b), std::move(X));
}

inline FinitePopulation load_population_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open population file: " + path);
  return load_population_csv(is, path);
}

}  // namespace penace
