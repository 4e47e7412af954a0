#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "penace/population.hpp"
#include "penace/rng.hpp"

namespace penace {

/// Finite-n values of the checkable theoretical quantities: the
/// error/covariate cross-covariance delta_n, the soft sparsity measures, the
/// extremal Gram eigenvalues, fourth moments, and the concentration constant
/// varsigma. Reported, never enforced.
struct DiagnosticsReport {
  double delta_n = 0.0;
  double s_lambda_a = 0.0;
  double s_lambda_b = 0.0;
  double lambda_min_ridge_a = 0.0;
  double lambda_min_ridge_b = 0.0;
  double lambda_max_gram = 0.0;
  double fourth_moment_x = 0.0;
  double fourth_moment_e_a = 0.0;
  double fourth_moment_e_b = 0.0;
  double varsigma = 0.0;
};

/// max over z in {a,b} of max_j |(1/n) sum_i x_ij e_i^(z)|.
inline double compute_delta_n(const Decomposition& decomp, const Matrix& X) {
  const double inv_n = 1.0 / static_cast<double>(X.rows());
  const double da = (X.transpose() * decomp.e_a).lpNorm<Eigen::Infinity>() * inv_n;
  const double db = (X.transpose() * decomp.e_b).lpNorm<Eigen::Infinity>() * inv_n;
  return std::max(da, db);
}

/// Soft support size: sum_j min(|beta_j| / lambda1, 1).
inline double sparsity_measure(const Vector& beta, double lambda1) {
  if (!(lambda1 > 0.0)) throw std::invalid_argument("sparsity_measure: lambda1 must be > 0");
  double s = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    s += std::min(std::abs(beta[j]) / lambda1, 1.0);
  return s;
}

struct EigenBounds {
  double lambda_min_a = 0.0;  // smallest eigenvalue of Sigma + lambda2_a I
  double lambda_min_b = 0.0;
  double lambda_max = 0.0;    // largest eigenvalue of Sigma
};

namespace detail {

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_lambda_max(const Matrix& sym, double tol = 1e-8, int max_iter = 10000) {
  const auto p = sym.rows();
  Vector v = Vector::Ones(p) / std::sqrt(static_cast<double>(p));
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = sym * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(sym * w);
    const bool done = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
    lambda = next;
    v = w;
    if (done) break;
  }
  return lambda;
}

}  // namespace detail

/// Extremal eigenvalues of the Gram matrix Sigma = X'X/n and its ridge
/// shifts. Full symmetric decomposition up to p = 500; extremal iteration
/// above (the smallest via power iteration on lambda_max I - Sigma).
inline EigenBounds eigen_bounds(const Matrix& X, double lambda2_a, double lambda2_b) {
  const double inv_n = 1.0 / static_cast<double>(X.rows());
  const Matrix sigma = X.transpose() * X * inv_n;
  EigenBounds out;
  if (sigma.rows() <= 500) {
    Eigen::SelfAdjointEigenSolver<Matrix> es_base(sigma, Eigen::EigenvaluesOnly);
    out.lambda_max = es_base.eigenvalues().maxCoeff();
    Matrix shifted = sigma;
    shifted.diagonal().array() += lambda2_a;
    Eigen::SelfAdjointEigenSolver<Matrix> es_a(shifted, Eigen::EigenvaluesOnly);
    out.lambda_min_a = es_a.eigenvalues().minCoeff();
    shifted = sigma;
    shifted.diagonal().array() += lambda2_b;
    Eigen::SelfAdjointEigenSolver<Matrix> es_b(shifted, Eigen::EigenvaluesOnly);
    out.lambda_min_b = es_b.eigenvalues().minCoeff();
  } else {
    out.lambda_max = detail::power_lambda_max(sigma);
    Matrix complement = -sigma;
    complement.diagonal().array() += out.lambda_max;
    const double lambda_min = out.lambda_max - detail::power_lambda_max(complement);
    out.lambda_min_a = lambda_min + lambda2_a;
    out.lambda_min_b = lambda_min + lambda2_b;
  }
  return out;
}

/// min{1/70, (3 p_A)^2/70, (3 - 3 p_A)^2/70}.
inline double varsigma(double p_A) {
  const double a = 3.0 * p_A;
  const double b = 3.0 - 3.0 * p_A;
  return std::min(1.0, std::min(a * a, b * b)) / 70.0;
}

struct MassartCheck {
  double empirical_tail = 0.0;
  double bound = 0.0;
};

/// Empirical tail P(zbar_A - zbar >= t) under random without-replacement
/// sampling of size n_A, against the concentration bound
/// exp{-p_A n_A t^2 / ((1+varsigma)^2 sigma^2)} with sigma^2 the 1/n
/// population variance.
inline MassartCheck massart_check(const Vector& z, int n_A, double t, int reps,
                                  std::uint64_t seed) {
  const int n = static_cast<int>(z.size());
  if (!(t > 0.0)) throw std::invalid_argument("massart_check: t must be > 0");
  if (reps < 1000) throw std::invalid_argument("massart_check: need reps >= 1000");
  if (n_A < 1 || n_A > n - 1)
    throw std::invalid_argument("massart_check: need 1 <= n_A <= n-1");
  const double zbar = z.mean();
  const double sigma2 = (z.array() - zbar).square().sum() / static_cast<double>(n);
  if (sigma2 <= 0.0)
    throw std::invalid_argument("massart_check: zero-variance population, bound degenerate");
  const double p_A = static_cast<double>(n_A) / static_cast<double>(n);
  const double vs = varsigma(p_A);
  MassartCheck out;
  out.bound = std::exp(-p_A * n_A * t * t / ((1.0 + vs) * (1.0 + vs) * sigma2));

  Rng rng(seed);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  long hits = 0;
  for (int rep = 0; rep < reps; ++rep) {
    for (int i = 0; i < n_A; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    double sum = 0.0;
    for (int i = 0; i < n_A; ++i) sum += z[idx[static_cast<std::size_t>(i)]];
    if (sum / n_A - zbar >= t) ++hits;
  }
  out.empirical_tail = static_cast<double>(hits) / static_cast<double>(reps);
  return out;
}

struct MomentBounds {
  double fourth_moment_x = 0.0;   // max_j (1/n) sum_i x_ij^4
  double fourth_moment_e_a = 0.0;
  double fourth_moment_e_b = 0.0;
};

inline MomentBounds moment_bounds(const FinitePopulation& pop, const Decomposition& decomp) {
  MomentBounds out;
  const double inv_n = 1.0 / static_cast<double>(pop.n());
  for (Eigen::Index j = 0; j < pop.p(); ++j)
    out.fourth_moment_x =
        std::max(out.fourth_moment_x, pop.X.col(j).array().pow(4).sum() * inv_n);
  out.fourth_moment_e_a = decomp.e_a.array().pow(4).sum() * inv_n;
  out.fourth_moment_e_b = decomp.e_b.array().pow(4).sum() * inv_n;
  return out;
}

/// Assembles the full report for one population. lambda1 scales the sparsity
/// measures; lambda2_{a,b} shift the smallest-eigenvalue checks; p_A feeds
/// varsigma.
inline DiagnosticsReport diagnose(const FinitePopulation& pop, const Decomposition& decomp,
                                  double lambda1, double lambda2_a, double lambda2_b,
                                  double p_A) {
  DiagnosticsReport rep;
  rep.delta_n = compute_delta_n(decomp, pop.X);
  rep.s_lambda_a = sparsity_measure(decomp.beta_a, lambda1);
  rep.s_lambda_b = sparsity_measure(decomp.beta_b, lambda1);
  const EigenBounds eb = eigen_bounds(pop.X, lambda2_a, lambda2_b);
  rep.lambda_min_ridge_a = eb.lambda_min_a;
  rep.lambda_min_ridge_b = eb.lambda_min_b;
  rep.lambda_max_gram = eb.lambda_max;
  const MomentBounds mb = moment_bounds(pop, decomp);
  rep.fourth_moment_x = mb.fourth_moment_x;
  rep.fourth_moment_e_a = mb.fourth_moment_e_a;
  rep.fourth_moment_e_b = mb.fourth_moment_e_b;
  rep.varsigma = varsigma(p_A);
  return rep;
}

}  // namespace penace
