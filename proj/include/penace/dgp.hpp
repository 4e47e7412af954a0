#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "penace/population.hpp"
#include "penace/rng.hpp"

namespace penace {

/// One of the four simulation populations. Defaults follow the reference
/// setup: n = 200, sparsity 10 (15 for example 4), noise sd 3 (2 for
/// example 4).
struct ExampleSpec {
  int example_id = 1;
  int n = 200;
  int p = 50;
  int s = 10;
  double sigma_noise = 3.0;
  std::uint64_t seed = 0;

  static ExampleSpec defaults(int example_id, int p = 50, std::uint64_t seed = 0) {
    ExampleSpec spec;
    spec.example_id = example_id;
    spec.p = p;
    spec.seed = seed;
    if (example_id == 4) {
      spec.s = 15;
      spec.sigma_noise = 2.0;
    }
    return spec;
  }

  void validate() const {
    if (example_id < 1 || example_id > 4)
      throw std::invalid_argument("ExampleSpec: example_id must be 1..4");
    if (n < 2) throw std::invalid_argument("ExampleSpec: n must be >= 2");
    if (p < 1) throw std::invalid_argument("ExampleSpec: p must be >= 1");
    if (s < 0 || s > p) throw std::invalid_argument("ExampleSpec: need 0 <= s <= p");
    if (example_id == 4 && s != 15)
      throw std::invalid_argument("ExampleSpec: example 4 uses three groups of five (s = 15)");
    if (sigma_noise < 0.0) throw std::invalid_argument("ExampleSpec: negative noise sd");
  }
};

/// Covariate covariance of each example: AR(1) with rho 0.85 (examples 1-2),
/// equicorrelation 0.75 (example 3), or the factor-block structure of
/// example 4 (within-group covariance 1, diagonal 1.01, independent unit
/// tail columns).
inline Matrix covariance_matrix(int example_id, int p) {
  if (p < 1) throw std::invalid_argument("covariance_matrix: p must be >= 1");
  Matrix sigma(p, p);
  switch (example_id) {
    case 1:
    case 2:
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(0.85, std::abs(i - j));
      break;
    case 3:
      sigma.setConstant(0.75);
      sigma.diagonal().setOnes();
      break;
    case 4:
      sigma.setZero();
      for (int j = 0; j < p; ++j) {
        if (j < 15) {
          for (int k = 0; k < 15; ++k)
            if (j / 5 == k / 5) sigma(j, k) = (j == k) ? 1.01 : 1.0;
        } else {
          sigma(j, j) = 1.0;
        }
      }
      break;
    default:
      throw std::invalid_argument("covariance_matrix: example_id must be 1..4");
  }
  return sigma;
}

namespace detail {

/// Outcome map shared by all examples: eta + exp(0.15 eta) + eps.
inline double outcome_value(double eta, double eps) {
  return eta + std::exp(0.15 * eta) + eps;
}

}  // namespace detail

/// Population plus the generative coefficients that produced it (the
/// projection coefficients of the population differ: the exp term makes the
/// linear model intentionally misspecified).
struct GeneratedPopulation {
  FinitePopulation pop;
  Vector beta_a;
  Vector beta_b;
};

/// Draws the population once: covariates row by row, then the coefficient
/// draws of example 2, then the treatment noise vector, then the control
/// noise vector. Covariate columns are centered after the outcomes are
/// computed. Deterministic in the seed; callers must not regenerate inside a
/// replication loop.
inline GeneratedPopulation generate_with_coefficients(const ExampleSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int n = spec.n;
  const int p = spec.p;
  Matrix x_raw(n, p);

  if (spec.example_id == 4) {
    for (int i = 0; i < n; ++i) {
      const double w1 = rng.normal();
      const double w2 = rng.normal();
      const double w3 = rng.normal();
      for (int j = 0; j < 15 && j < p; ++j) {
        const double factor = j < 5 ? w1 : (j < 10 ? w2 : w3);
        x_raw(i, j) = factor + 0.1 * rng.normal();  // N(0, 0.01) idiosyncratic noise
      }
      for (int j = 15; j < p; ++j) x_raw(i, j) = rng.normal();
    }
  } else {
    const Matrix sigma = covariance_matrix(spec.example_id, p);
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("generate: covariance factorization failed");
    const Matrix chol_lower = llt.matrixL();
    Vector z(p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) z[j] = rng.normal();
      x_raw.row(i) = (chol_lower * z).transpose();
    }
  }

  Vector beta_a = Vector::Zero(p);
  Vector beta_b = Vector::Zero(p);
  switch (spec.example_id) {
    case 1:
    case 3:
      beta_a.head(spec.s).setConstant(0.5);
      beta_b.head(spec.s).setConstant(0.25);
      break;
    case 2:
      for (int j = 0; j < spec.s; ++j) beta_a[j] = rng.uniform01();
      for (int j = 0; j < spec.s; ++j) beta_b[j] = rng.uniform01();
      break;
    case 4:
      for (int j = 0; j < 15; ++j) beta_a[j] = j < 5 ? 0.5 : (j < 10 ? 0.75 : 1.0);
      beta_b.head(15) = beta_a.head(15).array() - 0.25;
      break;
  }

  const Vector eta_a = x_raw * beta_a;
  const Vector eta_b = x_raw * beta_b;
  Vector a(n), b(n);
  for (int i = 0; i < n; ++i)
    a[i] = detail::outcome_value(eta_a[i], spec.sigma_noise * rng.normal());
  for (int i = 0; i < n; ++i)
    b[i] = detail::outcome_value(eta_b[i], spec.sigma_noise * rng.normal());

  return GeneratedPopulation{
      make_population(std::move(a), std::move(b), center_covariates(x_raw)),
      std::move(beta_a), std::move(beta_b)};
}

inline FinitePopulation generate(const ExampleSpec& spec) {
  return generate_with_coefficients(spec).pop;
}

}  // namespace penace
