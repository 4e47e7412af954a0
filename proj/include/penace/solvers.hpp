#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "penace/population.hpp"
#include "penace/rng.hpp"

namespace penace {

enum class PenaltyKind { kOls, kRidge, kLasso, kNaiveEn, kEn, kAdaptiveLasso };

inline const char* to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::kOls: return "ols";
    case PenaltyKind::kRidge: return "ridge";
    case PenaltyKind::kLasso: return "lasso";
    case PenaltyKind::kNaiveEn: return "naive_en";
    case PenaltyKind::kEn: return "en";
    case PenaltyKind::kAdaptiveLasso: return "adaptive_lasso";
  }
  return "?";
}

/// Penalty family with tuning parameters. `weights` only for the adaptive
/// Lasso; +infinity entries exclude the covariate.
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::kOls;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::optional<Vector> weights;

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0)
      throw std::invalid_argument("PenaltySpec: negative tuning parameter");
    if (kind == PenaltyKind::kOls && (lambda1 != 0.0 || lambda2 != 0.0))
      throw std::invalid_argument("PenaltySpec: ols takes no penalty");
    if (kind == PenaltyKind::kRidge && lambda1 != 0.0)
      throw std::invalid_argument("PenaltySpec: ridge has no l1 weight");
    if (kind == PenaltyKind::kLasso && lambda2 != 0.0)
      throw std::invalid_argument("PenaltySpec: lasso has no l2 weight");
    if (weights.has_value() && kind != PenaltyKind::kAdaptiveLasso)
      throw std::invalid_argument("PenaltySpec: weights only for adaptive_lasso");
  }
};

/// Fitted adjustment vector. df is ||coef||_0 + 1 for the l1 family and p+1
/// for ols/ridge.
struct Fit {
  Vector coef;
  int df = 1;
  long n_sweeps = 0;
  bool converged = true;
  double objective = 0.0;
};

struct SolveControl {
  long max_sweeps = 100000;
  double tol = 1e-7;      // coordinate-change threshold, relative to max(1, |coef|_inf)
  double kkt_tol = 1e-6;  // certificate accepted below this
  bool certify = true;    // verify the KKT condition before declaring convergence
  std::function<void(double)> on_sweep_objective;  // test hook, called once per sweep
};

/// sign(z) * max(|z| - gamma, 0).
inline double soft_threshold(double z, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("soft_threshold: gamma must be >= 0");
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

namespace detail {

inline int support_size(const Vector& coef) {
  int s = 0;
  for (Eigen::Index j = 0; j < coef.size(); ++j)
    if (coef[j] != 0.0) ++s;
  return s;
}

inline double en_objective(const Vector& r, const Vector& beta, double l1, double l2,
                           double inv_m) {
  return 0.5 * inv_m * r.squaredNorm() + l1 * beta.lpNorm<1>() +
         0.5 * l2 * beta.squaredNorm();
}

/// Max KKT violation given the exact residual r = y - Xc beta.
inline double kkt_from_residual(const Vector& beta, const Vector& r, const Matrix& Xc,
                                double l1, double l2, double inv_m) {
  Vector g = Xc.transpose() * r * inv_m - l2 * beta;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double v = beta[j] != 0.0
                         ? std::abs(g[j] - l1 * (beta[j] > 0.0 ? 1.0 : -1.0))
                         : std::max(std::abs(g[j]) - l1, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

/// One cyclic pass over the listed columns (all columns when cols is null).
/// Keeps r = y - Xc beta up to date; returns the largest coordinate change.
inline double cd_pass(const Matrix& Xc, const Vector& gram_diag, double l1, double l2,
                      double inv_m, Vector& beta, Vector& r, const int* cols, int ncols) {
  double max_delta = 0.0;
  for (int k = 0; k < ncols; ++k) {
    const Eigen::Index j = cols ? cols[k] : k;
    const double denom = gram_diag[j] + l2;
    if (denom <= 0.0) {  // zero-variance column: only beta_j = 0 is admissible
      if (beta[j] != 0.0) {
        r += Xc.col(j) * beta[j];
        beta[j] = 0.0;
      }
      continue;
    }
    const double z = gram_diag[j] * beta[j] + Xc.col(j).dot(r) * inv_m;
    const double bj = soft_threshold(z, l1) / denom;
    const double diff = bj - beta[j];
    if (diff != 0.0) {
      r -= Xc.col(j) * diff;
      beta[j] = bj;
      max_delta = std::max(max_delta, std::abs(diff));
    }
  }
  return max_delta;
}

/// Cyclic coordinate descent with active-set inner loops. beta and r are
/// warm-start state (r must equal y - Xc beta on entry); on exit they hold
/// the solution and its exact residual.
inline Fit cd_solve(const Vector& y, const Matrix& Xc, const Vector& gram_diag, double l1,
                    double l2, Vector& beta, Vector& r, const SolveControl& ctl) {
  const double inv_m = 1.0 / static_cast<double>(Xc.rows());
  const Eigen::Index p = Xc.cols();
  long sweeps = 0;
  bool converged = false;
  double thr = ctl.tol;
  std::vector<int> active;
  active.reserve(static_cast<std::size_t>(p));

#ifndef NDEBUG
  double prev_obj = std::numeric_limits<double>::infinity();
#endif
  auto after_sweep = [&]() {
#ifndef NDEBUG
    const double obj = en_objective(r, beta, l1, l2, inv_m);
    assert(obj <= prev_obj + 1e-10 * std::max(1.0, std::abs(prev_obj)) &&
           "coordinate descent objective must not increase");
    prev_obj = obj;
#endif
    if (ctl.on_sweep_objective) {
      Vector exact_r = y - Xc * beta;
      ctl.on_sweep_objective(en_objective(exact_r, beta, l1, l2, inv_m));
    }
  };

  while (sweeps < ctl.max_sweeps) {
    const double d = cd_pass(Xc, gram_diag, l1, l2, inv_m, beta, r, nullptr,
                             static_cast<int>(p));
    ++sweeps;
    after_sweep();
    if (d < thr * std::max(1.0, beta.lpNorm<Eigen::Infinity>())) {
      if (!ctl.certify) {
        converged = true;
        break;
      }
      r = y - Xc * beta;  // drop accumulated drift before certifying
      if (kkt_from_residual(beta, r, Xc, l1, l2, inv_m) <= ctl.kkt_tol) {
        converged = true;
        break;
      }
      thr *= 0.1;
      if (thr < 1e-16) break;
      continue;
    }
    active.clear();
    for (Eigen::Index j = 0; j < p; ++j)
      if (beta[j] != 0.0) active.push_back(static_cast<int>(j));
    while (sweeps < ctl.max_sweeps && !active.empty()) {
      const double di = cd_pass(Xc, gram_diag, l1, l2, inv_m, beta, r, active.data(),
                                static_cast<int>(active.size()));
      ++sweeps;
      after_sweep();
      if (di < thr * std::max(1.0, beta.lpNorm<Eigen::Infinity>())) break;
    }
  }

  r = y - Xc * beta;
  if (!converged && ctl.certify)
    converged = kkt_from_residual(beta, r, Xc, l1, l2, inv_m) <= ctl.kkt_tol;
  Fit fit;
  fit.coef = beta;
  fit.df = support_size(beta) + 1;
  fit.n_sweeps = sweeps;
  fit.converged = converged;
  fit.objective = en_objective(r, beta, l1, l2, inv_m);
  return fit;
}

}  // namespace detail

/// Minimizes (1/2m)|y - Xc b|^2 + l1 |b|_1 + (l2/2)|b|^2 by cyclic coordinate
/// descent. Inputs must be centered; no intercept is fitted. Never throws on
/// non-convergence: the returned flag is the KKT certificate.
inline Fit fit_naive_en(const Vector& y, const Matrix& Xc, double lambda1, double lambda2,
                        const SolveControl& ctl = {}, const Vector* warm_start = nullptr) {
  if (lambda1 < 0.0 || lambda2 < 0.0)
    throw std::invalid_argument("fit_naive_en: negative penalty");
  if (y.size() != Xc.rows()) throw std::invalid_argument("fit_naive_en: size mismatch");
  const double inv_m = 1.0 / static_cast<double>(Xc.rows());
  Vector gram_diag = Xc.colwise().squaredNorm() * inv_m;
  Vector beta;
  Vector r;
  if (warm_start && warm_start->size() == Xc.cols()) {
    beta = *warm_start;
    r = y - Xc * beta;
  } else {
    beta = Vector::Zero(Xc.cols());
    r = y;
  }
  return detail::cd_solve(y, Xc, gram_diag, lambda1, lambda2, beta, r, ctl);
}

/// Exact normal-equations solve; rank deficiency is an error (penalized
/// methods are the fallback, not a pseudo-inverse).
inline Fit fit_ols(const Vector& y, const Matrix& Xc) {
  const auto m = Xc.rows();
  const auto p = Xc.cols();
  if (p >= m) throw std::invalid_argument("fit_ols: requires p < m");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Xc);
  if (cod.rank() < p) throw std::runtime_error("fit_ols: rank-deficient design");
  Fit fit;
  fit.coef = cod.solve(y);
  fit.df = static_cast<int>(p) + 1;
  Vector r = y - Xc * fit.coef;
  fit.objective = 0.5 * r.squaredNorm() / static_cast<double>(m);
  return fit;
}

/// Closed-form Ridge: coef = (Sigma_hat + l2 I)^{-1} Xc'y/m with
/// Sigma_hat = Xc'Xc/m, solved by Cholesky of the p x p system.
inline Fit fit_ridge(const Vector& y, const Matrix& Xc, double lambda2) {
  if (!(lambda2 > 0.0)) throw std::invalid_argument("fit_ridge: lambda2 must be > 0");
  const double inv_m = 1.0 / static_cast<double>(Xc.rows());
  Matrix A = Xc.transpose() * Xc * inv_m;
  A.diagonal().array() += lambda2;
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("fit_ridge: Cholesky factorization failed");
  Fit fit;
  fit.coef = llt.solve(Xc.transpose() * y * inv_m);
  fit.df = static_cast<int>(Xc.cols()) + 1;
  Vector r = y - Xc * fit.coef;
  fit.objective = 0.5 * inv_m * r.squaredNorm() + 0.5 * lambda2 * fit.coef.squaredNorm();
  return fit;
}

/// Elastic Net from its naive solution: coef scaled by (1 + lambda2), same
/// support, same df.
inline Fit rescale_en(const Fit& naive, double lambda2) {
  Fit fit = naive;
  fit.coef *= (1.0 + lambda2);
  return fit;
}

/// w_j = 1 / |initial coef_j|; exact zeros map to +infinity (excluded).
inline Vector adaptive_weights(const Fit& initial) {
  Vector w(initial.coef.size());
  bool any_active = false;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (initial.coef[j] != 0.0) {
      w[j] = 1.0 / std::abs(initial.coef[j]);
      any_active = true;
    } else {
      w[j] = std::numeric_limits<double>::infinity();
    }
  }
  if (!any_active)
    throw std::runtime_error("adaptive_weights: no active variables for adaptive stage");
  return w;
}

/// Adaptive Lasso through the rescaling identity: drop +infinity-weight
/// columns, scale column j by 1/w_j, run the plain Lasso, then divide the
/// solution by w. Weights must be positive (or +infinity).
inline Fit fit_adaptive_lasso(const Vector& y, const Matrix& Xc, double lambda1,
                              const Vector& weights, const SolveControl& ctl = {}) {
  const auto p = Xc.cols();
  if (weights.size() != p) throw std::invalid_argument("fit_adaptive_lasso: weight length");
  std::vector<int> finite;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::isinf(weights[j])) continue;
    if (!(weights[j] > 0.0))
      throw std::invalid_argument("fit_adaptive_lasso: weights must be positive or +inf");
    finite.push_back(static_cast<int>(j));
  }
  if (finite.empty())
    throw std::invalid_argument("fit_adaptive_lasso: at least one finite weight required");
  Matrix Xs(Xc.rows(), static_cast<Eigen::Index>(finite.size()));
  for (std::size_t k = 0; k < finite.size(); ++k)
    Xs.col(static_cast<Eigen::Index>(k)) = Xc.col(finite[k]) / weights[finite[k]];
  const Fit inner = fit_naive_en(y, Xs, lambda1, 0.0, ctl);
  Fit fit;
  fit.coef = Vector::Zero(p);
  for (std::size_t k = 0; k < finite.size(); ++k)
    fit.coef[finite[k]] = inner.coef[static_cast<Eigen::Index>(k)] / weights[finite[k]];
  fit.df = detail::support_size(fit.coef) + 1;
  fit.n_sweeps = inner.n_sweeps;
  fit.converged = inner.converged;
  fit.objective = inner.objective;
  return fit;
}

/// Max over j of |g_j - l1 sign(coef_j)| on the support and of
/// max(|g_j| - l1, 0) off it, with g = Xc'(y - Xc coef)/m - l2 coef.
inline double kkt_violation(const Vector& coef, const Vector& y, const Matrix& Xc,
                            double lambda1, double lambda2) {
  const double inv_m = 1.0 / static_cast<double>(Xc.rows());
  Vector r = y - Xc * coef;
  return detail::kkt_from_residual(coef, r, Xc, lambda1, lambda2, inv_m);
}

inline double kkt_violation(const Fit& fit, const Vector& y, const Matrix& Xc,
                            double lambda1, double lambda2) {
  return kkt_violation(fit.coef, y, Xc, lambda1, lambda2);
}

/// Cross-validation protocol: 10-fold by default, seeded permutation split
/// into contiguous blocks, minimum mean held-out squared error, ties broken
/// toward larger lambda1 then larger lambda2.
struct CvConfig {
  int folds = 10;
  int n_lambda1 = 100;
  double lambda1_min_ratio = 1e-3;
  std::vector<double> lambda2_grid = {0.0, 0.01, 0.1, 1.0};
  std::uint64_t seed = 0;

  void validate() const {
    if (folds < 2) throw std::invalid_argument("CvConfig: folds must be >= 2");
    if (n_lambda1 < 1) throw std::invalid_argument("CvConfig: n_lambda1 must be >= 1");
    if (!(lambda1_min_ratio > 0.0 && lambda1_min_ratio < 1.0))
      throw std::invalid_argument("CvConfig: lambda1_min_ratio must lie in (0,1)");
    if (lambda2_grid.empty()) throw std::invalid_argument("CvConfig: empty lambda2 grid");
    for (const double l2 : lambda2_grid)
      if (l2 < 0.0) throw std::invalid_argument("CvConfig: negative lambda2");
  }
};

namespace detail {

inline std::vector<double> log_spaced_path(double hi, double lo_ratio, int count) {
  std::vector<double> path(static_cast<std::size_t>(count));
  if (count == 1) {
    path[0] = hi;
    return path;
  }
  const double step = std::log(lo_ratio) / static_cast<double>(count - 1);
  for (int k = 0; k < count; ++k)
    path[static_cast<std::size_t>(k)] = hi * std::exp(step * k);
  return path;
}

/// Fold id per row: seeded permutation cut into `folds` contiguous blocks
/// (the first m % folds blocks are one longer).
inline std::vector<int> fold_assignment(int m, int folds, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  shuffle(perm, rng);
  std::vector<int> fold_of(static_cast<std::size_t>(m));
  const int base = m / folds;
  const int extra = m % folds;
  int pos = 0;
  for (int f = 0; f < folds; ++f) {
    const int len = base + (f < extra ? 1 : 0);
    for (int k = 0; k < len; ++k) fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos++)])] = f;
  }
  return fold_of;
}

struct FoldData {
  Matrix x_train;   // group-centered within the training block
  Vector y_train;
  Matrix x_test;    // test rows relative to the training column means
  Vector y_test;
  double y_train_mean = 0.0;
  Vector gram_diag;
};

inline std::vector<FoldData> build_folds(const Vector& y, const Matrix& Xc,
                                         const std::vector<int>& fold_of, int folds) {
  const int m = static_cast<int>(y.size());
  std::vector<FoldData> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    int m_te = 0;
    for (int i = 0; i < m; ++i) m_te += fold_of[static_cast<std::size_t>(i)] == f;
    const int m_tr = m - m_te;
    if (m_tr < 1 || m_te < 1)
      throw std::invalid_argument("cross_validate: empty fold (m too small for folds)");
    FoldData& fd = out[static_cast<std::size_t>(f)];
    fd.x_train.resize(m_tr, Xc.cols());
    fd.y_train.resize(m_tr);
    fd.x_test.resize(m_te, Xc.cols());
    fd.y_test.resize(m_te);
    int it = 0, ie = 0;
    for (int i = 0; i < m; ++i) {
      if (fold_of[static_cast<std::size_t>(i)] == f) {
        fd.x_test.row(ie) = Xc.row(i);
        fd.y_test[ie++] = y[i];
      } else {
        fd.x_train.row(it) = Xc.row(i);
        fd.y_train[it++] = y[i];
      }
    }
    const Eigen::RowVectorXd x_mean = fd.x_train.colwise().mean();
    fd.y_train_mean = fd.y_train.mean();
    fd.x_train.rowwise() -= x_mean;
    fd.y_train.array() -= fd.y_train_mean;
    fd.x_test.rowwise() -= x_mean;
    fd.gram_diag = fd.x_train.colwise().squaredNorm() / static_cast<double>(m_tr);
  }
  return out;
}

/// Fold fits are warm-started and deliberately loose: held-out error ranking
/// is insensitive far below this precision, and deep path points on
/// near-saturated designs would otherwise dominate the runtime. Only the
/// final refit carries the certified strict solve.
inline SolveControl cv_fold_control() {
  SolveControl ctl;
  ctl.tol = 2e-4;
  ctl.max_sweeps = 100;
  ctl.certify = false;
  return ctl;
}

/// Held-out SSE for every (lambda1, lambda2) pair, warm-starting down each
/// lambda1 path. Held-out predictions use the rescaled coefficients
/// (1 + lambda2) beta: the Elastic Net family selection is by the error of
/// the rescaled predictor (which contains the Lasso at lambda2 = 0); the
/// naive fit at the selected pair is what gets rescaled or reported.
inline Matrix en_cv_errors(const std::vector<FoldData>& folds,
                           const std::vector<double>& l1_path,
                           const std::vector<double>& l2_values) {
  const SolveControl ctl = cv_fold_control();
  Matrix sse = Matrix::Zero(static_cast<Eigen::Index>(l1_path.size()),
                            static_cast<Eigen::Index>(l2_values.size()));
  for (const FoldData& fd : folds) {
    for (std::size_t i2 = 0; i2 < l2_values.size(); ++i2) {
      Vector beta = Vector::Zero(fd.x_train.cols());
      Vector r = fd.y_train;
      for (std::size_t i1 = 0; i1 < l1_path.size(); ++i1) {
        cd_solve(fd.y_train, fd.x_train, fd.gram_diag, l1_path[i1], l2_values[i2], beta, r,
                 ctl);
        const Vector resid = fd.y_test -
                             (1.0 + l2_values[i2]) * (fd.x_test * beta) -
                             Vector::Constant(fd.y_test.size(), fd.y_train_mean);
        sse(static_cast<Eigen::Index>(i1), static_cast<Eigen::Index>(i2)) +=
            resid.squaredNorm();
      }
    }
  }
  return sse;
}

/// Refit on all data: walk the warm-start path down to the selected lambda1
/// loosely, then solve the selected point under the strict certified control.
inline Fit path_refit(const Vector& y, const Matrix& Xc, const std::vector<double>& l1_path,
                      std::size_t selected, double l2, const SolveControl& ctl) {
  Vector gram_diag = Xc.colwise().squaredNorm() / static_cast<double>(Xc.rows());
  Vector beta = Vector::Zero(Xc.cols());
  Vector r = y;
  SolveControl walk = cv_fold_control();
  walk.max_sweeps = 1000;
  for (std::size_t i1 = 0; i1 < selected; ++i1)
    cd_solve(y, Xc, gram_diag, l1_path[i1], l2, beta, r, walk);
  return cd_solve(y, Xc, gram_diag, l1_path[selected], l2, beta, r, ctl);
}

/// Ridge held-out SSE for each candidate lambda2 via one symmetric
/// eigendecomposition per fold. When p > m_train the algebraically identical
/// dual (m x m) system is decomposed instead; fit_ridge remains the primal
/// reference and the two agree to solver precision.
inline std::vector<double> ridge_cv_errors(const std::vector<FoldData>& folds,
                                           const std::vector<double>& l2_values) {
  std::vector<double> sse(l2_values.size(), 0.0);
  for (const FoldData& fd : folds) {
    const auto m_tr = fd.x_train.rows();
    const auto p = fd.x_train.cols();
    const double inv_m = 1.0 / static_cast<double>(m_tr);
    if (p <= m_tr) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(fd.x_train.transpose() * fd.x_train * inv_m);
      const Vector evals = es.eigenvalues();
      const Vector v = es.eigenvectors().transpose() * (fd.x_train.transpose() * fd.y_train * inv_m);
      const Matrix proj = fd.x_test * es.eigenvectors();
      for (std::size_t k = 0; k < l2_values.size(); ++k) {
        const Vector coef_spec = v.array() / (evals.array() + l2_values[k]);
        const Vector resid = fd.y_test - proj * coef_spec -
                             Vector::Constant(fd.y_test.size(), fd.y_train_mean);
        sse[k] += resid.squaredNorm();
      }
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(fd.x_train * fd.x_train.transpose());
      const Vector evals = es.eigenvalues();
      const Vector c = es.eigenvectors().transpose() * fd.y_train;
      const Matrix gram_te = fd.x_test * fd.x_train.transpose() * es.eigenvectors();
      for (std::size_t k = 0; k < l2_values.size(); ++k) {
        const Vector dual_spec =
            c.array() / (evals.array() + static_cast<double>(m_tr) * l2_values[k]);
        const Vector resid = fd.y_test - gram_te * dual_spec -
                             Vector::Constant(fd.y_test.size(), fd.y_train_mean);
        sse[k] += resid.squaredNorm();
      }
    }
  }
  return sse;
}

}  // namespace detail

/// lambda_max = |Xc'y/m|_inf: the smallest l1 weight with an all-zero fit.
inline double lasso_lambda_max(const Vector& y, const Matrix& Xc) {
  return (Xc.transpose() * y).lpNorm<Eigen::Infinity>() / static_cast<double>(Xc.rows());
}

/// Selects tuning parameters by K-fold cross-validation and refits on all
/// data. `kind` routes the grid: lasso fixes lambda2 = 0, naive_en/en search
/// the lambda2 grid, ridge searches a dedicated lambda2 path, adaptive_lasso
/// (with `ada_weights`) runs the Lasso path on weight-rescaled covariates.
/// With `standardize`, columns are scaled to unit norm before fitting and
/// coefficients are mapped back.
inline std::pair<PenaltySpec, Fit> cross_validate(const Vector& y, const Matrix& Xc,
                                                  PenaltyKind kind, const CvConfig& cv,
                                                  const Vector* ada_weights = nullptr,
                                                  bool standardize = false,
                                                  const SolveControl& ctl = {}) {
  cv.validate();
  const int m = static_cast<int>(y.size());
  if (m < cv.folds) throw std::invalid_argument("cross_validate: fewer rows than folds");
  if (y.size() != Xc.rows()) throw std::invalid_argument("cross_validate: size mismatch");

  if (standardize) {
    Vector sd = (Xc.colwise().squaredNorm() / static_cast<double>(m)).array().sqrt();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
      if (sd[j] < 1e-12) sd[j] = 1.0;
    const Matrix Xs = Xc * sd.cwiseInverse().asDiagonal();
    auto [spec, fit] = cross_validate(y, Xs, kind, cv, ada_weights, false, ctl);
    fit.coef = fit.coef.cwiseQuotient(sd);
    return {std::move(spec), std::move(fit)};
  }

  if (kind == PenaltyKind::kOls) return {PenaltySpec{PenaltyKind::kOls}, fit_ols(y, Xc)};

  const std::vector<int> fold_of = detail::fold_assignment(m, cv.folds, cv.seed);

  if (kind == PenaltyKind::kRidge) {
    double l2_hi = 1000.0 * lasso_lambda_max(y, Xc);
    if (!(l2_hi > 0.0)) l2_hi = 1.0;
    std::vector<double> cand = detail::log_spaced_path(
        l2_hi, cv.lambda1_min_ratio * cv.lambda1_min_ratio, cv.n_lambda1);
    for (const double l2 : cv.lambda2_grid)
      if (l2 > 0.0) cand.push_back(l2);
    std::sort(cand.begin(), cand.end(), std::greater<double>());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    const auto folds = detail::build_folds(y, Xc, fold_of, cv.folds);
    const std::vector<double> sse = detail::ridge_cv_errors(folds, cand);
    std::size_t best = 0;
    for (std::size_t k = 1; k < cand.size(); ++k)
      if (sse[k] < sse[best]) best = k;  // descending order: first win = larger lambda2
    PenaltySpec spec{PenaltyKind::kRidge, 0.0, cand[best]};
    return {spec, fit_ridge(y, Xc, cand[best])};
  }

  if (kind == PenaltyKind::kAdaptiveLasso) {
    if (ada_weights == nullptr)
      throw std::invalid_argument("cross_validate: adaptive_lasso needs weights");
    const Vector& w = *ada_weights;
    if (w.size() != Xc.cols()) throw std::invalid_argument("cross_validate: weight length");
    std::vector<int> finite;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (std::isinf(w[j])) continue;
      if (!(w[j] > 0.0))
        throw std::invalid_argument("cross_validate: weights must be positive or +inf");
      finite.push_back(static_cast<int>(j));
    }
    if (finite.empty())
      throw std::invalid_argument("cross_validate: no finite adaptive weights");
    Matrix Xs(Xc.rows(), static_cast<Eigen::Index>(finite.size()));
    for (std::size_t k = 0; k < finite.size(); ++k)
      Xs.col(static_cast<Eigen::Index>(k)) = Xc.col(finite[k]) / w[finite[k]];
    double l_max = lasso_lambda_max(y, Xs);
    if (!(l_max > 0.0)) l_max = 1.0;
    const std::vector<double> path =
        detail::log_spaced_path(l_max, cv.lambda1_min_ratio, cv.n_lambda1);
    const auto folds = detail::build_folds(y, Xs, fold_of, cv.folds);
    const Matrix sse = detail::en_cv_errors(folds, path, {0.0});
    std::size_t best = 0;
    for (std::size_t i1 = 1; i1 < path.size(); ++i1)
      if (sse(static_cast<Eigen::Index>(i1), 0) < sse(static_cast<Eigen::Index>(best), 0))
        best = i1;
    const Fit inner = detail::path_refit(y, Xs, path, best, 0.0, ctl);
    Fit fit;
    fit.coef = Vector::Zero(Xc.cols());
    for (std::size_t k = 0; k < finite.size(); ++k)
      fit.coef[finite[k]] = inner.coef[static_cast<Eigen::Index>(k)] / w[finite[k]];
    fit.df = detail::support_size(fit.coef) + 1;
    fit.n_sweeps = inner.n_sweeps;
    fit.converged = inner.converged;
    fit.objective = inner.objective;
    PenaltySpec spec{PenaltyKind::kAdaptiveLasso, path[best], 0.0, w};
    return {std::move(spec), std::move(fit)};
  }

  // Lasso and the Elastic Net family share the (lambda1, lambda2) search.
  const bool lasso_only = kind == PenaltyKind::kLasso;
  std::vector<double> l2_values;
  if (lasso_only) {
    l2_values = {0.0};
  } else {
    l2_values = cv.lambda2_grid;
    std::sort(l2_values.begin(), l2_values.end(), std::greater<double>());
    l2_values.erase(std::unique(l2_values.begin(), l2_values.end()), l2_values.end());
  }
  double l_max = lasso_lambda_max(y, Xc);
  if (!(l_max > 0.0)) l_max = 1.0;
  const std::vector<double> path =
      detail::log_spaced_path(l_max, cv.lambda1_min_ratio, cv.n_lambda1);
  const auto folds = detail::build_folds(y, Xc, fold_of, cv.folds);
  const Matrix sse = detail::en_cv_errors(folds, path, l2_values);
  std::size_t best1 = 0, best2 = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t i1 = 0; i1 < path.size(); ++i1) {       // lambda1 descending
    for (std::size_t i2 = 0; i2 < l2_values.size(); ++i2) {  // lambda2 descending
      const double err = sse(static_cast<Eigen::Index>(i1), static_cast<Eigen::Index>(i2));
      if (err < best_err) {
        best_err = err;
        best1 = i1;
        best2 = i2;
      }
    }
  }
  const Fit fit = detail::path_refit(y, Xc, path, best1, l2_values[best2], ctl);
  PenaltySpec spec{lasso_only ? PenaltyKind::kLasso : PenaltyKind::kNaiveEn, path[best1],
                   l2_values[best2]};
  return {std::move(spec), fit};
}

}  // namespace penace
