#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "penace/population.hpp"
#include "penace/solvers.hpp"

namespace penace {

enum class Method { kUnadjust, kOls, kLasso, kEn, kNaiveEn, kAda, kRidge };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kUnadjust: return "unadjust";
    case Method::kOls: return "OLS";
    case Method::kLasso: return "Lasso";
    case Method::kEn: return "EN";
    case Method::kNaiveEn: return "naiveEN";
    case Method::kAda: return "Ada";
    case Method::kRidge: return "Ridge";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  std::string low;
  for (const char c : s) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (low == "unadjust" || low == "unadjusted") return Method::kUnadjust;
  if (low == "ols") return Method::kOls;
  if (low == "lasso") return Method::kLasso;
  if (low == "en") return Method::kEn;
  if (low == "naiveen" || low == "naive_en") return Method::kNaiveEn;
  if (low == "ada" || low == "adaptive" || low == "adaptive_lasso") return Method::kAda;
  if (low == "ridge") return Method::kRidge;
  throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

/// Completely randomized design: a fixed-size treated subset.
struct Assignment {
  std::vector<int> treated;  // sorted, unique, 0-based
  int n_A = 0;
  int n_B = 0;
  int n = 0;
};

inline Assignment make_assignment(std::vector<int> treated, int n) {
  Assignment a;
  a.n = n;
  a.n_A = static_cast<int>(treated.size());
  a.n_B = n - a.n_A;
  if (a.n_A < 2 || a.n_B < 2)
    throw std::invalid_argument("make_assignment: need 2 <= n_A <= n-2");
  std::sort(treated.begin(), treated.end());
  for (std::size_t k = 0; k < treated.size(); ++k) {
    if (treated[k] < 0 || treated[k] >= n)
      throw std::invalid_argument("make_assignment: index out of range");
    if (k > 0 && treated[k] == treated[k - 1])
      throw std::invalid_argument("make_assignment: duplicate index");
  }
  a.treated = std::move(treated);
  return a;
}

/// What the experimenter sees: revealed outcomes, the treated set, and the
/// population-centered covariates. Potential outcomes are not retained.
struct ObservedExperiment {
  Vector y;
  std::vector<int> treated;      // sorted
  std::vector<char> is_treated;  // n flags
  Matrix X;                      // n x p, column-centered at population means
  int n_A = 0;
  int n_B = 0;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
};

/// Reveals Y_i = a_i for treated units and b_i otherwise.
inline ObservedExperiment observe(const FinitePopulation& pop, const Assignment& asg) {
  if (asg.n != pop.n()) throw std::invalid_argument("observe: assignment size mismatch");
  ObservedExperiment obs;
  obs.treated = asg.treated;
  obs.is_treated.assign(static_cast<std::size_t>(asg.n), 0);
  for (const int i : asg.treated) obs.is_treated[static_cast<std::size_t>(i)] = 1;
  obs.y.resize(pop.n());
  for (Eigen::Index i = 0; i < pop.n(); ++i)
    obs.y[i] = obs.is_treated[static_cast<std::size_t>(i)] ? pop.a[i] : pop.b[i];
  obs.X = pop.X;
  obs.n_A = asg.n_A;
  obs.n_B = asg.n_B;
  return obs;
}

namespace detail {

/// AS241 (Wichura): rational approximation of the standard normal quantile,
/// |error| far below the 1e-9 contract. Fixed arithmetic only, so CI widths
/// are reproducible everywhere.
inline double standard_normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0))
    throw std::invalid_argument("standard_normal_quantile: p must lie in (0,1)");
  const double q = prob - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        q * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                  67265.770927008700853) * r + 45921.953931549871457) * r +
                13731.693765509461125) * r + 1971.5909503065514427) * r +
              133.14166789178437745) * r + 3.387132872796366608);
    const double den =
        ((((((5226.495278852545703 * r + 28729.085735721942674) * r +
             39307.89580009271061) * r + 21213.794301586595867) * r +
           5394.1960214247511077) * r + 687.1870074920579083) * r +
         42.313330701600911252) * r + 1.0;
    return num / den;
  }
  double r = q < 0.0 ? prob : 1.0 - prob;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
             0.24178072517745061177) * r + 1.27045825245236838258) * r +
           3.64784832476320460504) * r + 5.7694972214606914055) * r +
         4.6303378461565452959) * r + 1.42343711074968357734;
    const double den =
        ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
             0.0151986665636164571966) * r + 0.14810397642748007459) * r +
           0.68976733498510000455) * r + 1.6763848301838038494) * r +
         2.05319162663775882187) * r + 1.0;
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
             0.0012426609473880784386) * r + 0.026532189526576123093) * r +
           0.29656057182850489123) * r + 1.7848265399172913358) * r +
         5.4637849111641143699) * r + 6.6579046435011037772;
    const double den =
        ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
             1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
           0.0148753612908506148525) * r + 0.13692988092273580531) * r +
         0.59983220655588793769) * r + 1.0;
    val = num / den;
  }
  return q < 0.0 ? -val : val;
}

struct GroupView {
  Vector y;        // raw outcomes of the group
  Matrix x;        // group rows of X (population-centered)
  double y_mean = 0.0;
  Eigen::RowVectorXd x_mean;
  Vector y_centered;    // y - y_mean
  Matrix x_centered;    // rows minus group covariate means
};

inline GroupView group_view(const ObservedExperiment& obs, bool treated_group) {
  const int size = treated_group ? obs.n_A : obs.n_B;
  GroupView g;
  g.y.resize(size);
  g.x.resize(size, obs.p());
  int k = 0;
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    if ((obs.is_treated[static_cast<std::size_t>(i)] != 0) == treated_group) {
      g.y[k] = obs.y[i];
      g.x.row(k) = obs.X.row(i);
      ++k;
    }
  }
  g.y_mean = g.y.mean();
  g.x_mean = g.x.colwise().mean();
  g.y_centered = g.y.array() - g.y_mean;
  g.x_centered = g.x.rowwise() - g.x_mean;
  return g;
}

}  // namespace detail

/// Point estimate, conservative variance of sqrt(n)(tau_hat - tau), and the
/// normal confidence interval.
struct AceEstimate {
  Method method = Method::kUnadjust;
  double tau_hat = 0.0;
  double sigma2_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int df_a = 0;
  int df_b = 0;
  std::optional<Fit> fit_a;
  std::optional<Fit> fit_b;
};

/// tau_hat +/- z_{(1+level)/2} sqrt(sigma2_hat / n).
inline std::pair<double, double> confidence_interval(double tau_hat, double sigma2_hat,
                                                     Eigen::Index n, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("confidence_interval: level must lie in (0,1)");
  if (sigma2_hat < 0.0)
    throw std::invalid_argument("confidence_interval: negative variance");
  const double z = detail::standard_normal_quantile(0.5 * (1.0 + level));
  const double half = z * std::sqrt(sigma2_hat / static_cast<double>(n));
  return {tau_hat - half, tau_hat + half};
}

/// Ybar_A - Ybar_B with the Neyman conservative variance
/// (n/n_A) s2_A + (n/n_B) s2_B (group sample variances).
inline AceEstimate difference_in_means(const ObservedExperiment& obs, double ci_level = 0.95) {
  if (obs.n_A < 2 || obs.n_B < 2)
    throw std::invalid_argument("difference_in_means: each group needs >= 2 units");
  const auto ga = detail::group_view(obs, true);
  const auto gb = detail::group_view(obs, false);
  AceEstimate est;
  est.method = Method::kUnadjust;
  est.tau_hat = ga.y_mean - gb.y_mean;
  const double n = static_cast<double>(obs.n());
  est.sigma2_hat = n / obs.n_A * variance(ga.y) + n / obs.n_B * variance(gb.y);
  std::tie(est.ci_low, est.ci_high) = confidence_interval(est.tau_hat, est.sigma2_hat,
                                                          obs.n(), ci_level);
  return est;
}

/// [Ybar_A - xbar_A' beta_a] - [Ybar_B - xbar_B' beta_b]; the population
/// covariate mean is zero by centering.
inline double adjusted_ace(const ObservedExperiment& obs, const Vector& beta_a_hat,
                           const Vector& beta_b_hat) {
  if (beta_a_hat.size() != obs.p() || beta_b_hat.size() != obs.p())
    throw std::invalid_argument("adjusted_ace: coefficient length mismatch");
  const auto ga = detail::group_view(obs, true);
  const auto gb = detail::group_view(obs, false);
  return (ga.y_mean - ga.x_mean * beta_a_hat) - (gb.y_mean - gb.x_mean * beta_b_hat);
}

/// Group fits plus the penalty specs that produced them (the spec carries the
/// selected tuning parameters, which the EN rescaling needs).
struct GroupFits {
  Fit fit_a;
  Fit fit_b;
  PenaltySpec spec_a;
  PenaltySpec spec_b;
};

namespace detail {

inline std::pair<PenaltySpec, Fit> fit_one_group(const GroupView& g, PenaltyKind kind,
                                                 const CvConfig& cv, bool standardize) {
  switch (kind) {
    case PenaltyKind::kOls:
      return {PenaltySpec{PenaltyKind::kOls}, fit_ols(g.y_centered, g.x_centered)};
    case PenaltyKind::kRidge:
    case PenaltyKind::kLasso:
      return cross_validate(g.y_centered, g.x_centered, kind, cv, nullptr, standardize);
    case PenaltyKind::kNaiveEn:
    case PenaltyKind::kEn: {
      auto [spec, naive] = cross_validate(g.y_centered, g.x_centered, PenaltyKind::kNaiveEn,
                                          cv, nullptr, standardize);
      if (kind == PenaltyKind::kEn) {
        spec.kind = PenaltyKind::kEn;
        return {spec, rescale_en(naive, spec.lambda2)};
      }
      return {spec, naive};
    }
    case PenaltyKind::kAdaptiveLasso: {
      const auto m = g.y_centered.size();
      Fit initial;
      if (g.x_centered.cols() < m / 2) {
        initial = fit_ols(g.y_centered, g.x_centered);
      } else {
        initial = cross_validate(g.y_centered, g.x_centered, PenaltyKind::kLasso, cv,
                                 nullptr, standardize)
                      .second;
      }
      const Vector w = adaptive_weights(initial);
      return cross_validate(g.y_centered, g.x_centered, PenaltyKind::kAdaptiveLasso, cv, &w,
                            standardize);
    }
  }
  throw std::logic_error("fit_one_group: unreachable");
}

}  // namespace detail

/// Regresses group-centered Y on group-centered X within A and within B
/// independently, each with its own cross-validated tuning.
inline GroupFits fit_group_adjustments(const ObservedExperiment& obs, PenaltyKind kind,
                                       const CvConfig& cv, bool standardize = false) {
  GroupFits out;
  const auto ga = detail::group_view(obs, true);
  const auto gb = detail::group_view(obs, false);
  try {
    std::tie(out.spec_a, out.fit_a) = detail::fit_one_group(ga, kind, cv, standardize);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("group A: ") + e.what());
  }
  try {
    std::tie(out.spec_b, out.fit_b) = detail::fit_one_group(gb, kind, cv, standardize);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("group B: ") + e.what());
  }
  return out;
}

/// Degrees-of-freedom rule for the residual-sum-of-squares variance estimate.
enum class DfRule {
  kDfAdjusted,  // the fit's df: ||coef||_0 + 1, or p+1 for ols
  kUnadjusted,  // 0, the variant without degree-of-freedom adjustment
  kMinusOne,    // 1, used for Ridge
};

/// (n/n_A) RSS_A/(n_A - d_A) + (n/n_B) RSS_B/(n_B - d_B) with residuals taken
/// against the group means and the supplied adjustment vectors.
inline double conservative_variance(const ObservedExperiment& obs, const Fit& fit_a,
                                    const Fit& fit_b, DfRule rule) {
  const auto ga = detail::group_view(obs, true);
  const auto gb = detail::group_view(obs, false);
  const auto one_group = [&](const detail::GroupView& g, const Fit& fit) {
    const double d = rule == DfRule::kDfAdjusted ? fit.df
                     : rule == DfRule::kMinusOne ? 1.0
                                                 : 0.0;
    const double m = static_cast<double>(g.y.size());
    if (!(m - d > 0.0))
      throw std::runtime_error("conservative_variance: degenerate degrees of freedom (n_group <= df)");
    const Vector resid = g.y_centered - g.x_centered * fit.coef;
    return resid.squaredNorm() / (m - d);
  };
  const double n = static_cast<double>(obs.n());
  return n / obs.n_A * one_group(ga, fit_a) + n / obs.n_B * one_group(gb, fit_b);
}

/// One estimator's outcome within a replication; failures carry a message
/// instead of aborting the other methods.
struct MethodOutcome {
  Method method = Method::kUnadjust;
  std::optional<AceEstimate> estimate;
  std::string error;
};

namespace detail {

inline AceEstimate assemble_adjusted(const ObservedExperiment& obs, Method method,
                                     const GroupFits& fits, DfRule rule, double ci_level) {
  AceEstimate est;
  est.method = method;
  est.tau_hat = adjusted_ace(obs, fits.fit_a.coef, fits.fit_b.coef);
  est.sigma2_hat = conservative_variance(obs, fits.fit_a, fits.fit_b, rule);
  std::tie(est.ci_low, est.ci_high) =
      confidence_interval(est.tau_hat, est.sigma2_hat, obs.n(), ci_level);
  est.df_a = fits.fit_a.df;
  est.df_b = fits.fit_b.df;
  est.fit_a = fits.fit_a;
  est.fit_b = fits.fit_b;
  return est;
}

}  // namespace detail

/// Runs every requested estimator on one observed experiment. The naive and
/// rescaled Elastic Net share one cross-validated naive fit; the adaptive
/// Lasso reuses the Lasso CV fit as its initial estimator in high dimension.
inline std::vector<MethodOutcome> estimate_all(const ObservedExperiment& obs,
                                               const std::vector<Method>& methods,
                                               const CvConfig& cv, double ci_level = 0.95,
                                               bool standardize = false) {
  std::optional<GroupFits> naive_en_fits;  // shared by naiveEN and EN
  std::optional<GroupFits> lasso_fits;     // shared by Lasso and Ada's initial stage
  const auto naive_en = [&]() -> const GroupFits& {
    if (!naive_en_fits)
      naive_en_fits = fit_group_adjustments(obs, PenaltyKind::kNaiveEn, cv, standardize);
    return *naive_en_fits;
  };
  const auto lasso = [&]() -> const GroupFits& {
    if (!lasso_fits)
      lasso_fits = fit_group_adjustments(obs, PenaltyKind::kLasso, cv, standardize);
    return *lasso_fits;
  };

  std::vector<MethodOutcome> out;
  out.reserve(methods.size());
  for (const Method method : methods) {
    MethodOutcome mo;
    mo.method = method;
    try {
      switch (method) {
        case Method::kUnadjust:
          mo.estimate = difference_in_means(obs, ci_level);
          break;
        case Method::kOls: {
          const auto fits = fit_group_adjustments(obs, PenaltyKind::kOls, cv, standardize);
          mo.estimate = detail::assemble_adjusted(obs, method, fits, DfRule::kDfAdjusted,
                                                  ci_level);
          break;
        }
        case Method::kLasso:
          mo.estimate = detail::assemble_adjusted(obs, method, lasso(),
                                                  DfRule::kDfAdjusted, ci_level);
          break;
        case Method::kNaiveEn:
          mo.estimate = detail::assemble_adjusted(obs, method, naive_en(),
                                                  DfRule::kDfAdjusted, ci_level);
          break;
        case Method::kEn: {
          GroupFits en = naive_en();
          en.fit_a = rescale_en(en.fit_a, en.spec_a.lambda2);
          en.fit_b = rescale_en(en.fit_b, en.spec_b.lambda2);
          en.spec_a.kind = en.spec_b.kind = PenaltyKind::kEn;
          mo.estimate =
              detail::assemble_adjusted(obs, method, en, DfRule::kDfAdjusted, ci_level);
          break;
        }
        case Method::kAda: {
          GroupFits fits;
          const auto ga = detail::group_view(obs, true);
          const auto gb = detail::group_view(obs, false);
          const auto fit_ada = [&](const detail::GroupView& g, const Fit* lasso_init) {
            Fit initial;
            if (g.x_centered.cols() < g.y.size() / 2)
              initial = fit_ols(g.y_centered, g.x_centered);
            else
              initial = lasso_init ? *lasso_init
                                   : cross_validate(g.y_centered, g.x_centered,
                                                    PenaltyKind::kLasso, cv, nullptr,
                                                    standardize)
                                         .second;
            const Vector w = adaptive_weights(initial);
            return cross_validate(g.y_centered, g.x_centered, PenaltyKind::kAdaptiveLasso,
                                  cv, &w, standardize);
          };
          const bool high_dim_a = ga.x_centered.cols() >= ga.y.size() / 2;
          const bool high_dim_b = gb.x_centered.cols() >= gb.y.size() / 2;
          try {
            std::tie(fits.spec_a, fits.fit_a) =
                fit_ada(ga, high_dim_a ? &lasso().fit_a : nullptr);
          } catch (const std::exception& e) {
            throw std::runtime_error(std::string("group A: ") + e.what());
          }
          try {
            std::tie(fits.spec_b, fits.fit_b) =
                fit_ada(gb, high_dim_b ? &lasso().fit_b : nullptr);
          } catch (const std::exception& e) {
            throw std::runtime_error(std::string("group B: ") + e.what());
          }
          mo.estimate =
              detail::assemble_adjusted(obs, method, fits, DfRule::kDfAdjusted, ci_level);
          break;
        }
        case Method::kRidge: {
          const auto fits =
              fit_group_adjustments(obs, PenaltyKind::kRidge, cv, standardize);
          mo.estimate =
              detail::assemble_adjusted(obs, method, fits, DfRule::kMinusOne, ci_level);
          break;
        }
      }
    } catch (const std::exception& e) {
      mo.estimate.reset();
      mo.error = e.what();
    }
    out.push_back(std::move(mo));
  }
  return out;
}

}  // namespace penace
