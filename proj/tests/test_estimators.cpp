#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "penace/penace.hpp"

using namespace penace;

namespace {

FinitePopulation random_population(int n, int p, std::uint64_t seed) {
  Rng rng(seed);
  Vector a(n), b(n);
  Matrix x(n, p);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.normal() + 1.0;
    b[i] = rng.normal();
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
  }
  return make_population(a, b, center_covariates(x));
}

Assignment first_k_treated(int n, int k) {
  std::vector<int> treated(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) treated[static_cast<std::size_t>(i)] = i;
  return make_assignment(treated, n);
}

}  // namespace

TEST_CASE("standard normal quantile matches reference values") {
  using detail::standard_normal_quantile;
  CHECK(standard_normal_quantile(0.5) == 0.0);
  CHECK(standard_normal_quantile(0.975) == Catch::Approx(1.959963984540054).margin(1e-10));
  CHECK(standard_normal_quantile(0.025) == Catch::Approx(-1.959963984540054).margin(1e-10));
  CHECK(standard_normal_quantile(0.995) == Catch::Approx(2.5758293035489004).margin(1e-10));
  CHECK(standard_normal_quantile(0.9) == Catch::Approx(1.2815515655446004).margin(1e-10));
  // round trip through the normal CDF (libm erfc as the independent route)
  for (double prob = 0.0005; prob < 1.0; prob += 0.0124) {
    const double z = standard_normal_quantile(prob);
    const double back = 0.5 * std::erfc(-z / std::sqrt(2.0));
    CHECK(std::abs(back - prob) < 1e-9);
  }
  CHECK_THROWS_AS(standard_normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(standard_normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("make_assignment validates group sizes and indices") {
  CHECK_THROWS_AS(make_assignment({0}, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_assignment({0, 1, 2}, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_assignment({0, 4}, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_assignment({0, 0}, 4), std::invalid_argument);
  const Assignment a = make_assignment({2, 0}, 4);
  CHECK(a.n_A == 2);
  CHECK(a.n_B == 2);
  CHECK(a.treated == std::vector<int>{0, 2});
}

TEST_CASE("observe reveals the right potential outcome") {
  const auto pop = random_population(6, 2, 1);
  const Assignment asg = make_assignment({1, 3, 5}, 6);
  const ObservedExperiment obs = observe(pop, asg);
  for (int i = 0; i < 6; ++i) {
    const bool treated = i % 2 == 1;
    CHECK(obs.y[i] == (treated ? pop.a[i] : pop.b[i]));
  }
}

TEST_CASE("difference_in_means on constant outcomes") {
  const int n = 8;
  const auto pop = make_population(Vector::Ones(n), Vector::Zero(n), Matrix::Zero(n, 1));
  Rng rng(2);
  const Assignment asg = draw_assignment(n, 3, rng);
  const auto est = difference_in_means(observe(pop, asg));
  CHECK(est.tau_hat == 1.0);
  CHECK(est.sigma2_hat == 0.0);
  CHECK(est.ci_low == est.ci_high);
}

TEST_CASE("difference_in_means hand-computed instance") {
  // Y_A = (1,3), Y_B = (0,2): tau = 1, s2_A = s2_B = 2, sigma2 = 2*2 + 2*2 = 8
  const Vector a = (Vector(4) << 1, 3, 0, 0).finished();
  const Vector b = (Vector(4) << 0, 0, 0, 2).finished();
  const auto pop = make_population(a, b, Matrix::Zero(4, 1));
  const Assignment asg = make_assignment({0, 1}, 4);
  const auto est = difference_in_means(observe(pop, asg));
  CHECK(est.tau_hat == Catch::Approx(1.0));
  CHECK(est.sigma2_hat == Catch::Approx(8.0));
  // CI at 95%: tau +/- z sqrt(8/4)
  CHECK(est.ci_high - est.tau_hat ==
        Catch::Approx(1.959963984540054 * std::sqrt(2.0)).margin(1e-9));
}

TEST_CASE("adjusted_ace with zero adjustment equals difference in means") {
  const auto pop = random_population(10, 3, 3);
  Rng rng(4);
  const auto obs = observe(pop, draw_assignment(10, 4, rng));
  const auto unadj = difference_in_means(obs);
  CHECK(adjusted_ace(obs, Vector::Zero(3), Vector::Zero(3)) ==
        Catch::Approx(unadj.tau_hat).margin(1e-14));
}

TEST_CASE("adjusted_ace is invariant to beta under balanced covariates") {
  // two mirrored blocks make both group covariate means exactly zero
  const int n = 8;
  Matrix x(n, 2);
  x << 1, 2, -1, -2, 3, -1, -3, 1, 1, 2, -1, -2, 3, -1, -3, 1;
  Vector a(n), b(n);
  Rng rng(5);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  const auto pop = make_population(a, b, center_covariates(x));
  const Assignment asg = make_assignment({0, 1, 2, 3}, n);
  const auto obs = observe(pop, asg);
  const auto unadj = difference_in_means(obs);
  Rng rng2(6);
  Vector beta_a(2), beta_b(2);
  for (int j = 0; j < 2; ++j) {
    beta_a[j] = rng2.normal();
    beta_b[j] = rng2.normal();
  }
  CHECK(adjusted_ace(obs, beta_a, beta_b) == Catch::Approx(unadj.tau_hat).margin(1e-12));
}

TEST_CASE("adjusted_ace matches an independent arithmetic route") {
  const auto pop = random_population(12, 2, 7);
  Rng rng(8);
  const auto obs = observe(pop, draw_assignment(12, 5, rng));
  Vector beta_a(2), beta_b(2);
  beta_a << 0.3, -1.1;
  beta_b << -0.2, 0.7;
  // second implementation: loop over units, no Eigen reductions
  double ya = 0, yb = 0;
  double xa[2] = {0, 0}, xb[2] = {0, 0};
  int na = 0, nb = 0;
  for (int i = 0; i < 12; ++i) {
    if (obs.is_treated[static_cast<std::size_t>(i)]) {
      ya += obs.y[i];
      for (int j = 0; j < 2; ++j) xa[j] += obs.X(i, j);
      ++na;
    } else {
      yb += obs.y[i];
      for (int j = 0; j < 2; ++j) xb[j] += obs.X(i, j);
      ++nb;
    }
  }
  const double lhs = (ya / na - (xa[0] / na * beta_a[0] + xa[1] / na * beta_a[1])) -
                     (yb / nb - (xb[0] / nb * beta_b[0] + xb[1] / nb * beta_b[1]));
  CHECK(adjusted_ace(obs, beta_a, beta_b) == Catch::Approx(lhs).margin(1e-12));
}

TEST_CASE("enumeration unbiasedness of the unadjusted estimator") {
  const auto pop = random_population(6, 2, 9);
  const double tau = true_ace(pop);
  // exhaustive oracle over all C(6,3) assignments
  std::vector<int> comb = {0, 1, 2};
  long double sum = 0.0L;
  long count = 0;
  for (;;) {
    const auto est = difference_in_means(observe(pop, make_assignment(comb, 6)));
    sum += est.tau_hat;
    ++count;
    int i = 2;
    while (i >= 0 && comb[static_cast<std::size_t>(i)] == 3 + i) --i;
    if (i < 0) break;
    ++comb[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < 3; ++j)
      comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
  }
  CHECK(count == 20);
  CHECK(static_cast<double>(sum / count) == Catch::Approx(tau).margin(1e-12));
}

TEST_CASE("fit_group_adjustments ols has zero-mean residuals per group") {
  const auto pop = random_population(100, 2, 10);
  Rng rng(11);
  const auto obs = observe(pop, draw_assignment(100, 50, rng));
  const auto fits = fit_group_adjustments(obs, PenaltyKind::kOls, CvConfig{});
  const auto ga = detail::group_view(obs, true);
  const auto gb = detail::group_view(obs, false);
  const Vector ra = ga.y_centered - ga.x_centered * fits.fit_a.coef;
  const Vector rb = gb.y_centered - gb.x_centered * fits.fit_b.coef;
  CHECK(std::abs(ra.mean()) < 1e-10);
  CHECK(std::abs(rb.mean()) < 1e-10);
}

TEST_CASE("fit_group_adjustments lasso fits carry a KKT certificate") {
  const auto pop = random_population(60, 8, 12);
  Rng rng(13);
  const auto obs = observe(pop, draw_assignment(60, 30, rng));
  CvConfig cv;
  cv.n_lambda1 = 40;
  const auto fits = fit_group_adjustments(obs, PenaltyKind::kLasso, cv);
  CHECK(fits.fit_a.converged);
  CHECK(fits.fit_b.converged);
  const auto ga = detail::group_view(obs, true);
  const auto gb = detail::group_view(obs, false);
  CHECK(kkt_violation(fits.fit_a, ga.y_centered, ga.x_centered, fits.spec_a.lambda1,
                      fits.spec_a.lambda2) <= 1e-6);
  CHECK(kkt_violation(fits.fit_b, gb.y_centered, gb.x_centered, fits.spec_b.lambda1,
                      fits.spec_b.lambda2) <= 1e-6);
}

TEST_CASE("fit_group_adjustments is symmetric for mirrored groups") {
  // units i and i+4 are identical and a = b, so both groups observe the same
  // (y, X) multiset under the first-half assignment
  const int half = 4;
  Rng rng(14);
  Matrix xh(half, 2);
  Vector vh(half);
  for (int i = 0; i < half; ++i) {
    vh[i] = rng.normal();
    xh(i, 0) = rng.normal();
    xh(i, 1) = rng.normal();
  }
  Matrix x(2 * half, 2);
  x << xh, xh;
  Vector v(2 * half);
  v << vh, vh;
  const auto pop = make_population(v, v, center_covariates(x));
  const Assignment asg = first_k_treated(2 * half, half);
  const auto obs = observe(pop, asg);
  CvConfig cv;
  cv.folds = 2;
  cv.n_lambda1 = 25;
  const auto fits = fit_group_adjustments(obs, PenaltyKind::kLasso, cv);
  CHECK((fits.fit_a.coef - fits.fit_b.coef).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("conservative_variance basics") {
  const auto pop = random_population(20, 2, 15);
  Rng rng(16);
  const auto obs = observe(pop, draw_assignment(20, 10, rng));

  // perfect fit: zero residuals in both groups
  const auto ga = detail::group_view(obs, true);
  const auto gb = detail::group_view(obs, false);
  Fit perfect_a = fit_ols(ga.y_centered, ga.x_centered);
  Fit perfect_b = fit_ols(gb.y_centered, gb.x_centered);
  // overwrite outcomes so the linear fit is exact
  auto pop2 = pop;
  pop2.a = pop.X * perfect_a.coef;
  pop2.b = pop.X * perfect_b.coef;
  const auto obs2 = observe(pop2, make_assignment(obs.treated, 20));
  const auto fits2 = fit_group_adjustments(obs2, PenaltyKind::kOls, CvConfig{});
  CHECK(conservative_variance(obs2, fits2.fit_a, fits2.fit_b, DfRule::kDfAdjusted) ==
        Catch::Approx(0.0).margin(1e-16));

  // beta = 0 with the minus-one rule reduces to the unadjusted variance
  Fit zero_a, zero_b;
  zero_a.coef = Vector::Zero(2);
  zero_b.coef = Vector::Zero(2);
  const auto unadj = difference_in_means(obs);
  CHECK(conservative_variance(obs, zero_a, zero_b, DfRule::kMinusOne) ==
        Catch::Approx(unadj.sigma2_hat).margin(1e-12));
}

TEST_CASE("conservative_variance matches direct arithmetic") {
  const Vector a = (Vector(6) << 1, 2, 3, 0, 0, 0).finished();
  const Vector b = (Vector(6) << 0, 0, 0, 1, 0, 2).finished();
  Matrix x(6, 1);
  x << 1, -1, 2, -2, 0.5, -0.5;
  const auto pop = make_population(a, b, center_covariates(x));
  const auto obs = observe(pop, make_assignment({0, 1, 2}, 6));
  Fit fa, fb;
  fa.coef = (Vector(1) << 0.5).finished();
  fa.df = 2;
  fb.coef = (Vector(1) << -0.25).finished();
  fb.df = 2;
  // direct sums
  double rss_a = 0, rss_b = 0;
  const double ybar_a = (1 + 2 + 3) / 3.0, ybar_b = (1 + 0 + 2) / 3.0;
  const double xbar_a = (1 - 1 + 2) / 3.0, xbar_b = (-2 + 0.5 - 0.5) / 3.0;
  for (int i = 0; i < 3; ++i) {
    const double e = a[i] - ybar_a - (x(i, 0) - xbar_a) * 0.5;
    rss_a += e * e;
  }
  const int ctrl[3] = {3, 4, 5};
  const double yb[3] = {1, 0, 2};
  for (int k = 0; k < 3; ++k) {
    const double e = yb[k] - ybar_b - (x(ctrl[k], 0) - xbar_b) * -0.25;
    rss_b += e * e;
  }
  const double expected = 2.0 * rss_a / (3 - 2) + 2.0 * rss_b / (3 - 2);
  CHECK(conservative_variance(obs, fa, fb, DfRule::kDfAdjusted) ==
        Catch::Approx(expected).margin(1e-12));

  // degenerate df: n_group <= df must raise, not clamp
  fa.df = 3;
  CHECK_THROWS_AS(conservative_variance(obs, fa, fb, DfRule::kDfAdjusted),
                  std::runtime_error);
}

TEST_CASE("population-level conservativeness gap equals var(e_a - e_b)") {
  for (std::uint64_t seed = 20; seed < 24; ++seed) {
    const auto pop = random_population(30, 4, seed);
    const auto d = project_decomposition(pop);
    for (const double p_A : {0.3, 0.5}) {
      const auto tv = theoretical_variances(d, pop, p_A);
      const double limit = tv.sigma2_e_a / p_A + tv.sigma2_e_b / (1.0 - p_A);
      CHECK(limit - tv.sigma2_pen == Catch::Approx(tv.sigma2_e_diff).margin(1e-10));
      CHECK(limit >= tv.sigma2_pen);
    }
  }
}

TEST_CASE("confidence_interval contract") {
  const auto [lo0, hi0] = confidence_interval(1.5, 0.0, 50, 0.95);
  CHECK(lo0 == 1.5);
  CHECK(hi0 == 1.5);
  const auto [lo, hi] = confidence_interval(0.0, 100.0, 100, 0.95);
  CHECK(hi == Catch::Approx(1.959964).margin(5e-7));
  CHECK(lo == Catch::Approx(-1.959964).margin(5e-7));
  // widths scale as sqrt(sigma2)
  const auto [lo1, hi1] = confidence_interval(0.0, 4.0, 10, 0.9);
  const auto [lo4, hi4] = confidence_interval(0.0, 16.0, 10, 0.9);
  CHECK(hi4 - lo4 == Catch::Approx(2.0 * (hi1 - lo1)).margin(1e-12));
  CHECK_THROWS_AS(confidence_interval(0.0, 1.0, 10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(confidence_interval(0.0, -1.0, 10, 0.5), std::invalid_argument);
}

TEST_CASE("estimate_all single unadjusted method") {
  const auto pop = random_population(20, 2, 30);
  Rng rng(31);
  const auto obs = observe(pop, draw_assignment(20, 8, rng));
  const auto outcomes = estimate_all(obs, {Method::kUnadjust}, CvConfig{});
  REQUIRE(outcomes.size() == 1);
  REQUIRE(outcomes[0].estimate.has_value());
  const auto direct = difference_in_means(obs);
  CHECK(outcomes[0].estimate->tau_hat == direct.tau_hat);
  CHECK(outcomes[0].estimate->sigma2_hat == direct.sigma2_hat);
}

TEST_CASE("estimate_all EN with lambda2 grid {0} collapses to the Lasso") {
  const auto pop = random_population(50, 6, 32);
  Rng rng(33);
  const auto obs = observe(pop, draw_assignment(50, 25, rng));
  CvConfig cv;
  cv.lambda2_grid = {0.0};
  cv.n_lambda1 = 40;
  const auto outcomes = estimate_all(obs, {Method::kLasso, Method::kEn}, cv);
  REQUIRE(outcomes[0].estimate.has_value());
  REQUIRE(outcomes[1].estimate.has_value());
  CHECK(outcomes[1].estimate->tau_hat ==
        Catch::Approx(outcomes[0].estimate->tau_hat).margin(1e-8));
  CHECK(outcomes[1].estimate->sigma2_hat ==
        Catch::Approx(outcomes[0].estimate->sigma2_hat).margin(1e-8));
}

TEST_CASE("estimate_all collects per-method failures without aborting") {
  const auto pop = random_population(12, 20, 34);  // p >= group sizes: OLS must fail
  Rng rng(35);
  const auto obs = observe(pop, draw_assignment(12, 6, rng));
  CvConfig cv;
  cv.folds = 3;
  cv.n_lambda1 = 20;
  const auto outcomes = estimate_all(obs, {Method::kOls, Method::kUnadjust}, cv);
  REQUIRE(outcomes.size() == 2);
  CHECK_FALSE(outcomes[0].estimate.has_value());
  CHECK_FALSE(outcomes[0].error.empty());
  CHECK(outcomes[1].estimate.has_value());
}

TEST_CASE("naive EN and EN share the naive fit and differ by the rescale") {
  const auto pop = random_population(60, 5, 36);
  Rng rng(37);
  const auto obs = observe(pop, draw_assignment(60, 30, rng));
  CvConfig cv;
  cv.n_lambda1 = 30;
  cv.lambda2_grid = {0.25};
  const auto outcomes = estimate_all(obs, {Method::kNaiveEn, Method::kEn}, cv);
  REQUIRE(outcomes[0].estimate.has_value());
  REQUIRE(outcomes[1].estimate.has_value());
  const Fit& naive_a = *outcomes[0].estimate->fit_a;
  const Fit& en_a = *outcomes[1].estimate->fit_a;
  CHECK((en_a.coef - 1.25 * naive_a.coef).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(outcomes[0].estimate->df_a == outcomes[1].estimate->df_a);
}

TEST_CASE("method names round trip") {
  for (const Method m : {Method::kUnadjust, Method::kOls, Method::kLasso, Method::kEn,
                         Method::kNaiveEn, Method::kAda, Method::kRidge})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("nope"), std::invalid_argument);
}
