#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "refnut/model.hpp"

using namespace refnut;

namespace {

HouseholdState raw_state(double Y, double p, bool atole) {
    HouseholdState s;
    s.income_two_year = Y;
    s.protein_price = p;
    s.atole = atole;
    s.belief = ReferenceBelief(77.0, 1.0);
    return s;
}

// Adaptive Simpson on [a, b].
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 60);
}

// E[(h - R)^+] for R ~ N(mu, sigma^2) by direct integration over R.
double gain_by_quadrature(double h, double mu, double sigma) {
    double lo = mu - 14.0 * sigma;
    if (h <= lo) return 0.0;
    auto f = [&](double r) {
        double z = (r - mu) / sigma;
        return (h - r) * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
    };
    return integrate(f, lo, h, 1e-14);
}

Theta baseline_theta() { return Theta::published(0.5); }

HouseholdState typical_state() {
    HouseholdState s;
    s.income_two_year = 1.03;
    s.protein_price = 52.58 * 0.001 * 730.0 / 10000.0;
    s.atole = false;
    s.covariates = {0.3, 1};
    s.eps = 0.004;
    s.belief = ReferenceBelief(77.5, 1.5);
    return s;
}

}  // namespace

TEST_CASE("normal cdf and pdf against high-precision values") {
    CHECK(norm_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
    CHECK(norm_cdf(-3.0) == doctest::Approx(0.0013498980316300946).epsilon(1e-13));
    CHECK(norm_cdf(0.0) == 0.5);
    CHECK(norm_pdf(0.0) * 0.5 == doctest::Approx(0.19947114020071634).epsilon(1e-15));
}

TEST_CASE("consumption follows the budget identity") {
    Theta th;
    th.delta = 0.5;
    CHECK(consumption(raw_state(1000, 50, false), th, 0.0) == 1000.0);
    CHECK(consumption(raw_state(1000, 50, true), th, 10.0) == 750.0);
    CHECK(consumption(raw_state(1000, 50, false), th, 20.0) == 0.0);
    CHECK_THROWS_AS(consumption(raw_state(1000, 50, false), th, 20.5), NegativeConsumption);
}

TEST_CASE("affordable maximum") {
    Theta th;
    th.delta = 0.5;
    CHECK(affordable_max(raw_state(1000, 50, false), th) == 20.0);
    CHECK(affordable_max(raw_state(1000, 50, true), th) == 40.0);
    th.delta = 0.0;
    CHECK(affordable_max(raw_state(1000, 50, true), th) == affordable_max(raw_state(1000, 50, false), th));
    th.delta = 1.0;
    CHECK_THROWS_AS(affordable_max(raw_state(1000, 50, true), th), InvalidArgument);
}

TEST_CASE("month-24 height production") {
    Theta th = baseline_theta();
    Covariates x{0.0, 1};
    // exp(4.1435 + 0.0086) * 22.54^0.0725 evaluated to 40 digits.
    CHECK(height24(th, x, 0.0, 22.54) == doctest::Approx(79.67522102440896).epsilon(1e-14));
    CHECK(height24(th, x, 0.013, 0.0) == 0.0);
    double h1 = height24(th, x, 0.01, 13.0), h2 = height24(th, x, 0.01, 26.0);
    CHECK(h2 / h1 == doctest::Approx(std::pow(2.0, th.beta)).epsilon(1e-14));
}

TEST_CASE("expected reference gain closed form") {
    CHECK(ref_gain_expectation(77.0, ReferenceBelief(77.0, 0.5)) ==
          doctest::Approx(0.5 / std::sqrt(2.0 * M_PI)).epsilon(1e-15));
    CHECK(ref_gain_expectation(82.0, ReferenceBelief(77.0, 0.5)) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_THROWS_AS(ReferenceBelief(77.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(ReferenceBelief(77.0, -1.0), InvalidArgument);
}

TEST_CASE("expected reference gain matches a Monte Carlo average") {
    const double h = 78.0, mu = 77.0, sigma = 3.5;
    std::mt19937_64 eng(90210);
    std::normal_distribution<double> nd(mu, sigma);
    const int n = 1000000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
        double r = nd(eng);
        double g = h > r ? h - r : 0.0;
        s += g;
        ss += g * g;
    }
    double mean = s / n;
    double se = std::sqrt((ss / n - mean * mean) / n);
    CHECK(std::abs(ref_gain_expectation(h, ReferenceBelief(mu, sigma)) - mean) < 3.0 * se);
}

TEST_CASE("expected reference gain matches quadrature over the reference point") {
    const double cases[][3] = {{78.0, 77.0, 3.5}, {75.0, 77.0, 0.5}, {77.2, 77.0, 0.25}, {70.0, 80.0, 4.0},
                               {81.0, 76.0, 1.5}};
    for (const auto& c : cases) {
        double q = gain_by_quadrature(c[0], c[1], c[2]);
        double v = ref_gain_expectation(c[0], ReferenceBelief(c[1], c[2]));
        CHECK(v == doctest::Approx(q).epsilon(1e-8));
    }
}

TEST_CASE("expected utility agrees with a quadrature oracle") {
    Theta th = baseline_theta();
    HouseholdState s = typical_state();
    for (double n : {5.0, 12.0, 19.0, 30.0}) {
        double c = consumption(s, th, n);
        double h = height24(th, s.covariates, s.eps, n);
        double oracle = c + th.rho * c * c + th.gamma * h +
                        th.lambda * gain_by_quadrature(h, s.belief.mu_r, s.belief.sigma_r);
        CHECK(expected_utility(s, th, n) == doctest::Approx(oracle).epsilon(1e-8));
    }
}

TEST_CASE("utility reduces to its linear parts") {
    Theta th = baseline_theta();
    HouseholdState s = typical_state();
    Theta lin = th;
    lin.lambda = 0.0;
    lin.rho = 0.0;
    double n = 17.0;
    double c = consumption(s, lin, n), h = height24(lin, s.covariates, s.eps, n);
    CHECK(expected_utility(s, lin, n) == doctest::Approx(c + lin.gamma * h).epsilon(1e-15));

    Theta no_ref = th;
    no_ref.lambda = 0.0;
    double full = expected_utility(s, th, n);
    double gain = ref_gain_expectation(height24(th, s.covariates, s.eps, n), s.belief);
    CHECK(expected_utility(s, no_ref, n) == doctest::Approx(full - th.lambda * gain).epsilon(1e-13));
}

TEST_CASE("marginal cost and benefit match finite differences of utility") {
    Theta th = baseline_theta();
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        HouseholdState s = typical_state();
        s.income_two_year = 0.3 + 2.0 * u(eng);
        s.atole = u(eng) < 0.5;
        s.belief = ReferenceBelief(74.0 + 8.0 * u(eng), 0.3 + 3.5 * u(eng));
        double nmax = affordable_max(s, th);
        double n = nmax * (0.05 + 0.05 * u(eng));
        const double step = 1e-4;
        double fd = (expected_utility(s, th, n + step) - expected_utility(s, th, n - step)) / (2.0 * step);
        double analytic = marginal_benefit(s, th, n) - marginal_cost(s, th, n);
        // Split the utility derivative into its budget part and its height part.
        Theta budget_only = th;
        budget_only.gamma = 0.0;
        budget_only.lambda = 0.0;
        double fd_c = (expected_utility(s, budget_only, n + step) - expected_utility(s, budget_only, n - step)) /
                      (2.0 * step);
        CHECK(-fd_c == doctest::Approx(marginal_cost(s, th, n)).epsilon(1e-5));
        CHECK(fd == doctest::Approx(analytic).epsilon(1e-5).scale(marginal_cost(s, th, n)));
        CHECK(fd - fd_c == doctest::Approx(marginal_benefit(s, th, n)).epsilon(1e-5));
    }
}

TEST_CASE("marginal cost without curvature is the price") {
    Theta th = baseline_theta();
    th.rho = 0.0;
    HouseholdState s = typical_state();
    for (double n : {0.0, 5.0, 40.0}) CHECK(marginal_cost(s, th, n) == s.protein_price);
}

TEST_CASE("marginal benefit with a diffuse reference belief") {
    Theta th = baseline_theta();
    HouseholdState s = typical_state();
    s.belief = ReferenceBelief(s.belief.mu_r, 1e9);
    double n = 20.0;
    double a_hat = std::exp(log_productivity(th, s.covariates, s.eps));
    double limit = th.beta * a_hat * std::pow(n, th.beta - 1.0) * (th.gamma + 0.5 * th.lambda);
    CHECK(marginal_benefit(s, th, n) == doctest::Approx(limit).epsilon(1e-8));
}

TEST_CASE("reference gain properties") {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        double mu = 70.0 + 15.0 * u(eng), sigma = 0.25 + 4.0 * u(eng);
        double h = mu + (u(eng) - 0.5) * 6.0 * sigma;
        ReferenceBelief b(mu, sigma);
        double g = ref_gain_expectation(h, b);
        CHECK(g >= std::max(0.0, h - mu));
        const double step = 1e-5;
        double d = (ref_gain_expectation(h + step, b) - ref_gain_expectation(h - step, b)) / (2.0 * step);
        CHECK(d == doctest::Approx(norm_cdf((h - mu) / sigma)).epsilon(1e-6));
        CHECK(d > 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("sign of the sigma_R derivative of marginal height value") {
    Theta th = baseline_theta();
    std::mt19937_64 eng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
        double lambda = (u(eng) - 0.5) * 0.1;
        double h = 72.0 + 10.0 * u(eng), mu = 72.0 + 10.0 * u(eng), sigma = 0.5 + 3.0 * u(eng);
        if (std::abs(h - mu) < 1e-3 || lambda == 0.0) continue;
        auto w = [&](double s) { return th.gamma + lambda * norm_cdf((h - mu) / s); };
        const double step = 1e-5;
        double fd = (w(sigma + step) - w(sigma - step)) / (2.0 * step);
        double formula = -lambda * (h - mu) / (sigma * sigma) * norm_pdf((h - mu) / sigma);
        CHECK(fd == doctest::Approx(formula).epsilon(1e-5).scale(1e-6));
        if (std::abs(formula) > 1e-12) CHECK((formula > 0) == (-lambda * (h - mu) > 0));
    }
}

TEST_CASE("utility gradient is continuous where height meets the reference mean") {
    Theta th = baseline_theta();
    HouseholdState s = typical_state();
    s.belief = ReferenceBelief(77.5, 0.25);
    double a_hat = std::exp(log_productivity(th, s.covariates, s.eps));
    double n_star = std::pow(s.belief.mu_r / a_hat, 1.0 / th.beta);
    auto g = [&](double n) { return marginal_benefit(s, th, n) - marginal_cost(s, th, n); };
    for (double d : {1e-4, 1e-6, 1e-8}) {
        double jump = std::abs(g(n_star * (1.0 + d)) - g(n_star * (1.0 - d)));
        CHECK(jump < 1e-2 * d * std::abs(g(n_star)) / 1e-4 + 1e-12);
    }
}

TEST_CASE("published parameter sets") {
    for (double sr : {0.5, 1.5, 2.5, 3.5}) CHECK(Theta::published(sr).lambda < 0.0);
    CHECK(Theta::published(0.5).gamma + Theta::published(0.5).lambda > 0.0);
    Theta th = Theta::published(0.5);
    CHECK(th.rho == -0.0473);
    CHECK(th.delta == 0.3756);
    CHECK(th.sigma_eta == 0.3823);
    CHECK_THROWS_AS(Theta::published(0.7), InvalidArgument);
}

TEST_CASE("parameter validation") {
    Theta th = baseline_theta();
    th.beta = 1.0;
    CHECK_THROWS_AS(th.validate(), InvalidArgument);
    th = baseline_theta();
    th.delta = -0.1;
    CHECK_THROWS_AS(th.validate(), InvalidArgument);
    th = baseline_theta();
    th.sigma_eta = 0.0;
    CHECK_THROWS_AS(th.validate(), InvalidArgument);
    for (int i = 0; i < Theta::kSize; ++i) {
        Theta a = baseline_theta();
        a.set(i, a.get(i));
        CHECK(std::string(Theta::name(i)).size() > 0);
    }
}

TEST_CASE("covariate scaling round trip") {
    CovariateScaling sc;
    CHECK(sc.apply(sc.center) == 0.0);
    CHECK(sc.invert(sc.apply(51.3)) == doctest::Approx(51.3).epsilon(1e-15));
    sc.mode = CovariateScaling::Mode::DemeanedCm;
    CHECK(sc.apply(51.64) == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("monetary scale") {
    MonetaryScale m;
    CHECK(m.income(1000.0) == doctest::Approx(1.0));
    CHECK(m.price(52.58) == doctest::Approx(52.58 * 0.073 * 0.001).epsilon(1e-14));
}
