#include "refnut/model.hpp"

#include <array>
#include <sstream>

namespace refnut {

namespace {

std::string fmt(const char* what, double v) {
    std::ostringstream os;
    os << what << " (got " << v << ")";
    return os.str();
}

}  // namespace

void Theta::validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument(fmt("beta must lie in (0,1)", beta));
    if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidArgument(fmt("delta must lie in [0,1]", delta));
    if (!(sigma_eps > 0.0)) throw InvalidArgument(fmt("sigma_eps must be positive", sigma_eps));
    if (!(sigma_eta > 0.0)) throw InvalidArgument(fmt("sigma_eta must be positive", sigma_eta));
    if (!(sigma_iota > 0.0)) throw InvalidArgument(fmt("sigma_iota must be positive", sigma_iota));
    for (int i = 0; i < kSize; ++i)
        if (!std::isfinite(get(i))) throw InvalidArgument(std::string("non-finite ") + name(i));
}

double Theta::get(int i) const {
    switch (i) {
        case 0: return rho;
        case 1: return gamma;
        case 2: return lambda;
        case 3: return delta;
        case 4: return A;
        case 5: return alpha_h0;
        case 6: return alpha_male;
        case 7: return beta;
        case 8: return sigma_eps;
        case 9: return sigma_eta;
        case 10: return sigma_iota;
    }
    throw std::out_of_range("theta index");
}

void Theta::set(int i, double v) {
    switch (i) {
        case 0: rho = v; return;
        case 1: gamma = v; return;
        case 2: lambda = v; return;
        case 3: delta = v; return;
        case 4: A = v; return;
        case 5: alpha_h0 = v; return;
        case 6: alpha_male = v; return;
        case 7: beta = v; return;
        case 8: sigma_eps = v; return;
        case 9: sigma_eta = v; return;
        case 10: sigma_iota = v; return;
    }
    throw std::out_of_range("theta index");
}

const char* Theta::name(int i) {
    static constexpr std::array<const char*, kSize> names = {
        "rho", "gamma", "lambda", "delta", "A", "alpha_h0",
        "alpha_male", "beta", "sigma_eps", "sigma_eta", "sigma_iota"};
    if (i < 0 || i >= kSize) throw std::out_of_range("theta index");
    return names[i];
}

Theta Theta::published(double sigma_r) {
    Theta t;
    t.delta = 0.3756;
    if (sigma_r == 0.5) {
        t.rho = -0.0473; t.gamma = 0.0325; t.lambda = -0.0257;
        t.A = 4.1435; t.alpha_h0 = 0.0220; t.alpha_male = 0.0086; t.beta = 0.0725;
        t.sigma_eps = 0.0097; t.sigma_eta = 0.3823; t.sigma_iota = 0.0427;
    } else if (sigma_r == 1.5) {
        t.rho = -0.0662; t.gamma = 0.0277; t.lambda = -0.0261;
        t.A = 4.1064; t.alpha_h0 = 0.0298; t.alpha_male = 0.0074; t.beta = 0.0752;
        t.sigma_eps = 0.0100; t.sigma_eta = 0.3827; t.sigma_iota = 0.0425;
    } else if (sigma_r == 2.5) {
        t.rho = -0.0712; t.gamma = 0.0317; t.lambda = -0.0348;
        t.A = 4.1040; t.alpha_h0 = 0.0337; t.alpha_male = 0.0074; t.beta = 0.0753;
        t.sigma_eps = 0.0100; t.sigma_eta = 0.3830; t.sigma_iota = 0.0425;
    } else if (sigma_r == 3.5) {
        t.rho = -0.0725; t.gamma = 0.0347; t.lambda = -0.0410;
        t.A = 4.1036; t.alpha_h0 = 0.0344; t.alpha_male = 0.0074; t.beta = 0.0753;
        t.sigma_eps = 0.0100; t.sigma_eta = 0.3830; t.sigma_iota = 0.0425;
    } else {
        throw InvalidArgument(fmt("no published estimates for sigma_r", sigma_r));
    }
    return t;
}

ReferenceBelief::ReferenceBelief(double mu, double sigma) : mu_r(mu), sigma_r(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw InvalidArgument(fmt("reference s.d. must be positive", sigma));
    if (!std::isfinite(mu)) throw InvalidArgument("reference mean must be finite");
}

void MonetaryScale::validate() const {
    if (!(units_per_quetzal > 0.0)) throw InvalidArgument(fmt("units_per_quetzal must be positive", units_per_quetzal));
    if (!(intake_days > 0.0)) throw InvalidArgument(fmt("intake_days must be positive", intake_days));
    if (!(price_grams > 0.0)) throw InvalidArgument(fmt("price_grams must be positive", price_grams));
}

void HouseholdState::validate() const {
    if (!(income_two_year > 0.0)) throw InvalidArgument(fmt("income must be positive", income_two_year));
    if (!(protein_price > 0.0)) throw InvalidArgument(fmt("protein price must be positive", protein_price));
    if (!(belief.sigma_r > 0.0)) throw InvalidArgument(fmt("reference s.d. must be positive", belief.sigma_r));
}

double log_productivity(const Theta& th, const Covariates& x, double eps) {
    return th.A + th.alpha_h0 * x.birth_length + th.alpha_male * x.male + eps;
}

double effective_price(const HouseholdState& s, const Theta& th) {
    return s.atole ? s.protein_price * (1.0 - th.delta) : s.protein_price;
}

double affordable_max(const HouseholdState& s, const Theta& th) {
    double p = effective_price(s, th);
    if (!(p > 0.0)) throw InvalidArgument(fmt("effective price must be positive", p));
    return s.income_two_year / p;
}

double consumption(const HouseholdState& s, const Theta& th, double n) {
    double c = s.income_two_year - effective_price(s, th) * n;
    if (c < 0.0) {
        // Allow a few ulps of slack so that n = affordable_max maps to C = 0.
        if (c < -1e-12 * s.income_two_year)
            throw NegativeConsumption(fmt("intake exceeds the affordable maximum", n));
        c = 0.0;
    }
    return c;
}

double height24(const Theta& th, const Covariates& x, double eps, double n) {
    if (n < 0.0) throw InvalidArgument(fmt("intake must be nonnegative", n));
    if (n == 0.0) return 0.0;
    return std::exp(log_productivity(th, x, eps)) * std::pow(n, th.beta);
}

double ref_gain_expectation(double h, const ReferenceBelief& b) {
    double d = h - b.mu_r;
    double z = d / b.sigma_r;
    return d * norm_cdf(z) + b.sigma_r * norm_pdf(z);
}

UtilityKernel::UtilityKernel(const HouseholdState& s, const Theta& th)
    : Y(s.income_two_year),
      p(effective_price(s, th)),
      a_hat(std::exp(log_productivity(th, s.covariates, s.eps))),
      beta(th.beta),
      rho(th.rho),
      gamma(th.gamma),
      lambda(th.lambda),
      mu(s.belief.mu_r),
      sigma(s.belief.sigma_r),
      n_max(affordable_max(s, th)) {}

double UtilityKernel::ref_gain(double h) const {
    double d = h - mu;
    double z = d / sigma;
    return d * norm_cdf(z) + sigma * norm_pdf(z);
}

double expected_utility(const HouseholdState& s, const Theta& th, double n) {
    consumption(s, th, n);  // range check
    if (n < 0.0) throw InvalidArgument(fmt("intake must be nonnegative", n));
    return UtilityKernel(s, th)(n);
}

double marginal_cost(const HouseholdState& s, const Theta& th, double n) {
    double p = effective_price(s, th);
    return p + 2.0 * th.rho * p * s.income_two_year - 2.0 * th.rho * p * p * n;
}

double marginal_benefit(const HouseholdState& s, const Theta& th, double n) {
    double a_hat = std::exp(log_productivity(th, s.covariates, s.eps));
    double h = a_hat * std::pow(n, th.beta);
    double z = (h - s.belief.mu_r) / s.belief.sigma_r;
    return th.beta * a_hat * std::pow(n, th.beta - 1.0) * (th.gamma + th.lambda * norm_cdf(z));
}

}  // namespace refnut
