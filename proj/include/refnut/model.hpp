#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace refnut {

// Base for every error that should surface as a domain failure (CLI exit 1).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : DomainError {
    using DomainError::DomainError;
};

struct NegativeConsumption : DomainError {
    using DomainError::DomainError;
};

struct Theta {
    double rho = 0.0;
    double gamma = 0.0;
    double lambda = 0.0;
    double delta = 0.0;
    double A = 0.0;
    double alpha_h0 = 0.0;
    double alpha_male = 0.0;
    double beta = 0.5;
    double sigma_eps = 0.01;
    double sigma_eta = 0.1;
    double sigma_iota = 0.01;

    static constexpr int kSize = 11;

    // Mean of the log measurement errors, chosen so e^eta and e^iota have unit mean.
    double mu_eta() const { return -0.5 * sigma_eta * sigma_eta; }
    double mu_iota() const { return -0.5 * sigma_iota * sigma_iota; }

    void validate() const;

    double get(int i) const;
    void set(int i, double v);
    static const char* name(int i);

    // Published estimates, keyed by the reference-point s.d. they were obtained under.
    static Theta published(double sigma_r);
};

// Birth length enters the production function after centring and optional scaling.
// Birth length enters as (cm - center) / scale. The default scale is set so that simulated
// month-24 height dispersion and the Atole price effect match the published cohort tables.
struct CovariateScaling {
    enum class Mode { DemeanedCm, Scaled };
    Mode mode = Mode::Scaled;
    double center = 49.64;
    double scale = 5.24;

    double apply(double raw_cm) const {
        return mode == Mode::DemeanedCm ? raw_cm - center : (raw_cm - center) / scale;
    }
    double invert(double v) const {
        return mode == Mode::DemeanedCm ? v + center : v * scale + center;
    }
};

struct Covariates {
    double birth_length = 0.0;  // already transformed by CovariateScaling
    int male = 0;
};

struct ReferenceBelief {
    double mu_r = 0.0;
    double sigma_r = 1.0;

    ReferenceBelief() = default;
    ReferenceBelief(double mu, double sigma);
};

// Converts raw quetzale amounts into the units the utility function is defined on.
struct MonetaryScale {
    double units_per_quetzal = 0.001;
    // Prices are quoted per 10k grams; intake N is g/day sustained over a two-year period.
    double intake_days = 730.0;
    double price_grams = 10000.0;

    double income(double quetzales) const { return quetzales * units_per_quetzal; }
    double price(double quetzales_per_10kg) const {
        return quetzales_per_10kg * units_per_quetzal * intake_days / price_grams;
    }
    void validate() const;
};

struct HouseholdState {
    double income_two_year = 0.0;  // scaled monetary units
    double protein_price = 0.0;    // scaled monetary units per unit of N
    bool atole = false;
    Covariates covariates;
    double eps = 0.0;
    ReferenceBelief belief;

    void validate() const;
};

inline double norm_pdf(double z) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double norm_cdf(double z) {
    return 0.5 * std::erfc(-z * 0.70710678118654752440);
}

double log_productivity(const Theta& th, const Covariates& x, double eps);

double effective_price(const HouseholdState& s, const Theta& th);
double consumption(const HouseholdState& s, const Theta& th, double n);
double affordable_max(const HouseholdState& s, const Theta& th);
double height24(const Theta& th, const Covariates& x, double eps, double n);
double ref_gain_expectation(double h, const ReferenceBelief& b);
double expected_utility(const HouseholdState& s, const Theta& th, double n);
double marginal_cost(const HouseholdState& s, const Theta& th, double n);
double marginal_benefit(const HouseholdState& s, const Theta& th, double n);

// Precomputed per-household quantities so the inner grid loop only pays for pow/erfc.
struct UtilityKernel {
    double Y, p, a_hat, beta, rho, gamma, lambda, mu, sigma, n_max;

    UtilityKernel(const HouseholdState& s, const Theta& th);

    double height(double n) const { return n > 0.0 ? a_hat * std::pow(n, beta) : 0.0; }

    double operator()(double n) const {
        double c = Y - p * n;
        if (c < 0.0) c = 0.0;  // rounding at the budget boundary only
        double h = height(n);
        double u = c + rho * c * c + gamma * h;
        if (lambda != 0.0) u += lambda * ref_gain(h);
        return u;
    }

    double ref_gain(double h) const;
};

}  // namespace refnut
