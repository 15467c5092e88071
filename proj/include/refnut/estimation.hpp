#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "refnut/beliefs.hpp"
#include "refnut/data_io.hpp"
#include "refnut/model.hpp"
#include "refnut/solver.hpp"

namespace refnut {

struct DegenerateLikelihood : DomainError {
    using DomainError::DomainError;
};
struct AllStartsFailed : DomainError {
    using DomainError::DomainError;
};

enum class ReferenceSource { Trend, Column };

struct EstimationConfig {
    int m_draws = 50;
    double sigma_r = 0.5;
    std::uint64_t crn_seed = 12345;
    ReferenceSource reference_source = ReferenceSource::Trend;
    double trend_origin = 1969.0;
    GridConfig grid{40, 12, 14, 1e-7, 1.0};
    std::vector<double> start_deltas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<std::array<double, 2>> start_gamma_lambda{{0.03, 0.0}, {0.03, -0.015}, {0.03, -0.025}};
    double start_rho = -0.05;
    int refine_starts = 2;
    int max_iter = 150;
    double grad_tol = 1e-6;   // on the per-row gradient, sup norm
    double f_tol = 1e-10;     // relative change in the per-row objective
    double grad_step = 1e-4;  // relative finite-difference steps
    double hess_step = 1e-3;
    std::size_t min_rows = 20;

    void validate() const;
};

// Households prepared for repeated likelihood evaluation: fixed states and frozen draws.
struct LikelihoodData {
    std::vector<HouseholdState> states;  // eps unset; belief fixed
    std::vector<double> log_n_obs;
    std::vector<double> log_h_obs;
    std::vector<double> z;  // standard normal eps draws, m per household
    int m = 1;

    std::size_t size() const { return states.size(); }
};

LikelihoodData prepare_likelihood(const CohortPanel& panel, const EstimationConfig& cfg,
                                  const MonetaryScale& scale, const CovariateScaling& cov);

// Replaces the frozen standard-normal draws (for tests and degenerate-shock experiments).
void set_draws(LikelihoodData& data, std::vector<double> z, int m);

TrendReference fit_panel_trend(const CohortPanel& panel, double year_origin);

double row_log_likelihood(const LikelihoodData& d, std::size_t i, const Theta& th, const GridConfig& grid);
double log_likelihood(const LikelihoodData& d, const Theta& th, const GridConfig& grid);
double log_likelihood_serial(const LikelihoodData& d, const Theta& th, const GridConfig& grid);

// Unconstrained coordinates: log for s.d. parameters, logit for delta and beta.
std::array<double, Theta::kSize> to_unconstrained(const Theta& th);
Theta from_unconstrained(const std::array<double, Theta::kSize>& u);

struct StartRecord {
    Theta start;
    double log_likelihood = 0.0;
    bool refined = false;
    double final_log_likelihood = 0.0;
    int iterations = 0;
};

struct EstimateResult {
    Theta theta_hat;
    std::optional<std::array<double, Theta::kSize>> standard_errors;
    double log_likelihood = 0.0;
    bool converged = false;
    int iterations = 0;
    int evaluations = 0;
    double gradient_norm = 0.0;
    bool hessian_negative_definite = false;
    std::vector<std::string> boundary_parameters;  // held fixed when computing standard errors
    double hessian_step = 0.0;                      // relative step that produced the standard errors
    double sigma_r = 0.5;
    std::size_t rows = 0;
    std::vector<StartRecord> starts;
    std::string reference_source;
    double satiation_point = 0.0;  // -1/(2 rho)
    double share_above_satiation = 0.0;
};

// Two-stage production first fit: log H* on X and instrumented log N*.
Theta production_first_stage(const LikelihoodData& d);

EstimateResult estimate(const CohortPanel& panel, const EstimationConfig& cfg, const MonetaryScale& scale,
                        const CovariateScaling& cov, const std::vector<Theta>& extra_starts = {});

struct SweepCell {
    double sigma_r;
    std::optional<EstimateResult> result;
    std::string error;
};

std::vector<SweepCell> sigma_r_sweep(const CohortPanel& panel, const EstimationConfig& cfg,
                                     const MonetaryScale& scale, const CovariateScaling& cov,
                                     const std::vector<double>& sigma_list);

// Quasi-Newton minimiser used by the estimator; exposed for testing.
struct BfgsOptions {
    int max_iter = 150;
    double grad_tol = 1e-6;
    double f_tol = 1e-10;
    double grad_step = 1e-4;
    double max_step = 1.0;
};

struct BfgsResult {
    std::vector<double> x;
    double f = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    double grad_norm = 0.0;
};

using Objective = std::function<double(const std::vector<double>&)>;

// Non-finite objective values are treated as +infinity by the line search.
BfgsResult bfgs_minimize(const Objective& f, std::vector<double> x0, const BfgsOptions& opt);

// Central differences with step rel_step * max(|x_i|, 0.01).
std::vector<double> fd_gradient(const Objective& f, const std::vector<double>& x, double rel_step);
// Same, reusing f(x) and optionally returning the diagonal second differences.
std::vector<double> fd_gradient(const Objective& f, const std::vector<double>& x, double rel_step, double fx,
                                std::vector<double>* curvature);

}  // namespace refnut
