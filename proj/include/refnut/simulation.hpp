#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "refnut/beliefs.hpp"
#include "refnut/data_io.hpp"
#include "refnut/model.hpp"
#include "refnut/solver.hpp"

namespace refnut {

// ---- summary statistics ----

double quantile(std::vector<double> v, double q);  // linear interpolation between order statistics
double mean_of(const std::vector<double>& v);
double sd_of(const std::vector<double>& v);

// ---- decomposition ----

struct Scenario {
    bool atole_population = false;              // which arm's households are simulated
    std::optional<double> price_discount;       // applied to every household when set
    std::optional<bool> reference_from_atole;   // arm whose reference trend is used; defaults to own arm
    std::string label;
};

struct DecompositionConfig {
    std::vector<int> cohorts{1970, 1971, 1972, 1973, 1974, 1975};
    std::vector<int> cohort_counts{39, 82, 93, 96, 101, 92};  // sample sizes used to locate the mean cohort year
    int households_per_cohort = 3000;
    double fresco_slope = 0.11;
    double atole_slope = 0.34;
    double fresco_mean_height = 76.97;
    double atole_mean_height = 78.30;
    double target_fresco_intake = 19.38;
    std::optional<double> fresco_level;  // pooled Fresco trend height at the mean cohort year; calibrated when unset
    double sigma_r = 0.5;
    bool gender_shift = true;
    double male_share = 0.52;

    void validate() const;
};

struct DecompositionCell {
    double height = 0.0;
    double protein = 0.0;
};

struct DecompositionRow {
    int first_year = 0;
    int last_year = 0;
    // Fresco baseline, Fresco + Atole price, Fresco + Atole reference, Fresco + both, Atole baseline.
    std::array<DecompositionCell, 5> cells{};
    double price_effect = 0.0;
    double reference_given_price = 0.0;
    double reference_share = 0.0;
};

struct DecompositionReport {
    TrendReference trend_fresco;  // phi2 unused for the Fresco arm
    TrendReference trend;         // both arms
    double fresco_level = 0.0;
    double fresco_mean_intake = 0.0;
    std::vector<DecompositionRow> rows;
};

struct SimulationContext {
    Theta theta;
    GridConfig grid;
    MonetaryScale scale;
    CovariateScaling covariates;
    GeneratorSpec generator;
    std::uint64_t seed = 1;
};

// Reference trends implied by arm means at the mean cohort year and the two slopes.
TrendReference decomposition_trend(const DecompositionConfig& cfg, const Theta& th, double fresco_level);

struct ScenarioOutcome {
    std::vector<double> heights;
    std::vector<double> intake;
};

ScenarioOutcome simulate_scenario(const std::vector<Household>& households, const std::vector<double>& eps_z,
                                  int cohort_year, const Scenario& sc, const TrendReference& trend,
                                  double sigma_r, const SimulationContext& ctx);

DecompositionReport decompose(const DecompositionConfig& cfg, const SimulationContext& ctx);

// ---- forward cohort simulation ----

struct CohortSummary {
    int year = 0;
    ReferenceBelief belief;
    double mean_height = 0.0;
    double sd_height = 0.0;
    double mean_intake = 0.0;
};

std::vector<CohortSummary> forward_simulate(const Scenario& sc, const std::vector<int>& cohorts,
                                            int households_per_cohort, double initial_reference,
                                            const SigmaRPolicy& policy, const SimulationContext& ctx);

// ---- targeted policies ----

struct PolicySpec {
    double tau = 1.0;
    double delta = 0.0;
    std::vector<int> cohorts{1970, 1972, 1974, 1976};
    int population_size = 500;
    std::optional<double> cost;  // filled after costing

    void validate() const;
};

struct PolicyConfig {
    int population_size = 500;
    int source_households = 5000;  // synthetic Atole panel the population is drawn from
    std::vector<int> cohorts{1970, 1972, 1974, 1976};
    double initial_reference = 77.0;
    SigmaRPolicy sigma_r = SigmaRPolicy::fixed(3.5);
    double target_tau = 0.1;
    double target_delta = 0.9;
    std::vector<double> taus{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double delta_step = 0.01;

    void validate() const;
};

struct PolicyPopulation {
    std::vector<Household> households;
    std::vector<std::vector<double>> eps_z;  // [cohort][household]
    std::vector<int> cohorts;
};

PolicyPopulation make_policy_population(const PolicyConfig& cfg, const SimulationContext& ctx);

struct PolicyPath {
    std::vector<std::vector<double>> heights;  // [cohort][household]
    std::vector<std::vector<double>> intake;
    std::vector<ReferenceBelief> beliefs;
    std::vector<char> targeted;
};

std::vector<char> targeted_households(const std::vector<Household>& hh, double tau);

PolicyPath simulate_policy(const PolicyPopulation& pop, double tau, double delta, const PolicyConfig& cfg,
                           const SimulationContext& ctx);

double policy_cost(const PolicyPath& path, double delta);
double policy_cost(const PolicySpec& spec, const PolicyPopulation& pop, const PolicyConfig& cfg,
                   const SimulationContext& ctx);

double budget_balance_delta(double tau, double z_target, const PolicyPopulation& pop, const PolicyConfig& cfg,
                            const SimulationContext& ctx);

struct CohortDistribution {
    int year = 0;
    double mean = 0.0;
    double sd = 0.0;
    std::array<double, 9> percentiles{};  // 10, 20, ..., 90
    double protein_mean = 0.0;
    std::array<double, 5> quintile_medians{};  // income quintiles, poorest first
    double mu_r = 0.0;
};

struct DistributionReport {
    double tau = 0.0;
    double delta = 0.0;
    double cost = 0.0;
    std::vector<CohortDistribution> cohorts;
    double pooled_mean = 0.0;
    double pooled_sd = 0.0;
    std::array<double, 9> pooled_percentiles{};
};

DistributionReport summarize_policy(const PolicyPath& path, const PolicyPopulation& pop, double tau, double delta);
DistributionReport run_policy(const PolicySpec& spec, const PolicyPopulation& pop, const PolicyConfig& cfg,
                              const SimulationContext& ctx);

struct ScheduleEntry {
    double tau;
    double delta;
    double cost;
    double relative_gap;
    double quantization_bound;  // half the largest neighbouring cost step, relative to the target
};

struct PolicySchedule {
    double z_target = 0.0;
    std::vector<ScheduleEntry> entries;
    std::vector<DistributionReport> reports;  // target policy first, then one per tau
    DistributionReport baseline;
};

PolicySchedule balanced_schedule(const PolicyPopulation& pop, const PolicyConfig& cfg, const SimulationContext& ctx);

// ---- frontier plot data ----

struct FrontierConfig {
    int points = 200;
    std::vector<double> lambdas{-0.0257, -0.0125, 0.0};
    std::vector<double> mu_rs{76.0, 78.0, 80.0};
    std::vector<double> sigma_rs{0.5, 1.5, 3.5};
    double h_min = 70.0;
    double h_max = 86.0;
};

struct PlotRow {
    std::string series;
    std::string param;
    double value;
    double x;
    double y;
};

std::vector<PlotRow> frontier_emit(const HouseholdState& s, const Theta& th, const GridConfig& grid,
                                   const FrontierConfig& cfg);

// Consumption on the indifference curve of level u at height h (smaller root, ρ ≤ 0).
double indifference_consumption(const Theta& th, const ReferenceBelief& b, double u, double h);

}  // namespace refnut
