#pragma once

#include <span>
#include <string>
#include <vector>

#include "refnut/model.hpp"
#include "refnut/solver.hpp"

namespace refnut {

struct EmptySample : DomainError {
    using DomainError::DomainError;
};
struct InsufficientSample : DomainError {
    using DomainError::DomainError;
};
struct RankDeficient : DomainError {
    using DomainError::DomainError;
};

struct HeightSample {
    std::vector<double> heights;

    HeightSample() = default;
    explicit HeightSample(std::vector<double> h);
    std::size_t m() const { return heights.size(); }
};

double mean_belief(const HeightSample& s);
double sampling_variance_belief(const HeightSample& s);

// How the reference s.d. is set when beliefs are formed from a sample.
struct SigmaRPolicy {
    enum class Kind { Fixed, SamplingError };
    Kind kind = Kind::Fixed;
    double value = 0.5;
    double floor = 0.25;

    static SigmaRPolicy fixed(double v) { return {Kind::Fixed, v, 0.25}; }
    static SigmaRPolicy sampling_error(double floor = 0.25) { return {Kind::SamplingError, 0.0, floor}; }

    double resolve(const HeightSample& prior) const;
    void validate() const;
    std::string describe() const;
};

ReferenceBelief belief_from_sample(const HeightSample& prior, const SigmaRPolicy& policy);

// Linear trend in month-24 height: phi0 + phi1*t + phi2*atole*max(t,0) + phi3*male,
// with t = year - year_origin.
struct TrendReference {
    double phi0 = 0.0;
    double phi1 = 0.0;
    double phi2 = 0.0;
    double phi3 = 0.0;
    double year_origin = 1969.0;

    double predict(double year, int male, bool atole) const;
    // Cohort born in `year` takes the prediction for the cohort born one period (two years) earlier.
    double lookup(int year, int male, bool atole) const { return predict(year - 2, male, atole); }
};

struct TrendObservation {
    int year;
    int male;
    bool atole;
    double height;
};

TrendReference trend_reference_fit(std::span<const TrendObservation> obs, double year_origin = 1969.0);

// One cohort of the law of motion: beliefs from prior heights, fresh shocks, optimal choices.
struct CohortOutcome {
    HeightSample heights;
    std::vector<double> intake;
    ReferenceBelief belief;
};

CohortOutcome advance_distribution(std::span<const HouseholdState> population,
                                   const HeightSample& prior, const Theta& th, const GridConfig& cfg,
                                   const SigmaRPolicy& policy, std::span<const double> eps_std_normal);

}  // namespace refnut
