#pragma once

#include <span>
#include <string>
#include <vector>

#include "refnut/model.hpp"

namespace refnut {

struct GridConfig {
    int q1 = 200;
    int q2 = 50;
    int max_iters = 10;
    double tol = 1e-6;
    double refine_width = 2.0;  // half-width of the next grid, in current grid steps

    void validate() const;
};

enum class Corner { Interior, Zero, BudgetMax };

const char* corner_name(Corner c);

struct Solution {
    double n_star = 0.0;
    double utility = 0.0;
    double foc_residual = 0.0;
    Corner corner = Corner::Interior;
    bool converged = true;
    int iterations = 0;
    double resolution = 0.0;  // final grid spacing
};

struct NonConvergence : DomainError {
    using DomainError::DomainError;
};

struct FocViolation : DomainError {
    using DomainError::DomainError;
};

Solution solve(const HouseholdState& s, const Theta& th, const GridConfig& cfg);

// Same as solve but throws NonConvergence instead of flagging.
Solution solve_strict(const HouseholdState& s, const Theta& th, const GridConfig& cfg);

std::vector<Solution> solve_batch(std::span<const HouseholdState> states, const Theta& th,
                                  const GridConfig& cfg);
std::vector<Solution> solve_batch_serial(std::span<const HouseholdState> states, const Theta& th,
                                         const GridConfig& cfg);

// Safeguarded Newton on MB - MC, bracketed on (0, N_max]. Much cheaper than the grid search
// and smooth in theta, which the likelihood needs. Falls back to solve() with `fallback` when
// the budget corner beats the interior root.
Solution solve_foc(const HouseholdState& s, const Theta& th, const GridConfig& fallback, double rel_tol = 1e-12);

// Exhaustive argmax on a uniform grid of `points` nodes over [0, N_max].
Solution grid_argmax(const HouseholdState& s, const Theta& th, long points);

struct FocReport {
    Corner corner = Corner::Interior;
    double mb = 0.0;
    double mc = 0.0;
    double relative_gap = 0.0;
    bool ok = true;
};

FocReport foc_check(const HouseholdState& s, const Theta& th, const Solution& sol,
                    double tolerance = 1e-3);
void foc_assert(const HouseholdState& s, const Theta& th, const Solution& sol,
                double tolerance = 1e-3);

enum class StaticParam { MuR, SigmaR, Lambda, Price };

struct StaticRow {
    double value;
    double n_star;
    double expected_height;
};

std::vector<StaticRow> comparative_static(const HouseholdState& s, const Theta& th,
                                          const GridConfig& cfg, StaticParam param,
                                          std::span<const double> values);

}  // namespace refnut
