#include "refnut/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace refnut {

void GridConfig::validate() const {
    if (q1 < 3 || q2 < 3) throw InvalidArgument("grid sizes q1 and q2 must be at least 3");
    if (!(tol > 0.0)) throw InvalidArgument("grid tolerance must be positive");
    if (max_iters < 0) throw InvalidArgument("max_iters must be nonnegative");
    if (!(refine_width > 0.0)) throw InvalidArgument("refine_width must be positive");
}

const char* corner_name(Corner c) {
    switch (c) {
        case Corner::Interior: return "interior";
        case Corner::Zero: return "zero";
        case Corner::BudgetMax: return "budget_max";
    }
    return "?";
}

namespace {

struct Best {
    double n;
    double u;
};

// Scans q evenly spaced nodes on [lo, hi]; strict comparison keeps the smallest n on ties.
Best scan(const UtilityKernel& k, double lo, double hi, int q, Best incumbent) {
    double step = (hi - lo) / (q - 1);
    Best best{0.0, -INFINITY};
    for (int i = 0; i < q; ++i) {
        double n = (i == q - 1) ? hi : lo + step * i;
        double u = k(n);
        if (u > best.u) best = {n, u};
    }
    if (incumbent.u > best.u || (incumbent.u == best.u && incumbent.n < best.n)) return incumbent;
    return best;
}

double relative_gap(const HouseholdState& s, const Theta& th, double n) {
    double mc = marginal_cost(s, th, n);
    double mb = marginal_benefit(s, th, n);
    double g = std::abs(mb - mc) / std::abs(mc);
    return std::isfinite(g) ? g : 0.0;
}

}  // namespace

Solution solve(const HouseholdState& s, const Theta& th, const GridConfig& cfg) {
    UtilityKernel k(s, th);
    const double n_max = k.n_max;

    Best best = scan(k, 0.0, n_max, cfg.q1, {0.0, -INFINITY});
    double step = n_max / (cfg.q1 - 1);

    Solution sol;
    sol.converged = false;
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        double lo = std::max(0.0, best.n - cfg.refine_width * step);
        double hi = std::min(n_max, best.n + cfg.refine_width * step);
        Best next = scan(k, lo, hi, cfg.q2, best);
        double change = std::abs(next.n - best.n);
        best = next;
        step = (hi - lo) / (cfg.q2 - 1);
        if (change < cfg.tol && step < cfg.tol) {
            sol.converged = true;
            ++it;
            break;
        }
    }
    if (cfg.max_iters == 0) sol.converged = step < cfg.tol;

    sol.iterations = it;
    sol.resolution = step;
    sol.n_star = best.n;
    sol.utility = best.u;
    if (best.n <= step) {
        sol.corner = Corner::Zero;
        sol.n_star = 0.0;
        sol.utility = k(0.0);
    } else if (best.n >= n_max - step) {
        sol.corner = Corner::BudgetMax;
        sol.n_star = n_max;
        sol.utility = k(n_max);
    }
    sol.foc_residual = sol.corner == Corner::Zero ? 0.0 : relative_gap(s, th, sol.n_star);
    return sol;
}

Solution solve_strict(const HouseholdState& s, const Theta& th, const GridConfig& cfg) {
    Solution sol = solve(s, th, cfg);
    if (!sol.converged) {
        std::ostringstream os;
        os << "grid search did not reach tolerance " << cfg.tol << " within " << cfg.max_iters
           << " refinements (best n = " << sol.n_star << ")";
        throw NonConvergence(os.str());
    }
    return sol;
}

std::vector<Solution> solve_batch_serial(std::span<const HouseholdState> states, const Theta& th,
                                         const GridConfig& cfg) {
    std::vector<Solution> out(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) out[i] = solve(states[i], th, cfg);
    return out;
}

std::vector<Solution> solve_batch(std::span<const HouseholdState> states, const Theta& th,
                                  const GridConfig& cfg) {
    std::vector<Solution> out(states.size());
    const long n = static_cast<long>(states.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) out[i] = solve(states[i], th, cfg);
    return out;
}

Solution solve_foc(const HouseholdState& s, const Theta& th, const GridConfig& fallback, double rel_tol) {
    UtilityKernel k(s, th);
    const double n_max = k.n_max;
    // g(n) = MB - MC and its derivative.
    auto gap = [&](double n, double* dg) {
        double npow = std::pow(n, k.beta);
        double h = k.a_hat * npow;
        double hp = k.beta * h / n;
        double z = (h - k.mu) / k.sigma;
        double w = k.gamma + k.lambda * norm_cdf(z);
        double mb = hp * w;
        double mc = k.p + 2.0 * k.rho * k.p * (k.Y - k.p * n);
        if (dg) {
            double hpp = (k.beta - 1.0) * hp / n;
            *dg = hpp * w + hp * hp * k.lambda * norm_pdf(z) / k.sigma + 2.0 * k.rho * k.p * k.p;
        }
        return mb - mc;
    };

    Solution sol;
    sol.iterations = 0;
    if (gap(n_max, nullptr) >= 0.0) {
        sol.corner = Corner::BudgetMax;
        sol.n_star = n_max;
        sol.utility = k(n_max);
        sol.foc_residual = relative_gap(s, th, n_max);
        return sol;
    }
    // MB grows without bound as n -> 0, so a positive lower end exists.
    double lo = n_max * 1e-3;
    while (gap(lo, nullptr) <= 0.0) {
        lo *= 1e-3;
        if (lo < 1e-300) return solve(s, th, fallback);
    }
    double hi = n_max;
    // Newton steps, replaced by bisection when they leave the bracket or stop halving the gap.
    double n = std::sqrt(lo * hi);
    double dx_old = hi - lo, dx = dx_old;
    double dg = 0.0;
    double g = gap(n, &dg);
    for (int it = 0; it < 200; ++it) {
        sol.iterations = it + 1;
        if (g == 0.0) break;
        if (g > 0.0) lo = n;
        else hi = n;
        bool outside = ((n - hi) * dg - g) * ((n - lo) * dg - g) > 0.0;
        if (!(dg < 0.0) || outside || std::abs(2.0 * g) > std::abs(dx_old * dg)) {
            dx_old = dx;
            dx = 0.5 * (hi - lo);
            n = lo + dx;
        } else {
            dx_old = dx;
            dx = g / dg;
            n -= dx;
        }
        if (std::abs(dx) <= rel_tol * n || (hi - lo) <= rel_tol * hi) break;
        g = gap(n, &dg);
    }
    sol.n_star = n;
    sol.utility = k(n);
    sol.resolution = hi - lo;
    if (k(n_max) > sol.utility) return solve(s, th, fallback);
    sol.foc_residual = relative_gap(s, th, n);
    return sol;
}

Solution grid_argmax(const HouseholdState& s, const Theta& th, long points) {
    UtilityKernel k(s, th);
    double step = k.n_max / static_cast<double>(points - 1);
    Best best{0.0, -INFINITY};
    for (long i = 0; i < points; ++i) {
        double n = (i == points - 1) ? k.n_max : step * static_cast<double>(i);
        double u = k(n);
        if (u > best.u) best = {n, u};
    }
    Solution sol;
    sol.n_star = best.n;
    sol.utility = best.u;
    sol.resolution = step;
    if (best.n == 0.0) sol.corner = Corner::Zero;
    else if (best.n == k.n_max) sol.corner = Corner::BudgetMax;
    return sol;
}

FocReport foc_check(const HouseholdState& s, const Theta& th, const Solution& sol, double tolerance) {
    FocReport r;
    r.corner = sol.corner;
    switch (sol.corner) {
        case Corner::Interior:
            r.mb = marginal_benefit(s, th, sol.n_star);
            r.mc = marginal_cost(s, th, sol.n_star);
            r.relative_gap = std::abs(r.mb - r.mc) / std::abs(r.mc);
            r.ok = r.relative_gap < tolerance;
            break;
        case Corner::Zero: {
            // Pointwise MB diverges at 0+, so compare average MB and MC over the first grid cell.
            double h = sol.resolution > 0.0 ? sol.resolution : 1e-6;
            double p = effective_price(s, th);
            double c0 = s.income_two_year, c1 = s.income_two_year - p * h;
            double cost = (c0 + th.rho * c0 * c0) - (c1 + th.rho * c1 * c1);
            double gain = expected_utility(s, th, h) - expected_utility(s, th, 0.0) + cost;
            r.mb = gain / h;
            r.mc = cost / h;
            r.ok = r.mb <= r.mc * (1.0 + tolerance);
            break;
        }
        case Corner::BudgetMax:
            r.mb = marginal_benefit(s, th, sol.n_star);
            r.mc = marginal_cost(s, th, sol.n_star);
            r.ok = r.mb >= r.mc * (1.0 - tolerance);
            break;
    }
    return r;
}

void foc_assert(const HouseholdState& s, const Theta& th, const Solution& sol, double tolerance) {
    FocReport r = foc_check(s, th, sol, tolerance);
    if (!r.ok) {
        std::ostringstream os;
        os << "first-order condition fails at n = " << sol.n_star << " (" << corner_name(r.corner)
           << "): MB = " << r.mb << ", MC = " << r.mc;
        throw FocViolation(os.str());
    }
}

std::vector<StaticRow> comparative_static(const HouseholdState& s, const Theta& th, const GridConfig& cfg,
                                          StaticParam param, std::span<const double> values) {
    std::vector<StaticRow> rows;
    rows.reserve(values.size());
    for (double v : values) {
        HouseholdState st = s;
        Theta t = th;
        switch (param) {
            case StaticParam::MuR: st.belief.mu_r = v; break;
            case StaticParam::SigmaR: st.belief = ReferenceBelief(st.belief.mu_r, v); break;
            case StaticParam::Lambda: t.lambda = v; break;
            case StaticParam::Price: st.protein_price = v; break;
        }
        st.validate();
        Solution sol = solve(st, t, cfg);
        rows.push_back({v, sol.n_star, height24(t, st.covariates, st.eps, sol.n_star)});
    }
    return rows;
}

}  // namespace refnut
