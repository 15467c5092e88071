#include "refnut/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "refnut/rng.hpp"

namespace refnut {

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw EmptySample("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double w = pos - static_cast<double>(lo);
    return v[lo] + w * (v[hi] - v[lo]);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw EmptySample("mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace {

std::vector<double> eps_draws(std::uint64_t seed, std::string_view stream, int arm, int year, int n) {
    std::vector<double> z(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto e = rng::engine(seed, stream,
                             {static_cast<std::uint64_t>(arm), static_cast<std::uint64_t>(year),
                              static_cast<std::uint64_t>(i)});
        std::normal_distribution<double> d(0.0, 1.0);
        z[static_cast<std::size_t>(i)] = d(e);
    }
    return z;
}

double mean_cohort_year(const DecompositionConfig& cfg) {
    double w = 0.0, s = 0.0;
    for (std::size_t i = 0; i < cfg.cohorts.size(); ++i) {
        double c = cfg.cohort_counts.size() == cfg.cohorts.size() ? cfg.cohort_counts[i] : 1.0;
        w += c;
        s += c * cfg.cohorts[i];
    }
    return s / w;
}

}  // namespace

void DecompositionConfig::validate() const {
    if (cohorts.empty()) throw InvalidArgument("decomposition needs cohort years");
    if (households_per_cohort < 1) throw InvalidArgument("decomposition needs households");
    if (!(atole_slope != fresco_slope)) throw InvalidArgument("arm slopes must differ to locate the trend origin");
    if (!(sigma_r > 0.0)) throw InvalidArgument("decomposition sigma_r must be positive");
    if (!(target_fresco_intake > 0.0)) throw InvalidArgument("target intake must be positive");
}

TrendReference decomposition_trend(const DecompositionConfig& cfg, const Theta& th, double fresco_level) {
    double ybar = mean_cohort_year(cfg);
    double dslope = cfg.atole_slope - cfg.fresco_slope;
    TrendReference tr;
    // No separate Atole level: the arm gap at the mean cohort year fixes where the trends meet.
    tr.year_origin = ybar - (cfg.atole_mean_height - cfg.fresco_mean_height) / dslope;
    tr.phi1 = cfg.fresco_slope;
    tr.phi2 = dslope;
    tr.phi3 = cfg.gender_shift ? fresco_level * (std::exp(th.alpha_male) - 1.0) : 0.0;
    tr.phi0 = fresco_level - tr.phi1 * (ybar - tr.year_origin) - cfg.male_share * tr.phi3;
    return tr;
}

ScenarioOutcome simulate_scenario(const std::vector<Household>& households, const std::vector<double>& eps_z,
                                  int cohort_year, const Scenario& sc, const TrendReference& trend,
                                  double sigma_r, const SimulationContext& ctx) {
    bool ref_atole = sc.reference_from_atole.value_or(sc.atole_population);
    std::vector<HouseholdState> states(households.size());
    for (std::size_t i = 0; i < households.size(); ++i) {
        Household h = households[i];
        h.atole = 0;  // discounts are applied explicitly below
        if (sc.price_discount) h.price *= 1.0 - *sc.price_discount;
        double mu = trend.lookup(cohort_year, h.male, ref_atole);
        states[i] = to_state(h, ctx.scale, ctx.covariates, ReferenceBelief(mu, sigma_r));
        states[i].eps = ctx.theta.sigma_eps * eps_z[i];
    }
    auto sols = solve_batch(states, ctx.theta, ctx.grid);
    ScenarioOutcome out;
    out.heights.resize(states.size());
    out.intake.resize(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        out.intake[i] = sols[i].n_star;
        out.heights[i] = height24(ctx.theta, states[i].covariates, states[i].eps, sols[i].n_star);
    }
    return out;
}

DecompositionReport decompose(const DecompositionConfig& cfg, const SimulationContext& ctx) {
    cfg.validate();
    ctx.theta.validate();
    const int n = cfg.households_per_cohort;
    std::vector<std::vector<Household>> fresco, atole;
    std::vector<std::vector<double>> zf, za;
    for (int y : cfg.cohorts) {
        fresco.push_back(draw_households(ctx.generator, false, y, n, ctx.seed));
        atole.push_back(draw_households(ctx.generator, true, y, n, ctx.seed));
        zf.push_back(eps_draws(ctx.seed, "decompose_eps", 0, y, n));
        za.push_back(eps_draws(ctx.seed, "decompose_eps", 1, y, n));
    }
    const Scenario base{false, std::nullopt, false, "fresco"};

    auto fresco_intake = [&](double level) {
        TrendReference tr = decomposition_trend(cfg, ctx.theta, level);
        double s = 0.0;
        for (std::size_t c = 0; c < cfg.cohorts.size(); ++c)
            s += mean_of(simulate_scenario(fresco[c], zf[c], cfg.cohorts[c], base, tr, cfg.sigma_r, ctx).intake);
        return s / static_cast<double>(cfg.cohorts.size());
    };

    double level;
    if (cfg.fresco_level) {
        level = *cfg.fresco_level;
    } else {
        // Mean intake rises with the reference level when lambda < 0; bisect on it.
        double lo = cfg.fresco_mean_height - 8.0, hi = cfg.fresco_mean_height + 8.0;
        double flo = fresco_intake(lo) - cfg.target_fresco_intake;
        double fhi = fresco_intake(hi) - cfg.target_fresco_intake;
        if (flo > 0.0 || fhi < 0.0)
            throw DomainError("cannot bracket the Fresco reference level that matches the target intake");
        for (int it = 0; it < 40 && hi - lo > 1e-5; ++it) {
            double mid = 0.5 * (lo + hi);
            double fm = fresco_intake(mid) - cfg.target_fresco_intake;
            if (fm < 0.0) lo = mid;
            else hi = mid;
        }
        level = 0.5 * (lo + hi);
    }

    DecompositionReport rep;
    rep.fresco_level = level;
    rep.trend = decomposition_trend(cfg, ctx.theta, level);
    rep.trend_fresco = rep.trend;
    rep.fresco_mean_intake = fresco_intake(level);

    const double d = ctx.theta.delta;
    const std::array<Scenario, 5> scenarios = {
        Scenario{false, std::nullopt, false, "fresco"},
        Scenario{false, d, false, "fresco_atole_price"},
        Scenario{false, std::nullopt, true, "fresco_atole_reference"},
        Scenario{false, d, true, "fresco_atole_both"},
        Scenario{true, d, true, "atole"},
    };

    // Per-cohort cell means, then averaged within consecutive cohort pairs.
    std::vector<std::array<DecompositionCell, 5>> per_cohort(cfg.cohorts.size());
    for (std::size_t c = 0; c < cfg.cohorts.size(); ++c)
        for (std::size_t s = 0; s < scenarios.size(); ++s) {
            const auto& sc = scenarios[s];
            const auto& hh = sc.atole_population ? atole[c] : fresco[c];
            const auto& z = sc.atole_population ? za[c] : zf[c];
            auto out = simulate_scenario(hh, z, cfg.cohorts[c], sc, rep.trend, cfg.sigma_r, ctx);
            per_cohort[c][s] = {mean_of(out.heights), mean_of(out.intake)};
        }
    for (std::size_t c = 0; c < cfg.cohorts.size(); c += 2) {
        std::size_t e = std::min(c + 2, cfg.cohorts.size());
        DecompositionRow row;
        row.first_year = cfg.cohorts[c];
        row.last_year = cfg.cohorts[e - 1];
        for (std::size_t s = 0; s < 5; ++s) {
            double h = 0.0, p = 0.0;
            for (std::size_t k = c; k < e; ++k) {
                h += per_cohort[k][s].height;
                p += per_cohort[k][s].protein;
            }
            row.cells[s] = {h / static_cast<double>(e - c), p / static_cast<double>(e - c)};
        }
        row.price_effect = row.cells[1].height - row.cells[0].height;
        row.reference_given_price = row.cells[3].height - row.cells[1].height;
        double total = row.price_effect + row.reference_given_price;
        row.reference_share = total != 0.0 ? row.reference_given_price / total : 0.0;
        rep.rows.push_back(row);
    }
    return rep;
}

std::vector<CohortSummary> forward_simulate(const Scenario& sc, const std::vector<int>& cohorts,
                                            int households_per_cohort, double initial_reference,
                                            const SigmaRPolicy& policy, const SimulationContext& ctx) {
    ctx.theta.validate();
    policy.validate();
    std::vector<int> years = cohorts;
    std::sort(years.begin(), years.end());
    std::vector<CohortSummary> out;
    std::map<int, std::vector<double>> realized;
    const int arm = sc.atole_population ? 1 : 0;
    for (int y : years) {
        auto hh = draw_households(ctx.generator, sc.atole_population, y, households_per_cohort, ctx.seed);
        auto z = eps_draws(ctx.seed, "simulate_eps", arm, y, households_per_cohort);
        ReferenceBelief belief;
        auto prev = realized.find(y - 2);
        if (prev != realized.end()) {
            belief = belief_from_sample(HeightSample(prev->second), policy);
        } else {
            double s0 = policy.kind == SigmaRPolicy::Kind::Fixed ? policy.value : policy.floor;
            belief = ReferenceBelief(initial_reference, s0);
        }
        std::vector<HouseholdState> states(hh.size());
        for (std::size_t i = 0; i < hh.size(); ++i) {
            Household h = hh[i];
            h.atole = 0;
            double disc = sc.price_discount.value_or(sc.atole_population ? ctx.theta.delta : 0.0);
            h.price *= 1.0 - disc;
            states[i] = to_state(h, ctx.scale, ctx.covariates, belief);
            states[i].eps = ctx.theta.sigma_eps * z[i];
        }
        auto sols = solve_batch(states, ctx.theta, ctx.grid);
        std::vector<double> heights(states.size()), intake(states.size());
        for (std::size_t i = 0; i < states.size(); ++i) {
            intake[i] = sols[i].n_star;
            heights[i] = height24(ctx.theta, states[i].covariates, states[i].eps, sols[i].n_star);
        }
        out.push_back({y, belief, mean_of(heights), sd_of(heights), mean_of(intake)});
        realized[y] = std::move(heights);
    }
    return out;
}

// ---- policies ----

void PolicySpec::validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("tau must lie in (0,1]");
    if (!(delta >= 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in [0,1)");
    if (cohorts.empty()) throw InvalidArgument("policy needs cohorts");
    if (population_size < 1) throw InvalidArgument("policy population must be non-empty");
}

void PolicyConfig::validate() const {
    if (population_size < 5) throw InvalidArgument("policy population needs at least five households");
    if (source_households < 1) throw InvalidArgument("policy source panel must be non-empty");
    if (cohorts.empty()) throw InvalidArgument("policy needs cohorts");
    sigma_r.validate();
    if (!(target_tau > 0.0 && target_tau <= 1.0)) throw InvalidArgument("target tau must lie in (0,1]");
    if (!(target_delta > 0.0 && target_delta < 1.0)) throw InvalidArgument("target delta must lie in (0,1)");
    for (double t : taus)
        if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("policy taus must lie in (0,1]");
    if (!(delta_step > 0.0 && delta_step < 0.5)) throw InvalidArgument("delta_step must lie in (0,0.5)");
}

PolicyPopulation make_policy_population(const PolicyConfig& cfg, const SimulationContext& ctx) {
    cfg.validate();
    const auto& years = ctx.generator.cohorts;
    std::vector<Household> source;
    int per = std::max(1, cfg.source_households / static_cast<int>(years.size()));
    for (int y : years) {
        auto hh = draw_households(ctx.generator, true, y, per, ctx.seed);
        source.insert(source.end(), hh.begin(), hh.end());
    }
    PolicyPopulation pop;
    pop.cohorts = cfg.cohorts;
    auto eng = rng::engine(ctx.seed, "policy_population");
    std::uniform_int_distribution<std::size_t> pick(0, source.size() - 1);
    for (int i = 0; i < cfg.population_size; ++i) {
        Household h = source[pick(eng)];
        h.atole = 0;
        pop.households.push_back(h);
    }
    for (int y : cfg.cohorts) pop.eps_z.push_back(eps_draws(ctx.seed, "policy_eps", 0, y, cfg.population_size));
    return pop;
}

std::vector<char> targeted_households(const std::vector<Household>& hh, double tau) {
    std::vector<double> inc;
    inc.reserve(hh.size());
    for (const auto& h : hh) inc.push_back(h.income);
    std::sort(inc.begin(), inc.end());
    std::size_t k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(inc.size()) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, inc.size());
    double threshold = inc[k - 1];
    std::vector<char> out(hh.size());
    for (std::size_t i = 0; i < hh.size(); ++i) out[i] = hh[i].income <= threshold;
    return out;
}

PolicyPath simulate_policy(const PolicyPopulation& pop, double tau, double delta, const PolicyConfig& cfg,
                           const SimulationContext& ctx) {
    PolicyPath path;
    path.targeted = targeted_households(pop.households, tau);
    const std::size_t n = pop.households.size();
    for (std::size_t c = 0; c < pop.cohorts.size(); ++c) {
        ReferenceBelief belief;
        if (c == 0) {
            double s0 = cfg.sigma_r.kind == SigmaRPolicy::Kind::Fixed ? cfg.sigma_r.value : cfg.sigma_r.floor;
            belief = ReferenceBelief(cfg.initial_reference, s0);
        } else {
            belief = belief_from_sample(HeightSample(path.heights[c - 1]), cfg.sigma_r);
        }
        std::vector<HouseholdState> states(n);
        for (std::size_t i = 0; i < n; ++i) {
            Household h = pop.households[i];
            if (path.targeted[i]) h.price *= 1.0 - delta;
            states[i] = to_state(h, ctx.scale, ctx.covariates, belief);
            states[i].eps = ctx.theta.sigma_eps * pop.eps_z[c][i];
        }
        auto sols = solve_batch(states, ctx.theta, ctx.grid);
        std::vector<double> h(n), q(n);
        for (std::size_t i = 0; i < n; ++i) {
            q[i] = sols[i].n_star;
            h[i] = height24(ctx.theta, states[i].covariates, states[i].eps, sols[i].n_star);
        }
        path.heights.push_back(std::move(h));
        path.intake.push_back(std::move(q));
        path.beliefs.push_back(belief);
    }
    return path;
}

double policy_cost(const PolicyPath& path, double delta) {
    double z = 0.0;
    for (const auto& cohort : path.intake)
        for (std::size_t i = 0; i < cohort.size(); ++i)
            if (path.targeted[i]) z += cohort[i];
    return delta * z;
}

double policy_cost(const PolicySpec& spec, const PolicyPopulation& pop, const PolicyConfig& cfg,
                   const SimulationContext& ctx) {
    spec.validate();
    return policy_cost(simulate_policy(pop, spec.tau, spec.delta, cfg, ctx), spec.delta);
}

namespace {

struct Balanced {
    double delta;
    double cost;
    double max_jump;  // largest cost change to a neighbouring grid point
};

Balanced balance(double tau, double z_target, const PolicyPopulation& pop, const PolicyConfig& cfg,
                 const SimulationContext& ctx) {
    if (!(z_target > 0.0)) throw InvalidArgument("budget target must be positive");
    // A full discount makes protein free and the budget set unbounded, so the grid stops short of 1.
    const int k = static_cast<int>(std::lround(1.0 / cfg.delta_step)) - 1;
    std::vector<double> costs(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(dynamic, 1)
    for (int j = 0; j < k; ++j) {
        double d = (j + 1) * cfg.delta_step;
        costs[static_cast<std::size_t>(j)] = policy_cost(simulate_policy(pop, tau, d, cfg, ctx), d);
    }
    int best = 0;
    for (int j = 1; j < k; ++j)
        if (std::abs(costs[j] - z_target) < std::abs(costs[best] - z_target)) best = j;
    double jump = 0.0;
    if (best > 0) jump = std::max(jump, std::abs(costs[best] - costs[best - 1]));
    if (best + 1 < k) jump = std::max(jump, std::abs(costs[best + 1] - costs[best]));
    return {(best + 1) * cfg.delta_step, costs[static_cast<std::size_t>(best)], jump};
}

}  // namespace

double budget_balance_delta(double tau, double z_target, const PolicyPopulation& pop, const PolicyConfig& cfg,
                            const SimulationContext& ctx) {
    return balance(tau, z_target, pop, cfg, ctx).delta;
}

DistributionReport summarize_policy(const PolicyPath& path, const PolicyPopulation& pop, double tau,
                                    double delta) {
    DistributionReport rep;
    rep.tau = tau;
    rep.delta = delta;
    rep.cost = policy_cost(path, delta);
    const std::size_t n = pop.households.size();
    std::vector<std::size_t> rank(n);
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(),
                     [&](std::size_t a, std::size_t b) { return pop.households[a].income < pop.households[b].income; });
    std::vector<int> quint(n);
    for (std::size_t r = 0; r < n; ++r) quint[rank[r]] = static_cast<int>(r * 5 / n);

    std::vector<double> pooled;
    for (std::size_t c = 0; c < path.heights.size(); ++c) {
        const auto& h = path.heights[c];
        CohortDistribution cd;
        cd.year = pop.cohorts[c];
        cd.mean = mean_of(h);
        cd.sd = sd_of(h);
        for (int p = 0; p < 9; ++p) cd.percentiles[p] = quantile(h, 0.1 * (p + 1));
        cd.protein_mean = mean_of(path.intake[c]);
        for (int g = 0; g < 5; ++g) {
            std::vector<double> grp;
            for (std::size_t i = 0; i < n; ++i)
                if (quint[i] == g) grp.push_back(h[i]);
            cd.quintile_medians[g] = quantile(grp, 0.5);
        }
        cd.mu_r = path.beliefs[c].mu_r;
        rep.cohorts.push_back(cd);
        pooled.insert(pooled.end(), h.begin(), h.end());
    }
    rep.pooled_mean = mean_of(pooled);
    rep.pooled_sd = sd_of(pooled);
    for (int p = 0; p < 9; ++p) rep.pooled_percentiles[p] = quantile(pooled, 0.1 * (p + 1));
    return rep;
}

DistributionReport run_policy(const PolicySpec& spec, const PolicyPopulation& pop, const PolicyConfig& cfg,
                              const SimulationContext& ctx) {
    spec.validate();
    return summarize_policy(simulate_policy(pop, spec.tau, spec.delta, cfg, ctx), pop, spec.tau, spec.delta);
}

PolicySchedule balanced_schedule(const PolicyPopulation& pop, const PolicyConfig& cfg, const SimulationContext& ctx) {
    PolicySchedule out;
    out.z_target = policy_cost(simulate_policy(pop, cfg.target_tau, cfg.target_delta, cfg, ctx), cfg.target_delta);
    out.baseline = summarize_policy(simulate_policy(pop, 1.0, 0.0, cfg, ctx), pop, 1.0, 0.0);
    out.reports.push_back(
        summarize_policy(simulate_policy(pop, cfg.target_tau, cfg.target_delta, cfg, ctx), pop, cfg.target_tau,
                         cfg.target_delta));
    for (double tau : cfg.taus) {
        Balanced b = balance(tau, out.z_target, pop, cfg, ctx);
        out.entries.push_back({tau, b.delta, b.cost, std::abs(b.cost - out.z_target) / out.z_target,
                               0.5 * b.max_jump / out.z_target});
        out.reports.push_back(summarize_policy(simulate_policy(pop, tau, b.delta, cfg, ctx), pop, tau, b.delta));
    }
    return out;
}

// ---- frontier ----

double indifference_consumption(const Theta& th, const ReferenceBelief& b, double u, double h) {
    double k = u - th.gamma * h - th.lambda * ref_gain_expectation(h, b);
    if (th.rho == 0.0) return k;
    double disc = 1.0 + 4.0 * th.rho * k;
    if (disc < 0.0) return NAN;
    return (-1.0 + std::sqrt(disc)) / (2.0 * th.rho);
}

std::vector<PlotRow> frontier_emit(const HouseholdState& s, const Theta& th, const GridConfig& grid,
                                   const FrontierConfig& cfg) {
    if (cfg.points < 2) throw InvalidArgument("frontier needs at least two points");
    std::vector<PlotRow> rows;
    auto emit_case = [&](const std::string& param, double value, const HouseholdState& st, const Theta& t) {
        double nmax = affordable_max(st, t);
        for (int i = 0; i < cfg.points; ++i) {
            double n = (i == cfg.points - 1) ? nmax : nmax * i / (cfg.points - 1);
            rows.push_back({"frontier", param, value, height24(t, st.covariates, st.eps, n), consumption(st, t, n)});
        }
        Solution sol = solve(st, t, grid);
        double hs = height24(t, st.covariates, st.eps, sol.n_star);
        double cs = consumption(st, t, sol.n_star);
        rows.push_back({"tangency", param, value, hs, cs});
        double hmax = height24(t, st.covariates, st.eps, nmax);
        for (int i = 0; i < cfg.points; ++i) {
            double h = hmax * i / (cfg.points - 1);
            double c = indifference_consumption(t, st.belief, sol.utility, h);
            if (std::isfinite(c)) rows.push_back({"indifference", param, value, h, c});
        }
        for (int i = 0; i < cfg.points; ++i) {
            double h = cfg.h_min + (cfg.h_max - cfg.h_min) * i / (cfg.points - 1);
            double z = (h - st.belief.mu_r) / st.belief.sigma_r;
            rows.push_back({"height_utility", param, value, h, t.gamma * h + t.lambda * ref_gain_expectation(h, st.belief)});
            rows.push_back({"height_marginal", param, value, h, t.gamma + t.lambda * norm_cdf(z)});
        }
    };
    emit_case("base", 0.0, s, th);
    for (double v : cfg.lambdas) {
        Theta t = th;
        t.lambda = v;
        emit_case("lambda", v, s, t);
    }
    for (double v : cfg.mu_rs) {
        HouseholdState st = s;
        st.belief.mu_r = v;
        emit_case("mu_r", v, st, th);
    }
    for (double v : cfg.sigma_rs) {
        HouseholdState st = s;
        st.belief = ReferenceBelief(st.belief.mu_r, v);
        emit_case("sigma_r", v, st, th);
    }
    return rows;
}

}  // namespace refnut
