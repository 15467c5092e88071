#include "refnut/estimation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "refnut/rng.hpp"

namespace refnut {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool is_logit(int i) { return i == 3 || i == 7; }
bool is_log(int i) { return i >= 8; }

// Finite-difference steps are relative to the coordinate; the floor only matters near zero.
double fd_scale(double x) { return std::max(std::abs(x), 1e-2); }

}  // namespace

void EstimationConfig::validate() const {
    if (m_draws < 1) throw InvalidArgument("m_draws must be at least 1");
    if (!(sigma_r > 0.0)) throw InvalidArgument("estimation sigma_r must be positive");
    grid.validate();
    if (start_deltas.empty() || start_gamma_lambda.empty()) throw InvalidArgument("multistart grid is empty");
    for (double d : start_deltas)
        if (!(d > 0.0 && d < 1.0)) throw InvalidArgument("start deltas must lie in (0,1)");
    if (refine_starts < 1) throw InvalidArgument("refine_starts must be at least 1");
    if (!(grad_step > 0.0 && hess_step > 0.0)) throw InvalidArgument("finite-difference steps must be positive");
}

TrendReference fit_panel_trend(const CohortPanel& panel, double year_origin) {
    std::vector<TrendObservation> obs;
    obs.reserve(panel.size());
    for (const auto& r : panel.rows) obs.push_back({r.cohort_year, r.male, r.atole != 0, r.h_obs});
    return trend_reference_fit(obs, year_origin);
}

LikelihoodData prepare_likelihood(const CohortPanel& panel, const EstimationConfig& cfg,
                                  const MonetaryScale& scale, const CovariateScaling& cov) {
    cfg.validate();
    if (panel.size() < cfg.min_rows) {
        std::ostringstream os;
        os << "panel has " << panel.size() << " rows; at least " << cfg.min_rows << " are required";
        throw InvalidArgument(os.str());
    }
    std::optional<TrendReference> trend;
    if (cfg.reference_source == ReferenceSource::Trend) trend = fit_panel_trend(panel, cfg.trend_origin);

    LikelihoodData d;
    d.m = cfg.m_draws;
    d.states.reserve(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        const auto& r = panel.rows[i];
        double mu;
        if (trend) {
            mu = trend->lookup(r.cohort_year, r.male, r.atole != 0);
        } else {
            if (std::isnan(r.mu_r))
                throw SchemaError("row " + std::to_string(i) + ": reference column requested but mu_r is missing");
            mu = r.mu_r;
        }
        d.states.push_back(to_state(household_of(r), scale, cov, ReferenceBelief(mu, cfg.sigma_r)));
        d.states.back().validate();
        d.log_n_obs.push_back(std::log(r.n_obs));
        d.log_h_obs.push_back(std::log(r.h_obs));
    }
    // Frozen per-household draws: common random numbers across theta evaluations.
    d.z.resize(panel.size() * static_cast<std::size_t>(d.m));
    for (std::size_t i = 0; i < panel.size(); ++i) {
        auto eng = rng::engine(cfg.crn_seed, "likelihood_eps", {static_cast<std::uint64_t>(panel.rows[i].id)});
        std::normal_distribution<double> z(0.0, 1.0);
        for (int k = 0; k < d.m; ++k) d.z[i * d.m + k] = z(eng);
    }
    return d;
}

void set_draws(LikelihoodData& data, std::vector<double> z, int m) {
    if (m < 1 || z.size() != data.size() * static_cast<std::size_t>(m))
        throw InvalidArgument("draw matrix does not match the panel");
    data.z = std::move(z);
    data.m = m;
}

double row_log_likelihood(const LikelihoodData& d, std::size_t i, const Theta& th, const GridConfig& grid) {
    HouseholdState st = d.states[i];
    const double log_sn = std::log(th.sigma_eta), log_sh = std::log(th.sigma_iota);
    const double base = log_productivity(th, st.covariates, 0.0);
    double best = -INFINITY;
    double terms[256];
    std::vector<double> big;
    double* t = terms;
    if (d.m > 256) {
        big.resize(static_cast<std::size_t>(d.m));
        t = big.data();
    }
    for (int k = 0; k < d.m; ++k) {
        st.eps = th.sigma_eps * d.z[i * d.m + k];
        Solution sol = solve_foc(st, th, grid);
        if (!(sol.n_star > 0.0)) {
            t[k] = -INFINITY;
            continue;
        }
        double ln_n = std::log(sol.n_star);
        double ln_h = base + st.eps + th.beta * ln_n;
        double rn = (d.log_n_obs[i] - ln_n - th.mu_eta()) / th.sigma_eta;
        double rh = (d.log_h_obs[i] - ln_h - th.mu_iota()) / th.sigma_iota;
        t[k] = -0.5 * (rn * rn + rh * rh) - log_sn - log_sh - 2.0 * kLogSqrt2Pi;
        best = std::max(best, t[k]);
    }
    if (!std::isfinite(best)) {
        std::ostringstream os;
        os << "household " << i << " has zero simulated likelihood under every draw";
        throw DegenerateLikelihood(os.str());
    }
    double s = 0.0;
    for (int k = 0; k < d.m; ++k) s += std::exp(t[k] - best);
    return best + std::log(s / d.m);
}

double log_likelihood_serial(const LikelihoodData& d, const Theta& th, const GridConfig& grid) {
    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) sum += row_log_likelihood(d, i, th, grid);
    return sum;
}

double log_likelihood(const LikelihoodData& d, const Theta& th, const GridConfig& grid) {
    const long n = static_cast<long>(d.size());
    std::vector<double> rows(d.size());
    std::atomic<long> failed{-1};
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) {
        try {
            rows[i] = row_log_likelihood(d, static_cast<std::size_t>(i), th, grid);
        } catch (const DegenerateLikelihood&) {
            long expected = -1;
            failed.compare_exchange_strong(expected, i);
            rows[i] = -INFINITY;
        }
    }
    if (failed.load() >= 0) {
        std::ostringstream os;
        os << "household " << failed.load() << " has zero simulated likelihood under every draw";
        throw DegenerateLikelihood(os.str());
    }
    // Ordered summation keeps the value independent of the thread count.
    double sum = 0.0;
    for (double v : rows) sum += v;
    return sum;
}

std::array<double, Theta::kSize> to_unconstrained(const Theta& th) {
    std::array<double, Theta::kSize> u{};
    for (int i = 0; i < Theta::kSize; ++i) {
        double v = th.get(i);
        u[i] = is_logit(i) ? logit(v) : is_log(i) ? std::log(v) : v;
    }
    return u;
}

Theta from_unconstrained(const std::array<double, Theta::kSize>& u) {
    Theta th;
    for (int i = 0; i < Theta::kSize; ++i)
        th.set(i, is_logit(i) ? inv_logit(u[i]) : is_log(i) ? std::exp(u[i]) : u[i]);
    return th;
}

std::vector<double> fd_gradient(const Objective& f, const std::vector<double>& x, double rel_step) {
    return fd_gradient(f, x, rel_step, f(x), nullptr);
}

std::vector<double> fd_gradient(const Objective& f, const std::vector<double>& x, double rel_step, double fx,
                                std::vector<double>* curvature) {
    std::vector<double> g(x.size());
    if (curvature) curvature->assign(x.size(), 0.0);
    std::vector<double> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double h = rel_step * fd_scale(x[i]);
        xp[i] = x[i] + h;
        double fp = f(xp);
        xp[i] = x[i] - h;
        double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
        if (!std::isfinite(g[i])) g[i] = 0.0;
        if (curvature) {
            double c = (fp - 2.0 * fx + fm) / (h * h);
            (*curvature)[i] = std::isfinite(c) ? c : 0.0;
        }
    }
    return g;
}

BfgsResult bfgs_minimize(const Objective& f, std::vector<double> x, const BfgsOptions& opt) {
    const std::size_t n = x.size();
    BfgsResult res;
    auto eval = [&](const std::vector<double>& v) {
        ++res.evaluations;
        double y = f(v);
        return std::isfinite(y) ? y : INFINITY;
    };
    double fx = eval(x);
    if (!std::isfinite(fx)) {
        res.x = x;
        res.f = fx;
        return res;
    }
    std::vector<double> curv;
    std::vector<double> g = fd_gradient(eval, x, opt.grad_step, fx, &curv);
    // Inverse-Hessian seed from the diagonal curvature picked up by the central differences.
    auto diagonal_seed = [&](const std::vector<double>& c) {
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        double cmax = 0.0;
        for (double v : c) cmax = std::max(cmax, v);
        for (std::size_t i = 0; i < n; ++i) {
            double v = c[i] > 1e-8 * cmax ? c[i] : (cmax > 0.0 ? cmax : 1.0);
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0 / v;
        }
        return D;
    };
    Eigen::MatrixXd Hinv = diagonal_seed(curv);
    bool fresh = true;
    int small_steps = 0;

    auto sup = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double e : v) m = std::max(m, std::abs(e));
        return m;
    };

    for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
        if (sup(g) < opt.grad_tol) {
            res.converged = true;
            break;
        }
        Eigen::Map<const Eigen::VectorXd> ge(g.data(), static_cast<Eigen::Index>(n));
        Eigen::VectorXd p = -Hinv * ge;
        double slope = p.dot(ge);
        if (!(slope < 0.0)) {
            Hinv = diagonal_seed(curv);
            fresh = true;
            p = -Hinv * ge;
            slope = p.dot(ge);
        }
        double pmax = p.cwiseAbs().maxCoeff();
        double alpha = pmax > opt.max_step ? opt.max_step / pmax : 1.0;

        std::vector<double> xn(n);
        double fn = INFINITY;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + alpha * p(static_cast<Eigen::Index>(i));
            fn = eval(xn);
            if (fn <= fx + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (!fresh) {
                Hinv = diagonal_seed(curv);
                fresh = true;
                continue;
            }
            break;
        }
        std::vector<double> gn = fd_gradient(eval, xn, opt.grad_step, fn, &curv);
        Eigen::VectorXd s(static_cast<Eigen::Index>(n)), yv(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            s(static_cast<Eigen::Index>(i)) = xn[i] - x[i];
            yv(static_cast<Eigen::Index>(i)) = gn[i] - g[i];
        }
        double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            fresh = false;
            double rho = 1.0 / sy;
            Eigen::MatrixXd I = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            Hinv = (I - rho * s * yv.transpose()) * Hinv * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
        }
        double df = fx - fn;
        x = xn;
        fx = fn;
        g = gn;
        if (df < opt.f_tol * (1.0 + std::abs(fx))) {
            if (++small_steps >= 3) {
                res.converged = true;
                ++res.iterations;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    res.x = x;
    res.f = fx;
    res.grad_norm = sup(g);
    if (res.grad_norm < opt.grad_tol) res.converged = true;
    return res;
}

Theta production_first_stage(const LikelihoodData& d) {
    const Eigen::Index n = static_cast<Eigen::Index>(d.size());
    Eigen::MatrixXd Z(n, 6), X(n, 4);
    Eigen::VectorXd y(n), ln(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = d.states[static_cast<std::size_t>(i)];
        Z(i, 0) = 1.0;
        Z(i, 1) = s.covariates.birth_length;
        Z(i, 2) = s.covariates.male;
        Z(i, 3) = s.atole ? 1.0 : 0.0;
        Z(i, 4) = std::log(s.income_two_year);
        Z(i, 5) = std::log(s.protein_price);
        ln(i) = d.log_n_obs[static_cast<std::size_t>(i)];
        y(i) = d.log_h_obs[static_cast<std::size_t>(i)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> zq(Z);
    Eigen::VectorXd pi = zq.solve(ln);
    Eigen::VectorXd ln_hat = Z * pi;
    double first_resid_var = (ln - ln_hat).squaredNorm() / static_cast<double>(n);

    X.col(0).setOnes();
    X.col(1) = Z.col(1);
    X.col(2) = Z.col(2);
    X.col(3) = ln_hat;
    Eigen::VectorXd b = X.colPivHouseholderQr().solve(y);
    X.col(3) = ln;
    double resid_var = (y - X * b).squaredNorm() / static_cast<double>(n);

    Theta th;
    th.beta = std::clamp(b(3), 0.01, 0.5);
    th.sigma_eta = std::sqrt(std::max(0.8 * first_resid_var, 1e-4));
    double rest = std::max(resid_var - th.beta * th.beta * th.sigma_eta * th.sigma_eta, 1e-6);
    th.sigma_eps = std::sqrt(0.1 * rest);
    th.sigma_iota = std::sqrt(0.9 * rest);
    th.alpha_h0 = b(1);
    th.alpha_male = b(2);
    // Intercept absorbs the log-error means; undo them.
    th.A = b(0) + th.beta * th.mu_eta() - th.mu_iota();
    return th;
}

namespace {

std::vector<double> to_vec(const std::array<double, Theta::kSize>& a) { return {a.begin(), a.end()}; }

std::array<double, Theta::kSize> to_arr(const std::vector<double>& v) {
    std::array<double, Theta::kSize> a{};
    std::copy(v.begin(), v.end(), a.begin());
    return a;
}

}  // namespace

EstimateResult estimate(const CohortPanel& panel, const EstimationConfig& cfg, const MonetaryScale& scale,
                        const CovariateScaling& cov, const std::vector<Theta>& extra_starts) {
    LikelihoodData data = prepare_likelihood(panel, cfg, scale, cov);
    const double n = static_cast<double>(data.size());

    int evals = 0;
    Objective objective = [&](const std::vector<double>& u) {
        ++evals;
        Theta th = from_unconstrained(to_arr(u));
        try {
            th.validate();
            return -log_likelihood(data, th, cfg.grid) / n;
        } catch (const DomainError&) {
            return static_cast<double>(INFINITY);
        }
    };

    Theta prod = production_first_stage(data);
    std::vector<Theta> starts;
    for (double dlt : cfg.start_deltas)
        for (const auto& gl : cfg.start_gamma_lambda) {
            Theta t = prod;
            t.rho = cfg.start_rho;
            t.gamma = gl[0];
            t.lambda = gl[1];
            t.delta = dlt;
            starts.push_back(t);
        }
    for (const auto& t : extra_starts) starts.push_back(t);

    EstimateResult res;
    res.sigma_r = cfg.sigma_r;
    res.rows = data.size();
    res.reference_source = cfg.reference_source == ReferenceSource::Trend ? "trend" : "column";

    for (const auto& t : starts) {
        StartRecord rec;
        rec.start = t;
        rec.log_likelihood = -objective(to_vec(to_unconstrained(t))) * n;
        res.starts.push_back(rec);
    }
    std::vector<std::size_t> order(starts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return res.starts[a].log_likelihood > res.starts[b].log_likelihood;
    });

    BfgsOptions bo;
    bo.max_iter = cfg.max_iter;
    bo.grad_tol = cfg.grad_tol;
    bo.f_tol = cfg.f_tol;
    bo.grad_step = cfg.grad_step;

    std::optional<BfgsResult> best;
    int refined = 0;
    for (std::size_t k : order) {
        if (refined >= cfg.refine_starts) break;
        if (!std::isfinite(res.starts[k].log_likelihood)) continue;
        BfgsResult r = bfgs_minimize(objective, to_vec(to_unconstrained(starts[k])), bo);
        ++refined;
        res.starts[k].refined = true;
        res.starts[k].final_log_likelihood = -r.f * n;
        res.starts[k].iterations = r.iterations;
        if (std::isfinite(r.f) && (!best || r.f < best->f)) best = r;
    }
    if (!best) throw AllStartsFailed("no multistart point produced a finite likelihood");

    res.theta_hat = from_unconstrained(to_arr(best->x));
    res.log_likelihood = -best->f * n;
    res.converged = best->converged;
    res.iterations = best->iterations;
    res.gradient_norm = best->grad_norm;

    // Hessian of the total log-likelihood in unconstrained coordinates.
    const int k = Theta::kSize;
    const std::vector<double> u = best->x;
    auto ll_at = [&](const std::vector<double>& v) { return -objective(v) * n; };
    const double f0 = res.log_likelihood;
    auto information = [&](double step) {
        std::vector<double> h(k);
        for (int i = 0; i < k; ++i) h[i] = step * fd_scale(u[i]);
        Eigen::MatrixXd H(k, k);
        for (int i = 0; i < k; ++i) {
            auto v = u;
            v[i] = u[i] + h[i];
            double fp = ll_at(v);
            v[i] = u[i] - h[i];
            double fm = ll_at(v);
            H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        }
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j) {
                auto v = u;
                v[i] = u[i] + h[i];
                v[j] = u[j] + h[j];
                double fpp = ll_at(v);
                v[j] = u[j] - h[j];
                double fpm = ll_at(v);
                v[i] = u[i] - h[i];
                double fmm = ll_at(v);
                v[j] = u[j] + h[j];
                double fmp = ll_at(v);
                H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            }
        return Eigen::MatrixXd(-H);
    };

    // Nearly collinear preference parameters can make the cross differences at the configured
    // step inconsistent; one retry at a tenth of the step is allowed before giving up.
    for (double step : {cfg.hess_step, 0.1 * cfg.hess_step}) {
        Eigen::MatrixXd info = information(step);
        if (!info.allFinite()) continue;
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        bool full = llt.info() == Eigen::Success;
        // Coordinates with no curvature (a scale parameter driven to zero) are held fixed and the
        // remaining block is inverted on its own.
        std::vector<int> keep;
        std::vector<std::string> dropped;
        double dmax = info.diagonal().maxCoeff();
        for (int i = 0; i < k; ++i) {
            if (full || info(i, i) > 1e-8 * dmax) keep.push_back(i);
            else dropped.push_back(Theta::name(i));
        }
        if (!full && dropped.empty()) continue;
        const int m = static_cast<int>(keep.size());
        if (m == 0) continue;
        Eigen::MatrixXd sub(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) sub(a, b) = info(keep[a], keep[b]);
        Eigen::LLT<Eigen::MatrixXd> sl(sub);
        if (sl.info() != Eigen::Success) continue;
        Eigen::MatrixXd cov_u = sl.solve(Eigen::MatrixXd::Identity(m, m));
        std::array<double, Theta::kSize> se{};
        se.fill(NAN);
        for (int a = 0; a < m; ++a) {
            int i = keep[a];
            double v = res.theta_hat.get(i);
            double jac = is_logit(i) ? v * (1.0 - v) : is_log(i) ? v : 1.0;
            se[i] = std::abs(jac) * std::sqrt(std::max(cov_u(a, a), 0.0));
        }
        res.standard_errors = se;
        res.hessian_negative_definite = full;
        res.boundary_parameters = dropped;
        res.hessian_step = step;
        break;
    }
    res.evaluations = evals;

    res.satiation_point = res.theta_hat.rho < 0.0 ? -1.0 / (2.0 * res.theta_hat.rho) : INFINITY;
    std::size_t above = 0;
    for (const auto& s : data.states) above += s.income_two_year > res.satiation_point;
    res.share_above_satiation = static_cast<double>(above) / n;
    return res;
}

std::vector<SweepCell> sigma_r_sweep(const CohortPanel& panel, const EstimationConfig& cfg,
                                     const MonetaryScale& scale, const CovariateScaling& cov,
                                     const std::vector<double>& sigma_list) {
    if (sigma_list.empty()) throw InvalidArgument("sigma_r sweep needs at least one value");
    std::vector<SweepCell> out;
    std::vector<Theta> warm;
    for (double s : sigma_list) {
        SweepCell cell;
        cell.sigma_r = s;
        try {
            EstimationConfig c = cfg;
            c.sigma_r = s;
            cell.result = estimate(panel, c, scale, cov, warm);
            warm = {cell.result->theta_hat};
        } catch (const DomainError& e) {
            cell.error = e.what();
        }
        out.push_back(std::move(cell));
    }
    return out;
}

}  // namespace refnut
