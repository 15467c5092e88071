#include "refnut/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace refnut {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void num(const char* key, double& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number()) throw SchemaError(where(key) + ": expected a number");
        out = v.get<double>();
    }

    template <class I>
    void integer(const char* key, I& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number_integer() && !v.is_number_unsigned()) throw SchemaError(where(key) + ": expected an integer");
        out = v.get<I>();
    }

    void boolean(const char* key, bool& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_boolean()) throw SchemaError(where(key) + ": expected true or false");
        out = v.get<bool>();
    }

    void str(const char* key, std::string& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_string()) throw SchemaError(where(key) + ": expected a string");
        out = v.get<std::string>();
    }

    template <class T>
    void array(const char* key, std::vector<T>& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_array()) throw SchemaError(where(key) + ": expected an array");
        std::vector<T> tmp;
        for (const auto& e : v) {
            if (!e.is_number()) throw SchemaError(where(key) + ": expected numeric entries");
            if constexpr (std::is_integral_v<T>) {
                if (!e.is_number_integer()) throw SchemaError(where(key) + ": expected integer entries");
            }
            tmp.push_back(e.get<T>());
        }
        out = std::move(tmp);
    }

    std::string where(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            (void)v;
            if (!seen_.count(k)) throw SchemaError(path_ + ": unknown key '" + k + "'");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_grid(Reader r, GridConfig& g) {
    r.integer("q1", g.q1);
    r.integer("q2", g.q2);
    r.integer("max_iters", g.max_iters);
    r.num("tol", g.tol);
    r.num("refine_width", g.refine_width);
    r.finish();
}

json grid_json(const GridConfig& g) {
    return {{"q1", g.q1}, {"q2", g.q2}, {"max_iters", g.max_iters}, {"tol", g.tol}, {"refine_width", g.refine_width}};
}

void read_sigma_policy(Reader r, SigmaRPolicy& p) {
    std::string kind = p.kind == SigmaRPolicy::Kind::Fixed ? "fixed" : "sampling_error";
    r.str("kind", kind);
    if (kind == "fixed") p.kind = SigmaRPolicy::Kind::Fixed;
    else if (kind == "sampling_error") p.kind = SigmaRPolicy::Kind::SamplingError;
    else throw SchemaError(r.where("kind") + ": expected 'fixed' or 'sampling_error'");
    r.num("value", p.value);
    r.num("floor", p.floor);
    r.finish();
}

json sigma_policy_json(const SigmaRPolicy& p) {
    return {{"kind", p.kind == SigmaRPolicy::Kind::Fixed ? "fixed" : "sampling_error"},
            {"value", p.value},
            {"floor", p.floor}};
}

}  // namespace

void RunConfig::validate() const {
    grid.validate();
    estimation.validate();
    sigma_r_policy.validate();
    monetary_scale.validate();
    generator.validate();
    decomposition.validate();
    policy.validate();
    if (covariates.mode == CovariateScaling::Mode::Scaled && !(covariates.scale > 0.0))
        throw InvalidArgument("covariate scale must be positive");
}

RunConfig config_from_json_text(const std::string& text, const std::string& source) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source + ": " + e.what());
    }
    // A run manifest carries the resolved configuration; accept it directly.
    if (j.is_object() && j.contains("manifest_version") && j.contains("config")) j = j.at("config");

    RunConfig c;
    Reader top(j, source);
    top.integer("seed", c.seed);
    top.str("output_dir", c.output_dir);
    if (top.has("grid")) read_grid(Reader(top.raw("grid"), top.where("grid")), c.grid);
    if (top.has("sigma_r_policy"))
        read_sigma_policy(Reader(top.raw("sigma_r_policy"), top.where("sigma_r_policy")), c.sigma_r_policy);
    if (top.has("monetary_scale")) {
        Reader r(top.raw("monetary_scale"), top.where("monetary_scale"));
        r.num("units_per_quetzal", c.monetary_scale.units_per_quetzal);
        r.num("intake_days", c.monetary_scale.intake_days);
        r.num("price_grams", c.monetary_scale.price_grams);
        r.finish();
    }
    if (top.has("covariates")) {
        Reader r(top.raw("covariates"), top.where("covariates"));
        std::string mode = c.covariates.mode == CovariateScaling::Mode::Scaled ? "scaled" : "demeaned_cm";
        r.str("mode", mode);
        if (mode == "scaled") c.covariates.mode = CovariateScaling::Mode::Scaled;
        else if (mode == "demeaned_cm") c.covariates.mode = CovariateScaling::Mode::DemeanedCm;
        else throw SchemaError(r.where("mode") + ": expected 'scaled' or 'demeaned_cm'");
        r.num("center", c.covariates.center);
        r.num("scale", c.covariates.scale);
        r.finish();
    }
    if (top.has("estimation")) {
        Reader r(top.raw("estimation"), top.where("estimation"));
        auto& e = c.estimation;
        r.integer("m_draws", e.m_draws);
        r.num("sigma_r", e.sigma_r);
        r.integer("crn_seed", e.crn_seed);
        std::string src = e.reference_source == ReferenceSource::Trend ? "trend" : "column";
        r.str("reference_source", src);
        if (src == "trend") e.reference_source = ReferenceSource::Trend;
        else if (src == "column") e.reference_source = ReferenceSource::Column;
        else throw SchemaError(r.where("reference_source") + ": expected 'trend' or 'column'");
        r.num("trend_origin", e.trend_origin);
        if (r.has("grid")) read_grid(Reader(r.raw("grid"), r.where("grid")), e.grid);
        r.array("start_deltas", e.start_deltas);
        if (r.has("start_gamma_lambda")) {
            const json& v = r.raw("start_gamma_lambda");
            if (!v.is_array()) throw SchemaError(r.where("start_gamma_lambda") + ": expected an array of pairs");
            e.start_gamma_lambda.clear();
            for (const auto& p : v) {
                if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                    throw SchemaError(r.where("start_gamma_lambda") + ": expected [gamma, lambda] pairs");
                e.start_gamma_lambda.push_back({p[0].get<double>(), p[1].get<double>()});
            }
        }
        r.num("start_rho", e.start_rho);
        r.integer("refine_starts", e.refine_starts);
        r.integer("max_iter", e.max_iter);
        r.num("grad_tol", e.grad_tol);
        r.num("f_tol", e.f_tol);
        r.num("grad_step", e.grad_step);
        r.num("hess_step", e.hess_step);
        r.integer("min_rows", e.min_rows);
        r.finish();
    }
    if (top.has("generator")) {
        Reader r(top.raw("generator"), top.where("generator"));
        auto& g = c.generator;
        r.integer("n_per_cell", g.n_per_cell);
        r.array("cohorts", g.cohorts);
        r.num("fresco_income_mean", g.fresco_income.mean);
        r.num("fresco_income_sd", g.fresco_income.sd);
        r.num("atole_income_mean", g.atole_income.mean);
        r.num("atole_income_sd", g.atole_income.sd);
        r.num("income_years", g.income_years);
        r.num("male_share", g.male_share);
        r.num("birth_length_mean", g.birth_length_mean);
        r.num("birth_length_sd", g.birth_length_sd);
        r.num("price_mean", g.price_mean);
        r.num("price_sd", g.price_sd);
        r.num("price_year_share", g.price_year_share);
        r.num("reference_level", g.reference_level);
        r.boolean("measurement_error", g.measurement_error);
        r.finish();
    }
    if (top.has("decomposition")) {
        Reader r(top.raw("decomposition"), top.where("decomposition"));
        auto& d = c.decomposition;
        r.array("cohorts", d.cohorts);
        r.array("cohort_counts", d.cohort_counts);
        r.integer("households_per_cohort", d.households_per_cohort);
        r.num("fresco_slope", d.fresco_slope);
        r.num("atole_slope", d.atole_slope);
        r.num("fresco_mean_height", d.fresco_mean_height);
        r.num("atole_mean_height", d.atole_mean_height);
        r.num("target_fresco_intake", d.target_fresco_intake);
        if (r.has("fresco_level")) {
            const json& v = r.raw("fresco_level");
            if (v.is_null()) d.fresco_level.reset();
            else if (v.is_number()) d.fresco_level = v.get<double>();
            else throw SchemaError(r.where("fresco_level") + ": expected a number or null");
        }
        r.num("sigma_r", d.sigma_r);
        r.boolean("gender_shift", d.gender_shift);
        r.num("male_share", d.male_share);
        r.finish();
    }
    if (top.has("policy")) {
        Reader r(top.raw("policy"), top.where("policy"));
        auto& p = c.policy;
        r.integer("population_size", p.population_size);
        r.integer("source_households", p.source_households);
        r.array("cohorts", p.cohorts);
        r.num("initial_reference", p.initial_reference);
        if (r.has("sigma_r_policy"))
            read_sigma_policy(Reader(r.raw("sigma_r_policy"), r.where("sigma_r_policy")), p.sigma_r);
        r.num("target_tau", p.target_tau);
        r.num("target_delta", p.target_delta);
        r.array("taus", p.taus);
        r.num("delta_step", p.delta_step);
        r.finish();
    }
    if (top.has("frontier")) {
        Reader r(top.raw("frontier"), top.where("frontier"));
        auto& f = c.frontier;
        r.integer("points", f.points);
        r.array("lambdas", f.lambdas);
        r.array("mu_rs", f.mu_rs);
        r.array("sigma_rs", f.sigma_rs);
        r.num("h_min", f.h_min);
        r.num("h_max", f.h_max);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

std::string config_to_json_text(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["grid"] = grid_json(c.grid);
    j["sigma_r_policy"] = sigma_policy_json(c.sigma_r_policy);
    j["monetary_scale"] = {{"units_per_quetzal", c.monetary_scale.units_per_quetzal},
                           {"intake_days", c.monetary_scale.intake_days},
                           {"price_grams", c.monetary_scale.price_grams}};
    j["covariates"] = {{"mode", c.covariates.mode == CovariateScaling::Mode::Scaled ? "scaled" : "demeaned_cm"},
                       {"center", c.covariates.center},
                       {"scale", c.covariates.scale}};
    const auto& e = c.estimation;
    json gl = json::array();
    for (const auto& p : e.start_gamma_lambda) gl.push_back({p[0], p[1]});
    j["estimation"] = {{"m_draws", e.m_draws},
                       {"sigma_r", e.sigma_r},
                       {"crn_seed", e.crn_seed},
                       {"reference_source", e.reference_source == ReferenceSource::Trend ? "trend" : "column"},
                       {"trend_origin", e.trend_origin},
                       {"grid", grid_json(e.grid)},
                       {"start_deltas", e.start_deltas},
                       {"start_gamma_lambda", gl},
                       {"start_rho", e.start_rho},
                       {"refine_starts", e.refine_starts},
                       {"max_iter", e.max_iter},
                       {"grad_tol", e.grad_tol},
                       {"f_tol", e.f_tol},
                       {"grad_step", e.grad_step},
                       {"hess_step", e.hess_step},
                       {"min_rows", e.min_rows}};
    const auto& g = c.generator;
    j["generator"] = {{"n_per_cell", g.n_per_cell},
                      {"cohorts", g.cohorts},
                      {"fresco_income_mean", g.fresco_income.mean},
                      {"fresco_income_sd", g.fresco_income.sd},
                      {"atole_income_mean", g.atole_income.mean},
                      {"atole_income_sd", g.atole_income.sd},
                      {"income_years", g.income_years},
                      {"male_share", g.male_share},
                      {"birth_length_mean", g.birth_length_mean},
                      {"birth_length_sd", g.birth_length_sd},
                      {"price_mean", g.price_mean},
                      {"price_sd", g.price_sd},
                      {"price_year_share", g.price_year_share},
                      {"reference_level", g.reference_level},
                      {"measurement_error", g.measurement_error}};
    const auto& d = c.decomposition;
    j["decomposition"] = {{"cohorts", d.cohorts},
                          {"cohort_counts", d.cohort_counts},
                          {"households_per_cohort", d.households_per_cohort},
                          {"fresco_slope", d.fresco_slope},
                          {"atole_slope", d.atole_slope},
                          {"fresco_mean_height", d.fresco_mean_height},
                          {"atole_mean_height", d.atole_mean_height},
                          {"target_fresco_intake", d.target_fresco_intake},
                          {"fresco_level", d.fresco_level ? json(*d.fresco_level) : json(nullptr)},
                          {"sigma_r", d.sigma_r},
                          {"gender_shift", d.gender_shift},
                          {"male_share", d.male_share}};
    const auto& p = c.policy;
    j["policy"] = {{"population_size", p.population_size},
                   {"source_households", p.source_households},
                   {"cohorts", p.cohorts},
                   {"initial_reference", p.initial_reference},
                   {"sigma_r_policy", sigma_policy_json(p.sigma_r)},
                   {"target_tau", p.target_tau},
                   {"target_delta", p.target_delta},
                   {"taus", p.taus},
                   {"delta_step", p.delta_step}};
    const auto& f = c.frontier;
    j["frontier"] = {{"points", f.points},     {"lambdas", f.lambdas}, {"mu_rs", f.mu_rs},
                     {"sigma_rs", f.sigma_rs}, {"h_min", f.h_min},     {"h_max", f.h_max}};
    return j.dump(2) + "\n";
}

RunConfig load_config(const std::filesystem::path& path) {
    return config_from_json_text(read_text(path), path.string());
}

Theta theta_from_json_text(const std::string& text, const std::string& source) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source + ": " + e.what());
    }
    // An estimate record can be used directly as a theta file.
    if (j.is_object() && j.contains("theta_hat")) j = j.at("theta_hat");
    Reader r(j, source);
    Theta th;
    for (int i = 0; i < Theta::kSize; ++i) {
        if (!r.has(Theta::name(i))) throw SchemaError(source + ": missing parameter '" + Theta::name(i) + "'");
        double v = th.get(i);
        r.num(Theta::name(i), v);
        th.set(i, v);
    }
    r.finish();
    th.validate();
    return th;
}

std::string theta_to_json_text(const Theta& th) {
    ordered_json j;
    for (int i = 0; i < Theta::kSize; ++i) j[Theta::name(i)] = th.get(i);
    return j.dump(2) + "\n";
}

Theta load_theta(const std::string& spec) {
    const std::string prefix = "published:";
    if (spec.rfind(prefix, 0) == 0) {
        double s = parse_double(spec.substr(prefix.size()), "theta preset");
        return Theta::published(s);
    }
    return theta_from_json_text(read_text(spec), spec);
}

std::string estimate_to_json_text(const EstimateResult& r) {
    ordered_json j;
    ordered_json th, se;
    for (int i = 0; i < Theta::kSize; ++i) {
        th[Theta::name(i)] = r.theta_hat.get(i);
        if (r.standard_errors) {
            double v = (*r.standard_errors)[i];
            se[Theta::name(i)] = std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
        }
    }
    j["theta_hat"] = th;
    j["standard_errors"] = r.standard_errors ? se : ordered_json(nullptr);
    j["log_likelihood"] = r.log_likelihood;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["evaluations"] = r.evaluations;
    j["gradient_norm"] = r.gradient_norm;
    j["hessian_negative_definite"] = r.hessian_negative_definite;
    j["boundary_parameters"] = r.boundary_parameters;
    j["hessian_step"] = r.hessian_step;
    j["sigma_r"] = r.sigma_r;
    j["rows"] = r.rows;
    j["reference_source"] = r.reference_source;
    j["satiation_point"] = std::isfinite(r.satiation_point) ? ordered_json(r.satiation_point) : ordered_json(nullptr);
    j["share_income_above_satiation"] = r.share_above_satiation;
    ordered_json starts = ordered_json::array();
    for (const auto& s : r.starts) {
        ordered_json e;
        e["delta"] = s.start.delta;
        e["gamma"] = s.start.gamma;
        e["lambda"] = s.start.lambda;
        e["log_likelihood"] = std::isfinite(s.log_likelihood) ? ordered_json(s.log_likelihood) : ordered_json(nullptr);
        e["refined"] = s.refined;
        if (s.refined) {
            e["final_log_likelihood"] = s.final_log_likelihood;
            e["iterations"] = s.iterations;
        }
        starts.push_back(e);
    }
    j["starts"] = starts;
    return j.dump(2) + "\n";
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace refnut
