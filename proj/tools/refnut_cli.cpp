// refnut: command-line driver for solving, generating, estimating and simulating.

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "refnut/config.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace refnut;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingTheta : DomainError {
    using DomainError::DomainError;
};

// Everything a subcommand may read from the command line. Optional fields stay unset unless given,
// so a manifest replay can fill them.
struct Options {
    std::string config;
    std::string data;
    std::string theta;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
    std::string sigma_r;
    std::optional<double> tau;
    std::optional<double> delta;
    std::string cohorts;
    std::string scenario;
    // solve / frontier household
    std::optional<double> income;
    std::optional<double> price;
    std::optional<double> birth_length;
    std::optional<double> mu_r;
    std::optional<double> eps;
    bool atole = false;
    bool male = false;
};

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(std::string("cannot parse ") + what + " entry '" + item + "'");
        }
    }
    if (out.empty()) throw UsageError(std::string(what) + " list is empty");
    return out;
}

std::vector<int> parse_years(const std::string& text) {
    std::vector<int> years;
    for (double v : parse_list(text, "--cohorts")) {
        if (v != static_cast<int>(v)) throw UsageError("--cohorts entries must be whole years");
        years.push_back(static_cast<int>(v));
    }
    return years;
}

class Run {
public:
    Run(std::string sub, Options opt) : sub_(std::move(sub)), opt_(std::move(opt)) {}

    int execute() {
        load();
        if (opt_.workers) omp_set_num_threads(*opt_.workers);
        if (sub_ == "solve") do_solve();
        else if (sub_ == "generate") do_generate();
        else if (sub_ == "estimate") do_estimate();
        else if (sub_ == "sweep-sigma") do_sweep();
        else if (sub_ == "simulate") do_simulate();
        else if (sub_ == "decompose") do_decompose();
        else if (sub_ == "policy") do_policy();
        else if (sub_ == "frontier") do_frontier();
        write_manifest();
        std::cout << "wrote " << outputs_.size() << " file(s) to " << out_dir_.string() << "\n";
        return 0;
    }

private:
    std::string sub_;
    Options opt_;
    RunConfig cfg_;
    std::optional<Theta> theta_;
    ordered_json manifest_options_ = ordered_json::object();
    ordered_json inputs_ = ordered_json::object();
    fs::path out_dir_;
    std::string expected_data_hash_;  // from a replayed manifest
    std::vector<std::pair<std::string, std::string>> outputs_;  // name, hash

    // ---- setup ----

    void load() {
        ordered_json replay;
        if (!opt_.config.empty()) {
            std::string text = read_text(opt_.config);
            cfg_ = config_from_json_text(text, opt_.config);
            ordered_json j = ordered_json::parse(text, nullptr, false);
            if (j.is_object() && j.contains("manifest_version")) {
                if (j.value("subcommand", std::string()) != sub_)
                    throw DomainError("manifest " + opt_.config + " was written by '" +
                                      j.value("subcommand", std::string("?")) + "', not '" + sub_ + "'");
                replay = j;
            }
        }
        if (replay.is_object()) fill_from_manifest(replay);
        if (opt_.seed) cfg_.seed = *opt_.seed;
        cfg_.generator.seed = cfg_.seed;
        out_dir_ = opt_.out.empty() ? fs::path(cfg_.output_dir) : fs::path(opt_.out);

        if (!opt_.theta.empty()) theta_ = load_theta(opt_.theta);
        else if (replay.is_object() && replay.contains("theta"))
            theta_ = theta_from_json_text(replay.at("theta").dump(), opt_.config + ":theta");

        record_options();
    }

    // Options not given on this command line come from the manifest being replayed.
    void fill_from_manifest(const ordered_json& m) {
        if (!m.contains("options")) return;
        const auto& o = m.at("options");
        auto str = [&](const char* k, std::string& dst) {
            if (dst.empty() && o.contains(k)) dst = o.at(k).get<std::string>();
        };
        auto num = [&](const char* k, std::optional<double>& dst) {
            if (!dst && o.contains(k)) dst = o.at(k).get<double>();
        };
        auto flag = [&](const char* k, bool& dst) {
            if (!dst && o.contains(k)) dst = o.at(k).get<bool>();
        };
        str("data", opt_.data);
        str("sigma_r", opt_.sigma_r);
        str("cohorts", opt_.cohorts);
        str("scenario", opt_.scenario);
        num("tau", opt_.tau);
        num("delta", opt_.delta);
        num("income", opt_.income);
        num("price", opt_.price);
        num("birth_length", opt_.birth_length);
        num("mu_r", opt_.mu_r);
        num("eps", opt_.eps);
        flag("atole", opt_.atole);
        flag("male", opt_.male);
        if (!opt_.seed && m.contains("seed")) opt_.seed = m.at("seed").get<std::uint64_t>();
        if (m.contains("inputs") && m.at("inputs").contains("data"))
            expected_data_hash_ = m.at("inputs").at("data").at("fnv1a").get<std::string>();
    }

    void record_options() {
        auto& o = manifest_options_;
        if (!opt_.data.empty()) o["data"] = opt_.data;
        if (!opt_.sigma_r.empty()) o["sigma_r"] = opt_.sigma_r;
        if (!opt_.cohorts.empty()) o["cohorts"] = opt_.cohorts;
        if (!opt_.scenario.empty()) o["scenario"] = opt_.scenario;
        if (opt_.tau) o["tau"] = *opt_.tau;
        if (opt_.delta) o["delta"] = *opt_.delta;
        if (opt_.income) o["income"] = *opt_.income;
        if (opt_.price) o["price"] = *opt_.price;
        if (opt_.birth_length) o["birth_length"] = *opt_.birth_length;
        if (opt_.mu_r) o["mu_r"] = *opt_.mu_r;
        if (opt_.eps) o["eps"] = *opt_.eps;
        if (opt_.atole) o["atole"] = true;
        if (opt_.male) o["male"] = true;
    }

    const Theta& theta() {
        if (!theta_)
            throw MissingTheta("MissingTheta: '" + sub_ +
                               "' needs parameters; pass --theta FILE (an estimate record or parameter file) "
                               "or --theta published:<sigma_r>");
        return *theta_;
    }

    double single_sigma_r(double fallback) const {
        if (opt_.sigma_r.empty()) return fallback;
        auto v = parse_list(opt_.sigma_r, "--sigma-r");
        if (v.size() != 1) throw UsageError("--sigma-r takes a single value for '" + sub_ + "'");
        if (!(v[0] > 0.0)) throw UsageError("--sigma-r must be positive");
        return v[0];
    }

    CohortPanel load_data() {
        if (opt_.data.empty()) throw UsageError("'" + sub_ + "' needs --data PANEL.csv");
        std::string text = read_text(opt_.data);
        if (!expected_data_hash_.empty() && fnv1a_hex(text) != expected_data_hash_)
            throw DomainError("data file " + opt_.data + " differs from the one recorded in the manifest");
        inputs_["data"] = {{"path", opt_.data}, {"fnv1a", fnv1a_hex(text)}};
        return panel_from_csv(text, opt_.data);
    }

    SimulationContext sim_context() {
        SimulationContext ctx;
        ctx.theta = theta();
        ctx.grid = cfg_.grid;
        ctx.scale = cfg_.monetary_scale;
        ctx.covariates = cfg_.covariates;
        ctx.generator = cfg_.generator;
        ctx.seed = cfg_.seed;
        return ctx;
    }

    HouseholdState household_state(double sigma_r) {
        Household h;
        h.income = opt_.income.value_or(2.0 * 515.57);
        h.price = opt_.price.value_or(cfg_.generator.price_mean);
        h.atole = opt_.atole ? 1 : 0;
        h.male = opt_.male ? 1 : 0;
        h.birth_length = opt_.birth_length.value_or(cfg_.covariates.center);
        HouseholdState s = to_state(h, cfg_.monetary_scale, cfg_.covariates,
                                    ReferenceBelief(opt_.mu_r.value_or(cfg_.generator.reference_level), sigma_r));
        s.eps = opt_.eps.value_or(0.0);
        s.validate();
        return s;
    }

    void emit(const std::string& name, const std::string& text) {
        fs::create_directories(out_dir_);
        write_text(out_dir_ / name, text);
        outputs_.emplace_back(name, fnv1a_hex(text));
    }

    void write_manifest() {
        std::string cfg_text = config_to_json_text(cfg_);
        ordered_json m;
        m["manifest_version"] = 1;
        m["tool_version"] = kVersion;
        m["subcommand"] = sub_;
        m["seed"] = cfg_.seed;
        m["config_hash"] = fnv1a_hex(cfg_text);
        m["options"] = manifest_options_;
        if (theta_) m["theta"] = ordered_json::parse(theta_to_json_text(*theta_));
        m["inputs"] = inputs_;
        ordered_json outs = ordered_json::object();
        for (const auto& [name, hash] : outputs_) outs[name] = hash;
        m["outputs"] = outs;
        m["config"] = ordered_json::parse(cfg_text);
        write_text(out_dir_ / "manifest.json", m.dump(2) + "\n");
    }

    // ---- subcommands ----

    void do_solve() {
        const Theta& th = theta();
        HouseholdState s = household_state(single_sigma_r(cfg_.sigma_r_policy.value));
        Solution sol = solve(s, th, cfg_.grid);
        FocReport foc = foc_check(s, th, sol);
        ordered_json j;
        j["n_star"] = sol.n_star;
        j["height"] = height24(th, s.covariates, s.eps, sol.n_star);
        j["consumption"] = consumption(s, th, sol.n_star);
        j["utility"] = sol.utility;
        j["corner"] = corner_name(sol.corner);
        j["converged"] = sol.converged;
        j["iterations"] = sol.iterations;
        j["resolution"] = sol.resolution;
        j["marginal_benefit"] = foc.mb;
        j["marginal_cost"] = foc.mc;
        j["foc_relative_gap"] = foc.relative_gap;
        j["affordable_max"] = affordable_max(s, th);
        emit("solve.json", j.dump(2) + "\n");
    }

    void do_generate() {
        GenerationContext g;
        g.theta = theta();
        g.grid = cfg_.grid;
        g.sigma_r = opt_.sigma_r.empty() ? cfg_.sigma_r_policy : SigmaRPolicy::fixed(single_sigma_r(0.0));
        g.scale = cfg_.monetary_scale;
        g.covariates = cfg_.covariates;
        GeneratorSpec spec = cfg_.generator;
        if (!opt_.cohorts.empty()) spec.cohorts = parse_years(opt_.cohorts);
        CohortPanel panel = generate_panel(spec, g);
        emit("panel.csv", panel_to_csv(panel));
    }

    void do_estimate() {
        CohortPanel panel = load_data();
        EstimationConfig ec = cfg_.estimation;
        ec.sigma_r = single_sigma_r(ec.sigma_r);
        EstimateResult r = estimate(panel, ec, cfg_.monetary_scale, cfg_.covariates);
        emit("estimate.json", estimate_to_json_text(r));
    }

    void do_sweep() {
        std::vector<double> sigmas{0.5, 1.5, 2.5, 3.5};
        if (!opt_.sigma_r.empty()) sigmas = parse_list(opt_.sigma_r, "--sigma-r");
        for (double s : sigmas)
            if (!(s > 0.0)) throw UsageError("--sigma-r values must be positive");
        CohortPanel panel = load_data();
        auto cells = sigma_r_sweep(panel, cfg_.estimation, cfg_.monetary_scale, cfg_.covariates, sigmas);
        std::ostringstream csv, jl;
        csv << "sigma_r";
        for (int i = 0; i < Theta::kSize; ++i) csv << ',' << Theta::name(i) << ',' << Theta::name(i) << "_se";
        csv << ",log_likelihood,converged,error\n";
        for (const auto& c : cells) {
            csv << format_double(c.sigma_r);
            if (c.result) {
                const auto& r = *c.result;
                for (int i = 0; i < Theta::kSize; ++i) {
                    csv << ',' << format_double(r.theta_hat.get(i)) << ',';
                    if (r.standard_errors && std::isfinite((*r.standard_errors)[i]))
                        csv << format_double((*r.standard_errors)[i]);
                }
                csv << ',' << format_double(r.log_likelihood) << ',' << (r.converged ? 1 : 0) << ",\n";
                ordered_json rec = ordered_json::parse(estimate_to_json_text(r));
                jl << rec.dump() << "\n";
            } else {
                for (int i = 0; i < Theta::kSize; ++i) csv << ",,";
                csv << ",,0," << '"' << c.error << '"' << "\n";
                jl << ordered_json{{"sigma_r", c.sigma_r}, {"error", c.error}}.dump() << "\n";
            }
        }
        emit("sweep.csv", csv.str());
        emit("sweep.jsonl", jl.str());
    }

    void do_simulate() {
        SimulationContext ctx = sim_context();
        std::string name = opt_.scenario.empty() ? "atole" : opt_.scenario;
        Scenario sc;
        sc.label = name;
        if (name == "fresco") {
            sc.atole_population = false;
        } else if (name == "atole") {
            sc.atole_population = true;
        } else if (name == "fresco_atole_price") {
            sc.atole_population = false;
            sc.price_discount = ctx.theta.delta;
        } else if (name == "atole_no_price") {
            sc.atole_population = true;
            sc.price_discount = 0.0;
        } else {
            throw UsageError("unknown --scenario '" + name +
                             "' (expected fresco, atole, fresco_atole_price or atole_no_price)");
        }
        std::vector<int> years = opt_.cohorts.empty() ? cfg_.generator.cohorts : parse_years(opt_.cohorts);
        SigmaRPolicy pol = opt_.sigma_r.empty() ? cfg_.sigma_r_policy : SigmaRPolicy::fixed(single_sigma_r(0.0));
        auto rows = forward_simulate(sc, years, cfg_.generator.n_per_cell, cfg_.generator.reference_level, pol, ctx);
        std::ostringstream csv;
        csv << "scenario,cohort_year,mu_r,sigma_r,mean_height,sd_height,mean_intake\n";
        for (const auto& r : rows)
            csv << name << ',' << r.year << ',' << format_double(r.belief.mu_r) << ','
                << format_double(r.belief.sigma_r) << ',' << format_double(r.mean_height) << ','
                << format_double(r.sd_height) << ',' << format_double(r.mean_intake) << "\n";
        emit("simulate.csv", csv.str());
    }

    void do_decompose() {
        SimulationContext ctx = sim_context();
        DecompositionConfig dc = cfg_.decomposition;
        if (!opt_.cohorts.empty()) dc.cohorts = parse_years(opt_.cohorts);
        dc.sigma_r = single_sigma_r(dc.sigma_r);
        DecompositionReport rep = decompose(dc, ctx);
        static const char* cells[5] = {"fresco", "fresco_atole_price", "fresco_atole_reference",
                                       "fresco_atole_both", "atole"};
        std::ostringstream csv;
        csv << "cohorts";
        for (const char* c : cells) csv << ',' << c << "_height," << c << "_protein";
        csv << ",price_effect,reference_given_price,reference_share\n";
        for (const auto& r : rep.rows) {
            csv << r.first_year << '-' << r.last_year;
            for (const auto& c : r.cells) csv << ',' << format_double(c.height) << ',' << format_double(c.protein);
            csv << ',' << format_double(r.price_effect) << ',' << format_double(r.reference_given_price) << ','
                << format_double(r.reference_share) << "\n";
        }
        emit("decomposition.csv", csv.str());
        ordered_json j;
        j["fresco_level"] = rep.fresco_level;
        j["fresco_mean_intake"] = rep.fresco_mean_intake;
        j["trend"] = {{"phi0", rep.trend.phi0},
                      {"phi1", rep.trend.phi1},
                      {"phi2", rep.trend.phi2},
                      {"phi3", rep.trend.phi3},
                      {"year_origin", rep.trend.year_origin}};
        emit("decomposition.json", j.dump(2) + "\n");
    }

    static void distribution_rows(std::ostringstream& csv, const std::string& label, const DistributionReport& r) {
        for (const auto& c : r.cohorts) {
            csv << label << ',' << format_double(r.tau) << ',' << format_double(r.delta) << ','
                << format_double(r.cost) << ',' << c.year << ',' << format_double(c.mu_r) << ','
                << format_double(c.mean) << ',' << format_double(c.sd);
            for (double p : c.percentiles) csv << ',' << format_double(p);
            csv << ',' << format_double(c.protein_mean);
            for (double q : c.quintile_medians) csv << ',' << format_double(q);
            csv << "\n";
        }
        csv << label << ',' << format_double(r.tau) << ',' << format_double(r.delta) << ',' << format_double(r.cost)
            << ",pooled,," << format_double(r.pooled_mean) << ',' << format_double(r.pooled_sd);
        for (double p : r.pooled_percentiles) csv << ',' << format_double(p);
        csv << ",,,,,,\n";
    }

    void do_policy() {
        if (opt_.tau.has_value() != opt_.delta.has_value())
            throw UsageError("give both --tau and --delta for a single policy, or neither for the balanced schedule");
        SimulationContext ctx = sim_context();
        PolicyConfig pc = cfg_.policy;
        if (!opt_.cohorts.empty()) pc.cohorts = parse_years(opt_.cohorts);
        if (!opt_.sigma_r.empty()) pc.sigma_r = SigmaRPolicy::fixed(single_sigma_r(0.0));
        PolicyPopulation pop = make_policy_population(pc, ctx);

        std::ostringstream csv;
        csv << "policy,tau,delta,cost,cohort_year,mu_r,mean,sd";
        for (int p = 10; p <= 90; p += 10) csv << ",p" << p;
        csv << ",protein_mean,q1_median,q2_median,q3_median,q4_median,q5_median\n";
        if (opt_.tau) {
            PolicySpec spec;
            spec.tau = *opt_.tau;
            spec.delta = *opt_.delta;
            spec.cohorts = pc.cohorts;
            spec.population_size = pc.population_size;
            distribution_rows(csv, "single", run_policy(spec, pop, pc, ctx));
            emit("policy.csv", csv.str());
            return;
        }
        PolicySchedule sch = balanced_schedule(pop, pc, ctx);
        distribution_rows(csv, "baseline", sch.baseline);
        distribution_rows(csv, "target", sch.reports.front());
        for (std::size_t i = 0; i < sch.entries.size(); ++i) distribution_rows(csv, "balanced", sch.reports[i + 1]);
        emit("policy.csv", csv.str());

        std::ostringstream sc;
        sc << "tau,delta,cost,z_target,relative_gap,quantization_bound\n";
        for (const auto& e : sch.entries)
            sc << format_double(e.tau) << ',' << format_double(e.delta) << ',' << format_double(e.cost) << ','
               << format_double(sch.z_target) << ',' << format_double(e.relative_gap) << ','
               << format_double(e.quantization_bound) << "\n";
        emit("policy_schedule.csv", sc.str());
    }

    void do_frontier() {
        const Theta& th = theta();
        HouseholdState s = household_state(single_sigma_r(cfg_.sigma_r_policy.value));
        auto rows = frontier_emit(s, th, cfg_.grid, cfg_.frontier);
        std::ostringstream csv;
        csv << "series,param,value,x,y\n";
        for (const auto& r : rows)
            csv << r.series << ',' << r.param << ',' << format_double(r.value) << ',' << format_double(r.x) << ','
                << format_double(r.y) << "\n";
        emit("frontier.csv", csv.str());
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"refnut: reference-dependent nutrition model toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Options opt;
    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"solve", "optimal intake for one household"},
        {"generate", "synthetic cohort panel"},
        {"estimate", "simulated maximum likelihood on a panel"},
        {"sweep-sigma", "re-estimate across reference-belief dispersions"},
        {"simulate", "forward cohort simulation for one scenario"},
        {"decompose", "split the Atole-Fresco height gap into price and reference parts"},
        {"policy", "targeted subsidy policies at equal cost"},
        {"frontier", "plot data for the production frontier and indifference curves"},
    };

    auto tau_check = CLI::Validator(
        [](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v)) return "tau must be a number";
            return (v > 0.0 && v <= 1.0) ? std::string() : std::string("tau must lie in (0,1]");
        },
        "in (0,1]");
    auto delta_check = CLI::Validator(
        [](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v)) return "delta must be a number";
            return (v >= 0.0 && v < 1.0) ? std::string() : std::string("delta must lie in [0,1)");
        },
        "in [0,1)");

    for (const auto& s : subs) {
        CLI::App* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("--config", opt.config, "run configuration or manifest (JSON)")->check(CLI::ExistingFile);
        sc->add_option("--seed", opt.seed, "root seed");
        sc->add_option("--out", opt.out, "output directory");
        sc->add_option("--workers", opt.workers, "worker threads")->check(CLI::PositiveNumber);
        sc->add_option("--theta", opt.theta, "parameter file, estimate record, or published:<sigma_r>");
        sc->add_option("--sigma-r", opt.sigma_r, "reference belief s.d. (a list for sweep-sigma)");
        sc->add_option("--cohorts", opt.cohorts, "comma-separated cohort years");
        const std::string n = s.name;
        if (n == "estimate" || n == "sweep-sigma") sc->add_option("--data", opt.data, "panel CSV");
        if (n == "policy") {
            sc->add_option("--tau", opt.tau, "poorest fraction targeted")->check(tau_check);
            sc->add_option("--delta", opt.delta, "price discount")->check(delta_check);
        }
        if (n == "simulate") sc->add_option("--scenario", opt.scenario, "fresco, atole, fresco_atole_price, atole_no_price");
        if (n == "solve" || n == "frontier") {
            sc->add_option("--income", opt.income, "two-year income, quetzales");
            sc->add_option("--price", opt.price, "protein price, quetzales per 10 kg");
            sc->add_option("--birth-length", opt.birth_length, "birth length, cm");
            sc->add_option("--mu-r", opt.mu_r, "reference mean, cm");
            sc->add_option("--eps", opt.eps, "productivity shock");
            sc->add_flag("--atole", opt.atole, "Atole arm (discounted price)");
            sc->add_flag("--male", opt.male, "male child");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::string sub = app.get_subcommands().front()->get_name();
    try {
        return Run(sub, opt).execute();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
