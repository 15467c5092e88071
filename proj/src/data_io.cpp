#include "refnut/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "refnut/rng.hpp"

namespace refnut {

HouseholdState to_state(const Household& h, const MonetaryScale& scale, const CovariateScaling& cov,
                        const ReferenceBelief& belief) {
    HouseholdState s;
    s.income_two_year = scale.income(h.income);
    s.protein_price = scale.price(h.price);
    s.atole = h.atole != 0;
    s.covariates.birth_length = cov.apply(h.birth_length);
    s.covariates.male = h.male;
    s.belief = belief;
    return s;
}

Household household_of(const PanelRow& r) {
    return Household{r.income, r.price, r.atole, r.male, r.birth_length};
}

void GeneratorSpec::validate() const {
    if (n_per_cell < 1) throw InvalidArgument("generator needs at least one household per cell");
    if (cohorts.empty()) throw InvalidArgument("generator needs at least one cohort year");
    for (const auto* m : {&fresco_income, &atole_income})
        if (!(m->mean > 0.0 && m->sd > 0.0)) throw InvalidArgument("income moments must be positive");
    if (!(income_years > 0.0)) throw InvalidArgument("income_years must be positive");
    if (!(male_share >= 0.0 && male_share <= 1.0)) throw InvalidArgument("male_share must lie in [0,1]");
    if (!(birth_length_mean > 0.0 && birth_length_sd > 0.0)) throw InvalidArgument("birth length moments must be positive");
    if (!(price_mean > 0.0 && price_sd > 0.0)) throw InvalidArgument("price moments must be positive");
    if (!(price_year_share >= 0.0 && price_year_share <= 1.0)) throw InvalidArgument("price_year_share must lie in [0,1]");
    if (!(reference_level > 0.0)) throw InvalidArgument("reference_level must be positive");
}

std::vector<Household> draw_households(const GeneratorSpec& spec, bool atole, int cohort_year, int n,
                                       std::uint64_t seed) {
    const IncomeMoments& im = atole ? spec.atole_income : spec.fresco_income;
    double m = im.mean * spec.income_years;
    double s = im.sd * spec.income_years;
    double sig = std::sqrt(std::log1p((s / m) * (s / m)));
    double mu = std::log(m) - 0.5 * sig * sig;

    // Calendar-year price level is shared by both arms.
    auto year_eng = rng::engine(seed, "price_year", {static_cast<std::uint64_t>(cohort_year)});
    std::normal_distribution<double> stdn(0.0, 1.0);
    double year_level = spec.price_mean + std::sqrt(spec.price_year_share) * spec.price_sd * stdn(year_eng);
    double idio_sd = std::sqrt(1.0 - spec.price_year_share) * spec.price_sd;

    auto eng = rng::engine(seed, "households",
                           {static_cast<std::uint64_t>(atole), static_cast<std::uint64_t>(cohort_year)});
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Household> out(static_cast<std::size_t>(n));
    for (auto& h : out) {
        h.income = std::exp(mu + sig * z(eng));
        h.price = std::max(1.0, year_level + idio_sd * z(eng));
        h.male = u(eng) < spec.male_share ? 1 : 0;
        h.birth_length = spec.birth_length_mean + spec.birth_length_sd * z(eng);
        h.atole = atole ? 1 : 0;
    }
    return out;
}

MeasurementDraw apply_measurement_error(double n_true, double h_true, const Theta& th, double z_eta,
                                        double z_iota) {
    double eta = th.mu_eta() + th.sigma_eta * z_eta;
    double iota = th.mu_iota() + th.sigma_iota * z_iota;
    return {n_true * std::exp(eta), h_true * std::exp(iota)};
}

CohortPanel generate_panel(const GeneratorSpec& spec, const GenerationContext& ctx) {
    spec.validate();
    ctx.theta.validate();
    ctx.grid.validate();
    ctx.sigma_r.validate();
    ctx.scale.validate();

    std::vector<int> years = spec.cohorts;
    std::sort(years.begin(), years.end());

    CohortPanel panel;
    panel.has_truth = true;
    long next_id = 1;
    for (int arm = 0; arm < 2; ++arm) {
        std::map<int, std::vector<double>> realized;
        for (int y : years) {
            auto hh = draw_households(spec, arm == 1, y, spec.n_per_cell, spec.seed);
            ReferenceBelief belief;
            auto prev = realized.find(y - 2);
            if (prev != realized.end()) {
                belief = belief_from_sample(HeightSample(prev->second), ctx.sigma_r);
            } else {
                double s0 = ctx.sigma_r.kind == SigmaRPolicy::Kind::Fixed ? ctx.sigma_r.value : ctx.sigma_r.floor;
                belief = ReferenceBelief(spec.reference_level, s0);
            }

            std::vector<HouseholdState> states(hh.size());
            std::vector<double> z_eta(hh.size()), z_iota(hh.size());
            for (std::size_t i = 0; i < hh.size(); ++i) {
                states[i] = to_state(hh[i], ctx.scale, ctx.covariates, belief);
                const std::initializer_list<std::uint64_t> key = {static_cast<std::uint64_t>(arm),
                                                                  static_cast<std::uint64_t>(y), i};
                auto e = rng::engine(spec.seed, "eps", key);
                std::normal_distribution<double> z(0.0, 1.0);
                states[i].eps = ctx.theta.sigma_eps * z(e);
                auto me = rng::engine(spec.seed, "measurement", key);
                std::normal_distribution<double> zm(0.0, 1.0);
                z_eta[i] = zm(me);
                z_iota[i] = zm(me);
            }
            auto sols = solve_batch(states, ctx.theta, ctx.grid);

            std::vector<double> heights(hh.size());
            for (std::size_t i = 0; i < hh.size(); ++i) {
                double n = sols[i].n_star;
                double h = height24(ctx.theta, states[i].covariates, states[i].eps, n);
                heights[i] = h;
                PanelRow r;
                r.id = next_id++;
                r.cohort_year = y;
                r.atole = arm;
                r.male = hh[i].male;
                r.income = hh[i].income;
                r.price = hh[i].price;
                r.birth_length = hh[i].birth_length;
                if (spec.measurement_error) {
                    auto md = apply_measurement_error(n, h, ctx.theta, z_eta[i], z_iota[i]);
                    r.n_obs = md.n_obs;
                    r.h_obs = md.h_obs;
                } else {
                    r.n_obs = n;
                    r.h_obs = h;
                }
                r.eps = states[i].eps;
                r.n_true = n;
                r.h_true = h;
                r.mu_r = belief.mu_r;
                r.sigma_r = belief.sigma_r;
                panel.rows.push_back(r);
            }
            realized[y] = std::move(heights);
        }
    }
    return panel;
}

// ---- CSV ----

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (!s.empty() && *b == '+') ++b;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e || s.empty())
        throw ParseError(context + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

namespace {

const std::vector<std::string> kRequired = {"id", "cohort_year", "atole", "male", "income",
                                            "price", "birth_length", "n_obs", "h_obs"};
const std::vector<std::string> kTruth = {"eps", "n_true", "h_true", "mu_r", "sigma_r"};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string panel_to_csv(const CohortPanel& panel) {
    std::ostringstream os;
    std::vector<std::string> cols = kRequired;
    if (panel.has_truth) cols.insert(cols.end(), kTruth.begin(), kTruth.end());
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& r : panel.rows) {
        os << r.id << ',' << r.cohort_year << ',' << r.atole << ',' << r.male << ','
           << format_double(r.income) << ',' << format_double(r.price) << ','
           << format_double(r.birth_length) << ',' << format_double(r.n_obs) << ','
           << format_double(r.h_obs);
        if (panel.has_truth)
            os << ',' << format_double(r.eps) << ',' << format_double(r.n_true) << ','
               << format_double(r.h_true) << ',' << format_double(r.mu_r) << ','
               << format_double(r.sigma_r);
        os << '\n';
    }
    return os.str();
}

CohortPanel panel_from_csv(const std::string& text, const std::string& source) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw SchemaError(source + ": empty file, header expected");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    auto header = split(line);

    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto& h = header[i];
        bool known = std::find(kRequired.begin(), kRequired.end(), h) != kRequired.end() ||
                     std::find(kTruth.begin(), kTruth.end(), h) != kTruth.end();
        if (!known) throw SchemaError(source + ": unknown column '" + h + "'");
        if (pos.count(h)) throw SchemaError(source + ": duplicate column '" + h + "'");
        pos[h] = i;
    }
    for (const auto& c : kRequired)
        if (!pos.count(c)) throw SchemaError(source + ": missing required column '" + c + "'");
    std::size_t truth_cols = 0;
    for (const auto& c : kTruth) truth_cols += pos.count(c);
    if (truth_cols != 0 && truth_cols != kTruth.size())
        throw SchemaError(source + ": ground-truth columns must be all present or all absent");

    CohortPanel panel;
    panel.has_truth = truth_cols == kTruth.size();
    long lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = split(line);
        std::string where = source + ":" + std::to_string(lineno);
        if (f.size() != header.size())
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(f.size()));
        auto num = [&](const std::string& col) {
            return parse_double(f[pos.at(col)], where + " column '" + col + "'");
        };
        auto integer = [&](const std::string& col) {
            double v = num(col);
            if (v != std::floor(v)) throw ParseError(where + " column '" + col + "': expected an integer");
            return static_cast<long>(v);
        };
        auto flag = [&](const std::string& col) {
            long v = integer(col);
            if (v != 0 && v != 1) throw SchemaError(where + " column '" + col + "': expected 0 or 1");
            return static_cast<int>(v);
        };
        auto positive = [&](const std::string& col) {
            double v = num(col);
            if (!(v > 0.0) || !std::isfinite(v))
                throw SchemaError(where + " (row " + std::to_string(panel.rows.size()) + ") column '" + col +
                                  "': value must be positive, got " + f[pos.at(col)]);
            return v;
        };
        PanelRow r;
        r.id = integer("id");
        r.cohort_year = static_cast<int>(integer("cohort_year"));
        r.atole = flag("atole");
        r.male = flag("male");
        r.income = positive("income");
        r.price = positive("price");
        r.birth_length = positive("birth_length");
        r.n_obs = positive("n_obs");
        r.h_obs = positive("h_obs");
        if (panel.has_truth) {
            auto opt = [&](const std::string& col) {
                const auto& s = f[pos.at(col)];
                return s.empty() ? kMissing : parse_double(s, where + " column '" + col + "'");
            };
            r.eps = opt("eps");
            r.n_true = opt("n_true");
            r.h_true = opt("h_true");
            r.mu_r = opt("mu_r");
            r.sigma_r = opt("sigma_r");
        }
        panel.rows.push_back(r);
    }
    return panel;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DomainError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw DomainError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DomainError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_panel(const CohortPanel& panel, const std::filesystem::path& path) {
    write_text(path, panel_to_csv(panel));
}

CohortPanel read_panel(const std::filesystem::path& path) {
    return panel_from_csv(read_text(path), path.string());
}

std::string CsvTable::str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
    return os.str();
}

}  // namespace refnut
