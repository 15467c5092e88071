#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "refnut/beliefs.hpp"
#include "refnut/model.hpp"
#include "refnut/solver.hpp"

namespace refnut {

struct SchemaError : DomainError {
    using DomainError::DomainError;
};
struct ParseError : DomainError {
    using DomainError::DomainError;
};

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct PanelRow {
    long id = 0;
    int cohort_year = 0;
    int atole = 0;
    int male = 0;
    double income = 0.0;        // two-year, quetzales
    double price = 0.0;         // quetzales per 10k grams
    double birth_length = 0.0;  // cm, raw
    double n_obs = 0.0;         // g/day
    double h_obs = 0.0;         // cm
    // Ground truth, present only in generated panels.
    double eps = kMissing;
    double n_true = kMissing;
    double h_true = kMissing;
    double mu_r = kMissing;
    double sigma_r = kMissing;
};

struct CohortPanel {
    std::vector<PanelRow> rows;
    bool has_truth = false;

    std::size_t size() const { return rows.size(); }
};

// Raw household attributes before scaling and belief assignment.
struct Household {
    double income = 0.0;  // two-year, quetzales
    double price = 0.0;   // quetzales per 10k grams
    int atole = 0;
    int male = 0;
    double birth_length = 0.0;  // cm
};

HouseholdState to_state(const Household& h, const MonetaryScale& scale, const CovariateScaling& cov,
                        const ReferenceBelief& belief);
Household household_of(const PanelRow& r);

struct IncomeMoments {
    double mean = 515.57;  // annual quetzales
    double sd = 460.9;
};

struct GeneratorSpec {
    int n_per_cell = 417;
    std::vector<int> cohorts{1970, 1971, 1972, 1973, 1974, 1975};
    IncomeMoments fresco_income{503.68, 464.4};
    IncomeMoments atole_income{526.00, 458.4};
    double income_years = 2.0;
    double male_share = 0.52;
    double birth_length_mean = 49.64;
    double birth_length_sd = 2.29;
    double price_mean = 52.58;
    double price_sd = 3.87;
    double price_year_share = 0.5;  // share of price variance coming from the calendar year
    double reference_level = 77.0;   // reference mean for cohorts without a predecessor
    bool measurement_error = true;
    std::uint64_t seed = 1;

    void validate() const;
};

// Draws raw households for one (arm, cohort) cell; deterministic in (seed, arm, cohort).
std::vector<Household> draw_households(const GeneratorSpec& spec, bool atole, int cohort_year, int n,
                                       std::uint64_t seed);

struct MeasurementDraw {
    double n_obs;
    double h_obs;
};

MeasurementDraw apply_measurement_error(double n_true, double h_true, const Theta& th, double z_eta,
                                        double z_iota);

struct GenerationContext {
    Theta theta;
    GridConfig grid;
    SigmaRPolicy sigma_r;
    MonetaryScale scale;
    CovariateScaling covariates;
};

CohortPanel generate_panel(const GeneratorSpec& spec, const GenerationContext& ctx);

// CSV I/O. Doubles are written in shortest round-trip form.
void write_panel(const CohortPanel& panel, const std::filesystem::path& path);
CohortPanel read_panel(const std::filesystem::path& path);
std::string panel_to_csv(const CohortPanel& panel);
CohortPanel panel_from_csv(const std::string& text, const std::string& source = "<memory>");

std::string format_double(double v);
double parse_double(std::string_view s, const std::string& context);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
    std::string str() const;
};

}  // namespace refnut
