#include <cmath>
#include <string>

#include "doctest.h"
#include "refnut/config.hpp"

using namespace refnut;

namespace {

std::string schema_error_of(const std::string& text) {
    try {
        config_from_json_text(text, "c.json");
    } catch (const SchemaError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("default configuration round trips through JSON") {
    RunConfig c;
    std::string text = config_to_json_text(c);
    RunConfig d = config_from_json_text(text);
    CHECK(config_to_json_text(d) == text);
    CHECK(d.seed == c.seed);
    CHECK(d.estimation.m_draws == c.estimation.m_draws);
}

TEST_CASE("non-default values survive a round trip") {
    RunConfig c;
    c.seed = 7;
    c.grid.q1 = 123;
    c.sigma_r_policy = SigmaRPolicy::sampling_error();
    c.covariates.mode = CovariateScaling::Mode::DemeanedCm;
    c.estimation.reference_source = ReferenceSource::Column;
    c.estimation.start_gamma_lambda = {{1.5, -2.0}};
    c.decomposition.fresco_level = 76.25;
    c.policy.taus = {0.3, 0.9};
    c.frontier.lambdas = {-1.0, 0.0};
    RunConfig d = config_from_json_text(config_to_json_text(c));
    CHECK(d.seed == 7u);
    CHECK(d.grid.q1 == 123);
    CHECK(d.sigma_r_policy.kind == SigmaRPolicy::Kind::SamplingError);
    CHECK(d.covariates.mode == CovariateScaling::Mode::DemeanedCm);
    CHECK(d.estimation.reference_source == ReferenceSource::Column);
    REQUIRE(d.estimation.start_gamma_lambda.size() == 1u);
    CHECK(d.estimation.start_gamma_lambda[0][1] == -2.0);
    REQUIRE(d.decomposition.fresco_level.has_value());
    CHECK(*d.decomposition.fresco_level == 76.25);
    CHECK(d.policy.taus == std::vector<double>{0.3, 0.9});
    CHECK(config_to_json_text(d) == config_to_json_text(c));
}

TEST_CASE("partial configs keep defaults") {
    RunConfig d = config_from_json_text(R"({"seed": 11, "estimation": {"m_draws": 4}})");
    CHECK(d.seed == 11u);
    CHECK(d.estimation.m_draws == 4);
    CHECK(d.estimation.crn_seed == RunConfig{}.estimation.crn_seed);
}

TEST_CASE("a manifest is accepted as a config") {
    RunConfig c;
    c.seed = 99;
    std::string manifest = R"({"manifest_version": 1, "config": )" + config_to_json_text(c) + "}";
    CHECK(config_from_json_text(manifest).seed == 99u);
}

TEST_CASE("strict schema") {
    CHECK(schema_error_of(R"({"sead": 1})").find("unknown key 'sead'") != std::string::npos);
    CHECK(schema_error_of(R"({"grid": {"q1": 10, "bogus": 1}})").find("grid") != std::string::npos);
    CHECK(schema_error_of(R"({"seed": "one"})").find("expected an integer") != std::string::npos);
    CHECK(schema_error_of(R"({"grid": {"tol": "x"}})").find("expected a number") != std::string::npos);
    CHECK(schema_error_of(R"({"generator": {"measurement_error": 1}})").find("true or false") != std::string::npos);
    CHECK_FALSE(schema_error_of(R"({"estimation": {"reference_source": "both"}})").empty());
    CHECK_FALSE(schema_error_of(R"({"sigma_r_policy": {"kind": "adaptive"}})").empty());
    CHECK_FALSE(schema_error_of(R"({"policy": {"taus": [0.5, "x"]}})").empty());
    CHECK_FALSE(schema_error_of(R"([1, 2])").empty());
    CHECK_THROWS_AS(config_from_json_text("{not json"), ParseError);
    CHECK_THROWS_AS(config_from_json_text(R"({"grid": {"q1": 1}})"), InvalidArgument);
}

TEST_CASE("theta JSON round trip is exact") {
    for (double s : {0.5, 1.5, 2.5, 3.5}) {
        Theta th = Theta::published(s);
        Theta back = theta_from_json_text(theta_to_json_text(th));
        for (int i = 0; i < Theta::kSize; ++i) CHECK(back.get(i) == th.get(i));
    }
    CHECK_THROWS_AS(theta_from_json_text(R"({"rho": 0})"), SchemaError);
}

TEST_CASE("theta presets") {
    Theta a = load_theta("published:0.5"), b = Theta::published(0.5);
    for (int i = 0; i < Theta::kSize; ++i) CHECK(a.get(i) == b.get(i));
    CHECK_THROWS_AS(load_theta("published:abc"), ParseError);
}

TEST_CASE("estimate records write null for unavailable standard errors") {
    EstimateResult r;
    r.theta_hat = Theta::published(0.5);
    r.standard_errors.emplace();
    r.standard_errors->fill(0.1);
    (*r.standard_errors)[4] = NAN;
    std::string text = estimate_to_json_text(r);
    CHECK(text.find("null") != std::string::npos);
    Theta th = theta_from_json_text(text);
    CHECK(th.get(0) == r.theta_hat.get(0));
}

TEST_CASE("FNV-1a digests") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}
