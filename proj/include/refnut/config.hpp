#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "refnut/beliefs.hpp"
#include "refnut/data_io.hpp"
#include "refnut/estimation.hpp"
#include "refnut/model.hpp"
#include "refnut/simulation.hpp"
#include "refnut/solver.hpp"

namespace refnut {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
    std::uint64_t seed = 20240601;
    GridConfig grid;
    EstimationConfig estimation;
    SigmaRPolicy sigma_r_policy = SigmaRPolicy::fixed(0.5);
    MonetaryScale monetary_scale;
    CovariateScaling covariates;
    GeneratorSpec generator;
    DecompositionConfig decomposition;
    PolicyConfig policy;
    FrontierConfig frontier;
    std::string output_dir = "out";

    void validate() const;
};

// Strict JSON schema: unknown keys and wrong types raise SchemaError.
RunConfig config_from_json_text(const std::string& text, const std::string& source = "<config>");
std::string config_to_json_text(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

Theta theta_from_json_text(const std::string& text, const std::string& source = "<theta>");
std::string theta_to_json_text(const Theta& th);
// Accepts a file path or a preset name "published:<sigma_r>".
Theta load_theta(const std::string& spec);

std::string estimate_to_json_text(const EstimateResult& r);

std::string fnv1a_hex(const std::string& text);

}  // namespace refnut
