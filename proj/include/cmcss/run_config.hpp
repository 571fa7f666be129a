#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmcss/cohort.hpp"
#include "cmcss/evaluation.hpp"
#include "cmcss/training.hpp"

namespace cmcss {

// Everything one CLI invocation needs, resolved from a JSON config file,
// the selected profile and seed overrides.
//
// Profiles fill defaults before explicit keys are applied:
//   desk  - 200/100 epochs, k=5, 3 repeats, cohort dims d=16 z=20 10x16x16
//   paper - 2000/500 epochs, k=10, 50 repeats, cohort dims d=87 z=100 10x32x32
struct RunConfig {
    std::string profile = "desk";
    std::uint64_t seed = 0;
    CohortConfig cohort;
    TrainConfig train;
    ArchitectureConfig architecture;
    std::size_t k = 5;
    std::size_t repeats = 3;
    double inner_val_fraction = 1.0 / 9.0;
    std::vector<double> lambda_grid = kDefaultLambdaGrid;
    std::size_t max_workers = 1;
    ModalitySet modalities = ModalitySet::all();
    std::filesystem::path cohort_dir = "cohort";
    std::filesystem::path output_dir = "out";
    std::optional<std::filesystem::path> checkpoint;

    HarnessConfig harness(const std::string& method = "cmc_css") const;
    nlohmann::ordered_json to_json() const;
};

void apply_profile(RunConfig& config, const std::string& profile);

// Throws ConfigIssues listing every rejected key. Overrides take precedence
// over the file: profile_override over "profile", seed_override over "seed".
RunConfig parse_run_config(const nlohmann::json& document, const std::optional<std::string>& profile_override = {},
                           const std::optional<std::uint64_t>& seed_override = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::optional<std::string>& profile_override = {},
                          const std::optional<std::uint64_t>& seed_override = {});

}  // namespace cmcss
