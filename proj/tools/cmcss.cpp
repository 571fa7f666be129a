// cmcss: data generation, training, evaluation and ablation driver.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cmcss/commands.hpp"
#include "cmcss/error.hpp"

namespace {

std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return flag;
    const char* env = std::getenv("CMCSS_SEED");
    if (env == nullptr || *env == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw cmcss::ConfigError(std::string("CMCSS_SEED is not a non-negative integer: \"") + env + "\"");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint cross-modality and cross-subject contrastive learning"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> profile;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
    app.add_option("--profile", profile, "desk or paper");
    app.add_option("--seed", seed, "overrides CMCSS_SEED and the config seed");

    std::string which;
    auto* gen = app.add_subcommand("gen-data", "write a synthetic cohort to paths.cohort_dir");
    auto* pre = app.add_subcommand("pretrain", "contrastive pretraining on the whole cohort");
    auto* fin = app.add_subcommand("finetune", "fine-tune a pretrained checkpoint");
    auto* eva = app.add_subcommand("evaluate", "repeated stratified cross-validation");
    auto* abl = app.add_subcommand("ablate", "run an ablation table");
    abl->add_option("which", which, "lambda | losses | modality_drop | modality_only | baseline")
        ->required()
        ->check(CLI::IsMember({"lambda", "losses", "modality_drop", "modality_only", "baseline"}));
    auto* exp = app.add_subcommand("export-embeddings", "write per-modality embeddings as CSV");
    app.fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << cmcss::error_json(cmcss::ConfigError(e.what())) << "\n";
        return 2;
    }

    try {
        const cmcss::RunConfig config = cmcss::load_run_config(config_path, profile, resolve_seed(seed));
        std::vector<std::filesystem::path> written;
        if (gen->parsed()) written = cmcss::cmd_gen_data(config);
        else if (pre->parsed()) written = cmcss::cmd_pretrain(config);
        else if (fin->parsed()) written = cmcss::cmd_finetune(config);
        else if (eva->parsed()) written = cmcss::cmd_evaluate(config);
        else if (abl->parsed()) written = cmcss::cmd_ablate(config, which);
        else if (exp->parsed()) written = cmcss::cmd_export_embeddings(config);
        for (const auto& p : written) std::cout << p.string() << "\n";
    } catch (const std::exception& e) {
        std::cerr << cmcss::error_json(e) << "\n";
        return 1;
    }
    return 0;
}
