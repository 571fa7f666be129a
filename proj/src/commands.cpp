#include "cmcss/commands.hpp"

#include <cstdio>
#include <fstream>

#include "cmcss/checkpoint.hpp"
#include "cmcss/error.hpp"
#include "cmcss/folds.hpp"

namespace cmcss {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
    return path;
}

fs::path prepare_dir(const fs::path& dir, const RunConfig& config, std::vector<fs::path>& written) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    written.push_back(write_text(dir / "resolved_config.json", config.to_json().dump(2) + "\n"));
    return dir;
}

Cohort load_input_cohort(const RunConfig& config) {
    const fs::path manifest = config.cohort_dir / "manifest.json";
    if (!fs::exists(manifest)) throw LoadError("cohort manifest not found: " + manifest.string());
    return load_cohort(manifest);
}

fs::path write_log(const fs::path& path, const std::vector<EpochRecord>& history) {
    std::string text;
    for (const auto& r : history) text += epoch_record_json(r) + "\n";
    return write_text(path, text);
}

fs::path input_checkpoint(const RunConfig& config, const char* fallback) {
    const fs::path p = config.checkpoint ? *config.checkpoint : config.output_dir / fallback;
    if (!fs::exists(p)) throw LoadError("checkpoint not found: " + p.string());
    return p;
}

void write_table(const fs::path& dir, const AblationTable& table, std::vector<fs::path>& written) {
    written.push_back(write_text(dir / ("ablation_" + table.name + ".csv"), table.to_csv()));
    written.push_back(write_text(dir / ("ablation_" + table.name + ".json"), table.to_json().dump(2) + "\n"));
}

}  // namespace

std::vector<fs::path> cmd_gen_data(const RunConfig& config) {
    std::vector<fs::path> written;
    const Cohort cohort = generate_synthetic_cohort(config.cohort);
    written.push_back(save_cohort(cohort, config.cohort_dir));
    prepare_dir(config.cohort_dir, config, written);
    return written;
}

std::vector<fs::path> cmd_pretrain(const RunConfig& config) {
    std::vector<fs::path> written;
    const Cohort cohort = load_input_cohort(config);
    const fs::path dir = prepare_dir(config.output_dir, config, written);
    const ModelShape shape = config.architecture.shape_for(cohort.dims, config.modalities);
    const TrainedModel model = pretrain(cohort, config.train, shape);
    written.push_back(write_log(dir / "pretrain_log.jsonl", model.history));
    save_checkpoint(model.params, dir / "pretrained.json");
    written.push_back(dir / "pretrained.json");
    return written;
}

std::vector<fs::path> cmd_finetune(const RunConfig& config) {
    std::vector<fs::path> written;
    const Cohort cohort = load_input_cohort(config);
    TrainedModel start;
    start.params = load_checkpoint(input_checkpoint(config, "pretrained.json"));
    const fs::path dir = prepare_dir(config.output_dir, config, written);

    std::vector<std::size_t> all(cohort.size()), kept, held;
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    stratified_holdout(all, cohort.labels(), config.inner_val_fraction, derive_seed(config.seed, 5), kept, held);
    const TrainedModel model = finetune(start, cohort.subset(kept), cohort.subset(held), config.train);

    written.push_back(write_log(dir / "finetune_log.jsonl", model.history));
    save_checkpoint(model.params, dir / "finetuned.json");
    written.push_back(dir / "finetuned.json");
    return written;
}

std::vector<fs::path> cmd_evaluate(const RunConfig& config) {
    std::vector<fs::path> written;
    const Cohort cohort = load_input_cohort(config);
    const fs::path dir = prepare_dir(config.output_dir, config, written);
    const EvalReport report = cross_validate(cohort, config.harness());
    written.push_back(write_text(dir / "report.json", report.to_json().dump(2) + "\n"));
    return written;
}

std::vector<fs::path> cmd_ablate(const RunConfig& config, const std::string& which) {
    std::vector<fs::path> written;
    const Cohort cohort = load_input_cohort(config);
    const fs::path dir = prepare_dir(config.output_dir, config, written);
    const HarnessConfig harness = config.harness();

    AblationTable table;
    if (which == "lambda") {
        table = ablate_lambda(cohort, config.lambda_grid, harness);
    } else if (which == "losses") {
        table = ablate_loss_components(cohort, harness);
    } else if (which == "modality_drop") {
        table = ablate_modality(cohort, ModalityAblation::drop_one, harness);
    } else if (which == "modality_only") {
        table = ablate_modality(cohort, ModalityAblation::only_one, harness);
    } else if (which == "baseline") {
        const EvalReport base = baseline_concat(cohort, harness);
        const EvalReport ours = cross_validate(cohort, harness);
        EvalReport with_cmp = ours;
        if (ours.folds.size() >= kMinWilcoxonPairs)
            for (const char* m : {"ba", "auc", "sen", "spe"})
                with_cmp.comparisons.push_back(compare_reports(ours, base, m));
        table.name = "baseline";
        table.key_column = "method";
        table.rows = {{base.method, base}, {ours.method, with_cmp}};
    } else {
        throw ConfigError("unknown ablation \"" + which +
                          "\"; expected lambda, losses, modality_drop, modality_only or baseline");
    }
    for (const auto& row : table.rows)
        written.push_back(write_text(dir / ("report_" + table.key_column + "_" + row.label + ".json"),
                                     row.report.to_json().dump(2) + "\n"));
    write_table(dir, table, written);
    return written;
}

std::vector<fs::path> cmd_export_embeddings(const RunConfig& config) {
    std::vector<fs::path> written;
    const Cohort cohort = load_input_cohort(config);
    fs::path ckpt;
    if (config.checkpoint) {
        ckpt = input_checkpoint(config, "");
    } else if (fs::exists(config.output_dir / "finetuned.json")) {
        ckpt = config.output_dir / "finetuned.json";
    } else {
        ckpt = input_checkpoint(config, "pretrained.json");
    }
    const EncoderParams params = load_checkpoint(ckpt);
    const fs::path dir = prepare_dir(config.output_dir, config, written);
    export_embeddings(params, cohort, dir / "embeddings.csv");
    written.push_back(dir / "embeddings.csv");
    return written;
}

std::string error_json(const std::exception& e) {
    ordered_json err;
    if (const auto* ce = dynamic_cast<const Error*>(&e)) {
        err["kind"] = ce->kind();
    } else {
        err["kind"] = "internal";
    }
    err["message"] = e.what();
    if (const auto* ci = dynamic_cast<const ConfigIssues*>(&e)) err["issues"] = ci->issues();
    return ordered_json{{"error", err}}.dump();
}

}  // namespace cmcss
