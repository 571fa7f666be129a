#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmcss/cohort.hpp"
#include "cmcss/encoder.hpp"
#include "cmcss/metrics.hpp"
#include "cmcss/training.hpp"

namespace cmcss {

// Architecture knobs that are not implied by the cohort dimensions.
struct ArchitectureConfig {
    std::size_t reduce_width = 10;
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 128;
    std::size_t feature_width = 128;
    std::size_t embed_dim = 8;
    std::array<std::size_t, 3> conv_channels = {8, 16, 16};

    ModelShape shape_for(const CohortDims& dims, const ModalitySet& active) const;
};

struct HarnessConfig {
    std::string method = "cmc_css";
    std::size_t k = 5;
    std::size_t repeats = 3;
    double inner_val_fraction = 1.0 / 9.0;
    std::uint64_t seed = 0;
    TrainConfig train;
    ArchitectureConfig architecture;
    ModalitySet modalities = ModalitySet::all();
    bool contrastive_pretraining = true;  // false: supervised baseline only
    std::size_t max_workers = 1;          // parallel fold workers
};

nlohmann::ordered_json to_json(const HarnessConfig& config);

struct FoldResult {
    std::size_t repeat = 0;
    std::size_t fold = 0;
    MetricSet metrics;
    std::size_t n_test = 0;
    std::size_t best_epoch = 0;
    double pretrain_final_loss = 0.0;
    double best_val_loss = 0.0;
};

struct SubjectScore {
    std::string subject_id;
    std::size_t repeat = 0;
    int label = 0;
    double score = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double sd = 0.0;
};

struct Comparison {
    std::string method_a, method_b, metric;
    double p_value = 1.0;
};

struct EvalReport {
    std::string method;
    nlohmann::ordered_json config;
    std::vector<FoldResult> folds;  // ordered by (repeat, fold)
    std::vector<SubjectScore> scores;
    std::vector<Comparison> comparisons;

    // Mean and sample SD over every fold of every repeat.
    MetricSummary summary(const std::string& metric) const;
    std::vector<double> values(const std::string& metric) const;
    nlohmann::ordered_json to_json(bool with_timestamp = true) const;
};

double metric_value(const MetricSet& m, const std::string& metric);

// Repeated stratified k-fold: per (repeat, fold) hold out the test fold,
// carve a stratified validation split from the rest, pretrain (unless
// disabled), fine-tune and score the test fold.
EvalReport cross_validate(const Cohort& cohort, const HarnessConfig& config);

// Paired signed-rank comparison over matching (repeat, fold) entries.
Comparison compare_reports(const EvalReport& a, const EvalReport& b, const std::string& metric);

struct AblationRow {
    std::string label;
    EvalReport report;
};

struct AblationTable {
    std::string name;
    std::string key_column;
    std::vector<AblationRow> rows;

    // key, ba_mean, ba_sd, auc_mean, auc_sd, sen_mean, sen_sd, spe_mean, spe_sd
    std::string to_csv() const;
    nlohmann::ordered_json to_json(bool with_timestamp = true) const;
};

inline const std::vector<double> kDefaultLambdaGrid = {0.0, 0.5, 0.75, 1.0, 1.5, 2.0};

AblationTable ablate_lambda(const Cohort& cohort, const std::vector<double>& lambdas, const HarnessConfig& config);
// Rows: cmc only, css only, joint (lambda = 1 for the cmc-bearing rows).
AblationTable ablate_loss_components(const Cohort& cohort, const HarnessConfig& config);

enum class ModalityAblation { drop_one, only_one };
// drop_one: reference row with all modalities, then one row per removed
// modality. only_one: one same-outcome-only row per single modality.
AblationTable ablate_modality(const Cohort& cohort, ModalityAblation mode, const HarnessConfig& config);

// Same encoders trained directly with weighted cross-entropy.
EvalReport baseline_concat(const Cohort& cohort, const HarnessConfig& config);

// One CSV row per (subject, modality): subject_id, modality, label, e0..e{k-1}.
void export_embeddings(const EncoderParams& params, const Cohort& cohort, const std::filesystem::path& path);
std::string embeddings_csv(const EncoderParams& params, const Cohort& cohort);

}  // namespace cmcss
