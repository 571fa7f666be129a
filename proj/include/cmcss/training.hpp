#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cmcss/cohort.hpp"
#include "cmcss/encoder.hpp"
#include "cmcss/error.hpp"
#include "cmcss/losses.hpp"

namespace cmcss {

// Which contrastive terms drive pretraining.
enum class PretrainObjective { joint, cmc_only, css_only };

std::string_view objective_name(PretrainObjective o);
PretrainObjective objective_from_name(std::string_view name);

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t pretrain_epochs = 200;
    std::size_t finetune_epochs = 100;
    double learning_rate = 1e-3;
    double weight_decay = 1e-3;
    double lambda = 1.0;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    PretrainObjective objective = PretrainObjective::joint;
    bool denominator_includes_positive = false;
    // Fine-tune only the fusion head (used by tests on fixed embeddings).
    bool freeze_encoders = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    ObjectiveWeights objective_weights() const;
};

void validate(const TrainConfig& config);

struct EpochRecord {
    std::string stage;  // "pretrain" or "finetune"
    std::size_t epoch = 0;
    double loss_total = 0.0;
    double loss_cmc = 0.0;
    double loss_css = 0.0;
    std::optional<double> loss_ce;
    std::optional<double> val_loss;
    std::size_t css_degenerate_batches = 0;
};

struct TrainedModel {
    EncoderParams params;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;  // 0 when no fine-tuning epoch ran
};

// Raised when a loss turns non-finite; carries the parameters from before
// the failing update.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& message, EncoderParams last_good)
        : NumericError(message), last_good_(std::move(last_good)) {}
    const EncoderParams& last_good() const { return last_good_; }

private:
    EncoderParams last_good_;
};

// Adaptive-moment optimiser with decoupled weight decay; the decay is scaled
// by the learning rate so a zero rate leaves parameters untouched.
class AdamW {
public:
    AdamW(const EncoderParams& like, double learning_rate, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double epsilon = 1e-8);
    void step(EncoderParams& params, const EncoderParams& grads);
    // Only updates the fusion head.
    void step_fusion(EncoderParams& params, const EncoderParams& grads);

private:
    void update(Matrix& p, const Matrix& g, Matrix& m, Matrix& v) const;
    EncoderParams m_, v_;
    double lr_, wd_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

// Batches over `indices` whose class mix follows the whole set's; a final
// batch of a single subject is merged into the previous one.
std::vector<std::vector<std::size_t>> stratified_batches(const std::vector<std::size_t>& indices,
                                                         const std::vector<int>& labels, std::size_t batch_size,
                                                         std::mt19937_64& rng);

struct Objective {
    enum class Kind { contrastive, weighted_ce };
    Kind kind = Kind::contrastive;
    ObjectiveWeights weights;              // contrastive
    double temperature = 1.0;              // contrastive
    bool denominator_includes_positive = false;
    std::array<double, 2> class_weights{1.0, 1.0};  // weighted_ce

    static Objective joint(double lambda, double temperature = 1.0);
    static Objective weighted_ce(std::array<double, 2> class_weights);
};

struct GradientResult {
    EncoderParams grads;
    LossValue contrastive;  // contrastive objectives
    double ce = 0.0;        // weighted_ce objective (batch mean)
    double value = 0.0;     // objective value
};

// Exact reverse-mode gradient of the objective over the subjects `batch` of
// `cohort`. Throws NumericError naming the parameter if any entry is non-finite.
GradientResult compute_gradients(const EncoderParams& params, const Cohort& cohort,
                                 const std::vector<std::size_t>& batch, const Objective& objective);

// Objective value only (used by finite-difference checks).
double evaluate_objective(const EncoderParams& params, const Cohort& cohort, const std::vector<std::size_t>& batch,
                          const Objective& objective);

// Contrastive pretraining of all five extractors.
TrainedModel pretrain(const Cohort& train, const TrainConfig& config, const ModelShape& shape);
TrainedModel pretrain(const Cohort& train, const TrainConfig& config, EncoderParams initial);

// Supervised fine-tuning of the whole network with weighted cross-entropy;
// returns the parameters of the epoch with the lowest validation loss.
TrainedModel finetune(const TrainedModel& pretrained, const Cohort& train, const Cohort& validation,
                      const TrainConfig& config);

// Positive-class probability per subject.
std::vector<double> predict_positive(const EncoderParams& params, const Cohort& cohort);

std::string epoch_record_json(const EpochRecord& record);

}  // namespace cmcss
