#include "cmcss/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "cmcss/folds.hpp"

namespace cmcss {

namespace {

std::vector<Matrix*> matrices(EncoderParams& p) {
    std::vector<Matrix*> out;
    p.for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
}

std::vector<const Matrix*> matrices(const EncoderParams& p) {
    std::vector<const Matrix*> out;
    p.for_each([&](const std::string&, const Matrix& m) { out.push_back(&m); });
    return out;
}

void require_finite(const EncoderParams& grads) {
    grads.for_each([](const std::string& path, const Matrix& m) {
        if (!all_finite(m.values())) throw NumericError("non-finite gradient in parameter " + path);
    });
}

void require_both_classes(const Cohort& c, std::size_t per_class, const char* what) {
    if (c.count_label(0) < per_class || c.count_label(1) < per_class)
        throw ContractError(std::string(what) + " needs at least " + std::to_string(per_class) +
                            " subjects of each class");
}

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

std::array<double, 2> softmax2(const std::array<double, 2>& z) {
    const double mx = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - mx), e1 = std::exp(z[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

// Weighted cross-entropy over fixed embeddings; accumulates head gradients
// and returns per-subject embedding gradients when `embedding_grads` is set.
double head_loss(const std::vector<EmbeddingSet>& embeddings, const std::vector<int>& labels,
                 const EncoderParams& params, const std::array<double, 2>& class_weights, EncoderParams* grads,
                 std::vector<EmbeddingGrad>* embedding_grads) {
    const double inv_b = 1.0 / static_cast<double>(embeddings.size());
    double loss = 0.0;
    if (embedding_grads) embedding_grads->assign(embeddings.size(), EmbeddingGrad{});
    for (std::size_t s = 0; s < embeddings.size(); ++s) {
        const auto p = softmax2(fusion_logits(embeddings[s], params));
        const int y = labels[s];
        loss += weighted_cross_entropy(p, y, class_weights) * inv_b;
        if (!grads) continue;
        const double w = class_weights[static_cast<std::size_t>(y)] * inv_b;
        const std::array<double, 2> dz{w * (p[0] - (y == 0 ? 1.0 : 0.0)), w * (p[1] - (y == 1 ? 1.0 : 0.0))};
        auto de = fusion_backward(embeddings[s], params, dz, *grads);
        if (embedding_grads) (*embedding_grads)[s] = std::move(de);
    }
    return loss;
}

}  // namespace

std::string_view objective_name(PretrainObjective o) {
    switch (o) {
        case PretrainObjective::joint: return "joint";
        case PretrainObjective::cmc_only: return "cmc_only";
        case PretrainObjective::css_only: return "css_only";
    }
    return "joint";
}

PretrainObjective objective_from_name(std::string_view name) {
    for (auto o : {PretrainObjective::joint, PretrainObjective::cmc_only, PretrainObjective::css_only})
        if (objective_name(o) == name) return o;
    throw ConfigError("unknown pretraining objective '" + std::string(name) + "'");
}

ObjectiveWeights TrainConfig::objective_weights() const {
    switch (objective) {
        case PretrainObjective::joint: return {lambda, 1.0};
        case PretrainObjective::cmc_only: return {lambda, 0.0};
        case PretrainObjective::css_only: return {0.0, 1.0};
    }
    return {lambda, 1.0};
}

void validate(const TrainConfig& c) {
    if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(c.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(c.temperature > 0.0)) throw ConfigError("temperature must be > 0");
}

Objective Objective::joint(double lambda, double temperature) {
    Objective o;
    o.kind = Kind::contrastive;
    o.weights = {lambda, 1.0};
    o.temperature = temperature;
    return o;
}

Objective Objective::weighted_ce(std::array<double, 2> class_weights) {
    Objective o;
    o.kind = Kind::weighted_ce;
    o.class_weights = class_weights;
    return o;
}

AdamW::AdamW(const EncoderParams& like, double learning_rate, double weight_decay, double beta1, double beta2,
             double epsilon)
    : m_(like.zeros_like()), v_(like.zeros_like()), lr_(learning_rate), wd_(weight_decay), beta1_(beta1),
      beta2_(beta2), eps_(epsilon) {}

void AdamW::update(Matrix& p, const Matrix& g, Matrix& m, Matrix& v) const {
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    double* pd = p.data();
    const double* gd = g.data();
    double* md = m.data();
    double* vd = v.data();
    for (std::size_t e = 0; e < p.size(); ++e) {
        md[e] = beta1_ * md[e] + (1.0 - beta1_) * gd[e];
        vd[e] = beta2_ * vd[e] + (1.0 - beta2_) * gd[e] * gd[e];
        const double mhat = md[e] / c1, vhat = vd[e] / c2;
        pd[e] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * pd[e]);
    }
}

void AdamW::step(EncoderParams& params, const EncoderParams& grads) {
    ++t_;
    auto p = matrices(params);
    auto g = matrices(grads);
    auto m = matrices(m_);
    auto v = matrices(v_);
    for (std::size_t i = 0; i < p.size(); ++i) update(*p[i], *g[i], *m[i], *v[i]);
}

void AdamW::step_fusion(EncoderParams& params, const EncoderParams& grads) {
    ++t_;
    update(params.fusion.weight, grads.fusion.weight, m_.fusion.weight, v_.fusion.weight);
    update(params.fusion.bias, grads.fusion.bias, m_.fusion.bias, v_.fusion.bias);
}

std::vector<std::vector<std::size_t>> stratified_batches(const std::vector<std::size_t>& indices,
                                                         const std::vector<int>& labels, std::size_t batch_size,
                                                         std::mt19937_64& rng) {
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i : indices) by_class.at(static_cast<std::size_t>(labels.at(i))).push_back(i);
    // Interleave classes by relative rank so every prefix keeps the class mix.
    std::vector<std::pair<double, std::size_t>> keyed;
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t r = 0; r < members.size(); ++r)
            keyed.emplace_back((static_cast<double>(r) + 0.5) / static_cast<double>(members.size()), members[r]);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < keyed.size(); start += batch_size) {
        std::vector<std::size_t> b;
        for (std::size_t i = start; i < std::min(keyed.size(), start + batch_size); ++i) b.push_back(keyed[i].second);
        batches.push_back(std::move(b));
    }
    if (batches.size() > 1 && batches.back().size() < 2) {
        auto last = std::move(batches.back());
        batches.pop_back();
        batches.back().insert(batches.back().end(), last.begin(), last.end());
    }
    return batches;
}

GradientResult compute_gradients(const EncoderParams& params, const Cohort& cohort,
                                 const std::vector<std::size_t>& batch, const Objective& objective) {
    GradientResult r{params.zeros_like(), {}, 0.0, 0.0};
    std::vector<SubjectTape> tapes;
    tapes.reserve(batch.size());
    for (std::size_t idx : batch) tapes.push_back(forward_subject(cohort.subjects.at(idx), params));

    std::vector<EmbeddingGrad> de;
    if (objective.kind == Objective::Kind::contrastive) {
        BatchView view;
        view.indices = batch;
        view.temperature = objective.temperature;
        view.modalities = params.shape.active;
        view.denominator_includes_positive = objective.denominator_includes_positive;
        for (std::size_t s = 0; s < batch.size(); ++s) {
            view.embeddings.push_back(tapes[s].embeddings);
            view.labels.push_back(cohort.subjects[batch[s]].label);
        }
        r.contrastive = contrastive_loss_with_grad(view, objective.weights, de);
        r.value = r.contrastive.total;
    } else {
        std::vector<EmbeddingSet> emb;
        std::vector<int> labels;
        for (std::size_t s = 0; s < batch.size(); ++s) {
            emb.push_back(tapes[s].embeddings);
            labels.push_back(cohort.subjects[batch[s]].label);
        }
        r.ce = head_loss(emb, labels, params, objective.class_weights, &r.grads, &de);
        r.value = r.ce;
    }
    if (!std::isfinite(r.value)) throw NumericError("non-finite objective value");
    // Subjects are accumulated in batch order so results do not depend on
    // the thread count.
    for (std::size_t s = 0; s < batch.size(); ++s)
        backward_subject(cohort.subjects[batch[s]], params, tapes[s], de[s], r.grads);
    require_finite(r.grads);
    return r;
}

double evaluate_objective(const EncoderParams& params, const Cohort& cohort, const std::vector<std::size_t>& batch,
                          const Objective& objective) {
    std::vector<EmbeddingSet> emb;
    std::vector<int> labels;
    for (std::size_t idx : batch) {
        emb.push_back(encode_subject(cohort.subjects.at(idx), params));
        labels.push_back(cohort.subjects[idx].label);
    }
    if (objective.kind == Objective::Kind::weighted_ce)
        return head_loss(emb, labels, params, objective.class_weights, nullptr, nullptr);
    BatchView view;
    view.indices = batch;
    view.embeddings = std::move(emb);
    view.labels = std::move(labels);
    view.temperature = objective.temperature;
    view.modalities = params.shape.active;
    view.denominator_includes_positive = objective.denominator_includes_positive;
    std::vector<EmbeddingGrad> unused;
    return contrastive_loss_with_grad(view, objective.weights, unused).total;
}

TrainedModel pretrain(const Cohort& train, const TrainConfig& config, const ModelShape& shape) {
    return pretrain(train, config, init_params(shape, derive_seed(config.seed, 1)));
}

TrainedModel pretrain(const Cohort& train, const TrainConfig& config, EncoderParams initial) {
    validate(config);
    TrainedModel model;
    model.params = std::move(initial);
    if (config.pretrain_epochs == 0) return model;
    require_both_classes(train, 2, "pretraining");
    if (config.objective != PretrainObjective::css_only && model.params.shape.active.count() < 2)
        throw ContractError("the cross-modality term needs at least 2 modalities; use the css_only objective");

    Objective objective;
    objective.weights = config.objective_weights();
    objective.temperature = config.temperature;
    objective.denominator_includes_positive = config.denominator_includes_positive;

    AdamW opt(model.params, config.learning_rate, config.weight_decay, config.adam_beta1, config.adam_beta2,
              config.adam_epsilon);
    std::mt19937_64 rng(derive_seed(config.seed, 2));
    const auto labels = train.labels();
    const auto all = iota_indices(train.size());
    for (std::size_t epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
        EpochRecord rec;
        rec.stage = "pretrain";
        rec.epoch = epoch;
        const auto batches = stratified_batches(all, labels, config.batch_size, rng);
        for (const auto& b : batches) {
            GradientResult g;
            try {
                g = compute_gradients(model.params, train, b, objective);
            } catch (const NumericError& e) {
                throw TrainingDiverged("pretraining diverged at epoch " + std::to_string(epoch) + ": " + e.what(),
                                       model.params);
            }
            rec.loss_total += g.contrastive.total;
            rec.loss_cmc += g.contrastive.cmc;
            rec.loss_css += g.contrastive.css;
            if (g.contrastive.css_degenerate) ++rec.css_degenerate_batches;
            opt.step(model.params, g.grads);
        }
        const double nb = static_cast<double>(batches.size());
        rec.loss_total /= nb;
        rec.loss_cmc /= nb;
        rec.loss_css /= nb;
        model.history.push_back(rec);
    }
    return model;
}

namespace {

double validation_loss(const EncoderParams& params, const std::vector<EmbeddingSet>* cached,
                       const Cohort& validation, const std::array<double, 2>& weights) {
    std::vector<EmbeddingSet> emb =
        cached ? *cached : encode_batch(validation, iota_indices(validation.size()), params);
    return head_loss(emb, validation.labels(), params, weights, nullptr, nullptr);
}

}  // namespace

TrainedModel finetune(const TrainedModel& pretrained, const Cohort& train, const Cohort& validation,
                      const TrainConfig& config) {
    validate(config);
    if (validation.size() == 0) throw ContractError("fine-tuning needs a non-empty validation split");
    if (train.size() == 0) throw ContractError("fine-tuning needs a non-empty training split");
    if (!(pretrained.params.shape.dims == train.dims))
        throw ShapeError("pretrained model dimensions do not match the training cohort");

    TrainedModel model;
    model.params = pretrained.params;
    reset_fusion_head(model.params, derive_seed(config.seed, 3));
    if (config.finetune_epochs == 0) return model;

    const auto labels = train.labels();
    const auto class_weights = inverse_frequency_weights(labels);
    const Objective objective = Objective::weighted_ce(class_weights);
    AdamW opt(model.params, config.learning_rate, config.weight_decay, config.adam_beta1, config.adam_beta2,
              config.adam_epsilon);
    std::mt19937_64 rng(derive_seed(config.seed, 4));
    const auto all = iota_indices(train.size());

    // Frozen encoders: embeddings never change, so encode once.
    std::vector<EmbeddingSet> train_emb, val_emb;
    if (config.freeze_encoders) {
        train_emb = encode_batch(train, all, model.params);
        val_emb = encode_batch(validation, iota_indices(validation.size()), model.params);
    }

    EncoderParams best = model.params;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 1; epoch <= config.finetune_epochs; ++epoch) {
        EpochRecord rec;
        rec.stage = "finetune";
        rec.epoch = epoch;
        double ce = 0.0;
        const auto batches = stratified_batches(all, labels, config.batch_size, rng);
        for (const auto& b : batches) {
            if (config.freeze_encoders) {
                EncoderParams grads = model.params.zeros_like();
                std::vector<EmbeddingSet> emb;
                std::vector<int> y;
                for (std::size_t i : b) {
                    emb.push_back(train_emb[i]);
                    y.push_back(labels[i]);
                }
                ce += head_loss(emb, y, model.params, class_weights, &grads, nullptr);
                opt.step_fusion(model.params, grads);
            } else {
                GradientResult g;
                try {
                    g = compute_gradients(model.params, train, b, objective);
                } catch (const NumericError& e) {
                    throw TrainingDiverged("fine-tuning diverged at epoch " + std::to_string(epoch) + ": " + e.what(),
                                           model.params);
                }
                ce += g.ce;
                opt.step(model.params, g.grads);
            }
        }
        rec.loss_ce = ce / static_cast<double>(batches.size());
        rec.loss_total = *rec.loss_ce;
        rec.val_loss = validation_loss(model.params, config.freeze_encoders ? &val_emb : nullptr, validation,
                                       class_weights);
        if (*rec.val_loss < best_val) {
            best_val = *rec.val_loss;
            best = model.params;
            model.best_epoch = epoch;
        }
        model.history.push_back(rec);
    }
    model.params = std::move(best);
    return model;
}

std::vector<double> predict_positive(const EncoderParams& params, const Cohort& cohort) {
    const auto emb = encode_batch(cohort, iota_indices(cohort.size()), params);
    std::vector<double> out;
    out.reserve(emb.size());
    for (const auto& e : emb) out.push_back(fuse_and_classify(e, params)[1]);
    return out;
}

std::string epoch_record_json(const EpochRecord& r) {
    nlohmann::ordered_json j;
    j["stage"] = r.stage;
    j["epoch"] = r.epoch;
    j["loss_total"] = r.loss_total;
    if (r.stage == "pretrain") {
        j["loss_cmc"] = r.loss_cmc;
        j["loss_css"] = r.loss_css;
    } else {
        j["loss_cmc"] = nullptr;
        j["loss_css"] = nullptr;
    }
    j["loss_ce"] = r.loss_ce ? nlohmann::ordered_json(*r.loss_ce) : nlohmann::ordered_json(nullptr);
    j["val_loss"] = r.val_loss ? nlohmann::ordered_json(*r.val_loss) : nlohmann::ordered_json(nullptr);
    return j.dump();
}

}  // namespace cmcss
