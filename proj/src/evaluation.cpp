#include "cmcss/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "cmcss/error.hpp"
#include "cmcss/folds.hpp"

namespace cmcss {

using nlohmann::ordered_json;

namespace {

const char* const kMetrics[] = {"ba", "auc", "sen", "spe"};

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

FoldResult run_fold(const Cohort& cohort, const HarnessConfig& config, const FoldPlan& plan, std::size_t repeat,
                    std::size_t fold, std::vector<SubjectScore>& scores) {
    const auto labels = cohort.labels();
    const Split split = plan.split(labels, repeat, fold);
    const Cohort train = cohort.subset(split.train);
    const Cohort validation = cohort.subset(split.validation);
    const Cohort test = cohort.subset(split.test);

    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, 1000 + repeat * config.k + fold);
    const ModelShape shape = config.architecture.shape_for(cohort.dims, config.modalities);

    TrainedModel pretrained;
    if (config.contrastive_pretraining) {
        pretrained = pretrain(train, tc, shape);
    } else {
        pretrained.params = init_params(shape, derive_seed(tc.seed, 1));
    }
    const TrainedModel tuned = finetune(pretrained, train, validation, tc);
    const auto probs = predict_positive(tuned.params, test);

    FoldResult r;
    r.repeat = repeat;
    r.fold = fold;
    r.metrics = compute_metrics(test.labels(), probs);
    r.n_test = test.size();
    r.best_epoch = tuned.best_epoch;
    r.pretrain_final_loss = pretrained.history.empty() ? 0.0 : pretrained.history.back().loss_total;
    for (const auto& h : tuned.history)
        if (h.epoch == tuned.best_epoch && h.val_loss) r.best_val_loss = *h.val_loss;
    for (std::size_t i = 0; i < test.size(); ++i)
        scores.push_back({test.subjects[i].subject_id, repeat, test.subjects[i].label, probs[i]});
    return r;
}

ordered_json summary_json(const EvalReport& r) {
    ordered_json s;
    for (const char* m : kMetrics) {
        const auto sum = r.summary(m);
        s[m] = {{"mean", sum.mean}, {"sd", sum.sd}};
    }
    return s;
}

}  // namespace

ModelShape ArchitectureConfig::shape_for(const CohortDims& dims, const ModalitySet& active) const {
    ModelShape s;
    s.dims = dims;
    s.reduce_width = reduce_width;
    s.hidden1 = hidden1;
    s.hidden2 = hidden2;
    s.feature_width = feature_width;
    s.embed_dim = embed_dim;
    s.conv_channels = conv_channels;
    s.active = active;
    return s;
}

ordered_json to_json(const HarnessConfig& c) {
    ordered_json j;
    j["method"] = c.method;
    j["k"] = c.k;
    j["repeats"] = c.repeats;
    j["inner_val_fraction"] = c.inner_val_fraction;
    j["seed"] = c.seed;
    j["contrastive_pretraining"] = c.contrastive_pretraining;
    j["modalities"] = c.modalities.names();
    const auto& t = c.train;
    j["train"] = {{"batch_size", t.batch_size},
                  {"pretrain_epochs", t.pretrain_epochs},
                  {"finetune_epochs", t.finetune_epochs},
                  {"learning_rate", t.learning_rate},
                  {"weight_decay", t.weight_decay},
                  {"lambda", t.lambda},
                  {"temperature", t.temperature},
                  {"objective", std::string(objective_name(t.objective))},
                  {"denominator_includes_positive", t.denominator_includes_positive}};
    const auto& a = c.architecture;
    j["architecture"] = {{"reduce_width", a.reduce_width}, {"hidden1", a.hidden1},
                         {"hidden2", a.hidden2},           {"feature_width", a.feature_width},
                         {"embed_dim", a.embed_dim},       {"conv_channels", a.conv_channels}};
    return j;
}

double metric_value(const MetricSet& m, const std::string& metric) {
    if (metric == "ba") return m.ba;
    if (metric == "auc") return m.auc;
    if (metric == "sen") return m.sen;
    if (metric == "spe") return m.spe;
    throw ContractError("unknown metric '" + metric + "'");
}

std::vector<double> EvalReport::values(const std::string& metric) const {
    std::vector<double> v;
    v.reserve(folds.size());
    for (const auto& f : folds) v.push_back(metric_value(f.metrics, metric));
    return v;
}

MetricSummary EvalReport::summary(const std::string& metric) const {
    const auto v = values(metric);
    return {mean(v), stddev(v)};
}

ordered_json EvalReport::to_json(bool with_timestamp) const {
    ordered_json j;
    j["method"] = method;
    j["config"] = config;
    j["summary"] = summary_json(*this);
    j["folds"] = ordered_json::array();
    for (const auto& f : folds) {
        j["folds"].push_back({{"repeat", f.repeat},
                              {"fold", f.fold},
                              {"ba", f.metrics.ba},
                              {"auc", f.metrics.auc},
                              {"sen", f.metrics.sen},
                              {"spe", f.metrics.spe},
                              {"n_test", f.n_test},
                              {"best_epoch", f.best_epoch},
                              {"pretrain_final_loss", f.pretrain_final_loss},
                              {"best_val_loss", f.best_val_loss}});
    }
    j["comparisons"] = ordered_json::array();
    for (const auto& c : comparisons)
        j["comparisons"].push_back(
            {{"method_a", c.method_a}, {"method_b", c.method_b}, {"metric", c.metric}, {"p_value", c.p_value}});
    j["scores"] = ordered_json::array();
    for (const auto& s : scores)
        j["scores"].push_back({{"subject_id", s.subject_id}, {"repeat", s.repeat}, {"label", s.label}, {"score", s.score}});
    if (with_timestamp) j["generated_at"] = utc_timestamp();
    return j;
}

EvalReport cross_validate(const Cohort& cohort, const HarnessConfig& config) {
    const FoldPlan plan = stratified_folds(cohort, config.k, config.repeats, config.inner_val_fraction, config.seed);
    const std::size_t jobs = config.k * config.repeats;
    std::vector<FoldResult> results(jobs);
    std::vector<std::vector<SubjectScore>> scores(jobs);
    std::exception_ptr failure;
    const int workers = static_cast<int>(std::max<std::size_t>(1, config.max_workers));
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (long job = 0; job < static_cast<long>(jobs); ++job) {
        const auto j = static_cast<std::size_t>(job);
        try {
            results[j] = run_fold(cohort, config, plan, j / config.k, j % config.k, scores[j]);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    EvalReport report;
    report.method = config.method;
    report.config = to_json(config);
    report.folds = std::move(results);
    for (auto& s : scores) report.scores.insert(report.scores.end(), s.begin(), s.end());
    return report;
}

Comparison compare_reports(const EvalReport& a, const EvalReport& b, const std::string& metric) {
    std::map<std::pair<std::size_t, std::size_t>, double> bv;
    for (const auto& f : b.folds) bv[{f.repeat, f.fold}] = metric_value(f.metrics, metric);
    std::vector<double> xa, xb;
    for (const auto& f : a.folds) {
        auto it = bv.find({f.repeat, f.fold});
        if (it == bv.end()) continue;
        xa.push_back(metric_value(f.metrics, metric));
        xb.push_back(it->second);
    }
    return {a.method, b.method, metric, wilcoxon_signed_rank(xa, xb).p_value};
}

std::string AblationTable::to_csv() const {
    std::ostringstream out;
    out << key_column;
    for (const char* m : kMetrics) out << ',' << m << "_mean," << m << "_sd";
    out << '\n';
    for (const auto& row : rows) {
        out << row.label;
        for (const char* m : kMetrics) {
            const auto s = row.report.summary(m);
            out << ',' << fmt(s.mean) << ',' << fmt(s.sd);
        }
        out << '\n';
    }
    return out.str();
}

ordered_json AblationTable::to_json(bool with_timestamp) const {
    ordered_json j;
    j["table"] = name;
    j["key_column"] = key_column;
    j["rows"] = ordered_json::array();
    for (const auto& row : rows) {
        ordered_json r;
        r[key_column] = row.label;
        r["summary"] = summary_json(row.report);
        r["report"] = row.report.to_json(false);
        j["rows"].push_back(std::move(r));
    }
    if (with_timestamp) j["generated_at"] = utc_timestamp();
    return j;
}

namespace {

std::string lambda_label(double l) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", l);
    return buf;
}

}  // namespace

AblationTable ablate_lambda(const Cohort& cohort, const std::vector<double>& lambdas, const HarnessConfig& config) {
    if (lambdas.empty()) throw ConfigError("lambda grid must not be empty");
    AblationTable t{"lambda", "lambda", {}};
    for (double l : lambdas) {
        if (!(l >= 0.0)) throw ConfigError("lambda values must be non-negative");
        HarnessConfig c = config;
        c.train.lambda = l;
        c.train.objective = PretrainObjective::joint;
        c.method = "lambda=" + lambda_label(l);
        t.rows.push_back({lambda_label(l), cross_validate(cohort, c)});
    }
    return t;
}

AblationTable ablate_loss_components(const Cohort& cohort, const HarnessConfig& config) {
    AblationTable t{"loss_components", "loss", {}};
    const std::pair<const char*, PretrainObjective> variants[] = {{"cmc_only", PretrainObjective::cmc_only},
                                                                  {"css_only", PretrainObjective::css_only},
                                                                  {"joint", PretrainObjective::joint}};
    for (const auto& [label, objective] : variants) {
        HarnessConfig c = config;
        c.train.objective = objective;
        c.train.lambda = 1.0;
        c.method = label;
        t.rows.push_back({label, cross_validate(cohort, c)});
    }
    // The signed-rank test needs at least 6 matched folds.
    if (t.rows.back().report.folds.size() >= kMinWilcoxonPairs)
        for (std::size_t i = 0; i + 1 < t.rows.size(); ++i)
            t.rows.back().report.comparisons.push_back(compare_reports(t.rows.back().report, t.rows[i].report, "ba"));
    return t;
}

AblationTable ablate_modality(const Cohort& cohort, ModalityAblation mode, const HarnessConfig& config) {
    AblationTable t;
    if (mode == ModalityAblation::drop_one) {
        t = {"modality_drop_one", "removed", {}};
        HarnessConfig full = config;
        full.modalities = ModalitySet::all();
        full.method = "all";
        t.rows.push_back({"all", cross_validate(cohort, full)});
        for (Modality m : kAllModalities) {
            HarnessConfig c = config;
            c.modalities = ModalitySet::all_but(m);
            c.method = "drop_" + std::string(modality_name(m));
            t.rows.push_back({std::string(modality_name(m)), cross_validate(cohort, c)});
        }
        return t;
    }
    if (config.train.objective == PretrainObjective::cmc_only)
        throw ContractError("the cross-modality loss needs at least 2 modalities; only_one runs the same-outcome loss");
    t = {"modality_only_one", "modality", {}};
    for (Modality m : kAllModalities) {
        HarnessConfig c = config;
        c.modalities = ModalitySet::only(m);
        c.train.objective = PretrainObjective::css_only;
        c.method = "only_" + std::string(modality_name(m));
        t.rows.push_back({std::string(modality_name(m)), cross_validate(cohort, c)});
    }
    return t;
}

EvalReport baseline_concat(const Cohort& cohort, const HarnessConfig& config) {
    HarnessConfig c = config;
    c.contrastive_pretraining = false;
    c.method = "concat_baseline";
    return cross_validate(cohort, c);
}

std::string embeddings_csv(const EncoderParams& params, const Cohort& cohort) {
    std::vector<std::size_t> all(cohort.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto emb = encode_batch(cohort, all, params);
    std::ostringstream out;
    out << "subject_id,modality,label";
    for (std::size_t e = 0; e < params.shape.embed_dim; ++e) out << ",e" << e;
    out << '\n';
    char buf[32];
    for (std::size_t s = 0; s < cohort.size(); ++s) {
        for (Modality m : params.shape.active.members()) {
            out << cohort.subjects[s].subject_id << ',' << modality_name(m) << ',' << cohort.subjects[s].label;
            for (double v : emb[s][m]) {
                std::snprintf(buf, sizeof buf, "%.9g", v);
                out << ',' << buf;
            }
            out << '\n';
        }
    }
    return out.str();
}

void export_embeddings(const EncoderParams& params, const Cohort& cohort, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << embeddings_csv(params, cohort);
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace cmcss
